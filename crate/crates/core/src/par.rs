//! Data-parallel helpers for the grid loops.
//!
//! With the `parallel` feature (default) `map_indexed` fans out over rayon;
//! without it the same closure runs on the calling thread. `map_indexed_seq`
//! is always sequential so benchmarks can compare both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to `0..len`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}

/// Applies `f` to `0..len`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Sequential reference implementation of [`map_indexed`].
pub fn map_indexed_seq<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; returns the first error encountered.
#[cfg(feature = "parallel")]
pub fn try_map_indexed<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}

/// Fallible variant of [`map_indexed`]; returns the first error encountered.
#[cfg(not(feature = "parallel"))]
pub fn try_map_indexed<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let a = map_indexed(257, |i| i * i);
        let b = map_indexed_seq(257, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn try_map_propagates_errors() {
        let r: Result<Vec<usize>, &str> = try_map_indexed(10, |i| if i == 7 { Err("boom") } else { Ok(i) });
        assert_eq!(r, Err("boom"));
    }
}

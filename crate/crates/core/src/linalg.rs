//! Bridges between the small-matrix domain types (nalgebra, complex) and the
//! large real factorizations that back the kernel and least-squares solves
//! (faer).

use faer::prelude::SolveLstsq;
use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Singular values of a complex matrix, descending.
pub fn complex_singular_values(a: &DMatrix<C64>) -> Vec<f64> {
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Rank with a relative singular-value tolerance.
pub fn complex_rank(a: &DMatrix<C64>, rel_tol: f64) -> usize {
    let s = complex_singular_values(a);
    match s.first() {
        None => 0,
        Some(&s0) if s0 <= 0.0 => 0,
        Some(&s0) => s.iter().filter(|&&x| x > rel_tol * s0).count(),
    }
}

/// Cheap operator-norm scale estimate (Frobenius norm).
pub fn complex_op_norm_estimate(a: &DMatrix<C64>) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Singular values of a real matrix, descending, with a rank verdict.
pub fn real_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Dense real least-squares factorization, reusable across right-hand sides.
pub struct Lstsq {
    qr: faer::linalg::solvers::Qr<f64>,
    rows: usize,
    cols: usize,
}

impl Lstsq {
    pub fn new(a: &Mat<f64>) -> Self {
        Self { qr: a.qr(), rows: a.nrows(), cols: a.ncols() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Minimum-norm-residual solution of `min |A x - b|_2`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.rows);
        let rhs = Mat::from_fn(self.rows, 1, |i, _| b[i]);
        let x = self.qr.solve_lstsq(&rhs);
        (0..self.cols).map(|i| x[(i, 0)]).collect()
    }

    /// Condition estimate from the R factor diagonal.
    pub fn condition_estimate(&self) -> f64 {
        let r = self.qr.thin_R();
        let k = r.nrows().min(r.ncols());
        let mut max = 0.0_f64;
        let mut min = f64::INFINITY;
        for i in 0..k {
            let v = r[(i, i)].abs();
            max = max.max(v);
            min = min.min(v);
        }
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Outcome of a null-space extraction by singular value decomposition.
pub struct Nullspace {
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Ratio across the gap that separates the kernel cluster.
    pub gap_ratio: f64,
    /// Orthonormal kernel basis, one `Vec<f64>` per vector.
    pub basis: Vec<Vec<f64>>,
}

/// Null space of a real matrix with singular-value gap detection.
///
/// The kernel cluster is the trailing group of singular values below
/// `abs_floor_rel * sigma_max` separated from the rest by a ratio of at
/// least `gap_min`; if no such split exists and the trailing value is not
/// tiny the kernel is empty.
pub fn nullspace(a: &Mat<f64>, gap_min: f64, abs_floor_rel: f64) -> Result<Nullspace> {
    let svd = a.thin_svd().map_err(|e| Error::InvalidArgument(format!("svd failed: {e:?}")))?;
    let k = a.nrows().min(a.ncols());
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let s0 = s.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);

    // The kernel cluster is everything below the floor; the gap is measured
    // where the spectrum crosses it.
    let floor = abs_floor_rel * s0;
    let first_tiny = s.iter().position(|&x| x <= floor);
    let (split, gap_ratio) = match first_tiny {
        None => {
            return Ok(Nullspace { singular_values: s, gap_ratio: f64::INFINITY, basis: Vec::new() })
        }
        Some(0) => (0, f64::INFINITY),
        Some(j) => {
            let ratio = if s[j] == 0.0 { f64::INFINITY } else { s[j - 1] / s[j] };
            if ratio < gap_min {
                return Err(Error::KernelDimensionAmbiguous { ratio });
            }
            (j, ratio)
        }
    };

    let v = svd.V();
    let dim = k - split;
    let basis = (0..dim)
        .map(|t| {
            let col = split + t;
            (0..a.ncols()).map(|i| v[(i, col)]).collect()
        })
        .collect();
    Ok(Nullspace { singular_values: s, gap_ratio, basis })
}

/// Orthonormalizes the rows-as-vectors by modified Gram-Schmidt.
///
/// Returns an error when the input is numerically rank-deficient.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let dot: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale.max(1e-300) {
            return Err(Error::InvalidArgument(
                "vectors are numerically dependent; cannot orthonormalize".into(),
            ));
        }
        w.iter_mut().for_each(|x| *x /= norm);
        out.push(w);
    }
    Ok(out)
}

/// Principal angles (radians, ascending) between the spans of two vector
/// families living in the same coordinate space.
pub fn principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty subspace".into()));
    }
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    let m = DMatrix::<f64>::from_fn(qa.len(), qb.len(), |i, j| {
        qa[i].iter().zip(&qb[j]).map(|(x, y)| x * y).sum()
    });
    let mut cosines = real_singular_values(&m);
    for c in &mut cosines {
        *c = c.clamp(-1.0, 1.0);
    }
    let mut angles: Vec<f64> = cosines.iter().map(|c| c.acos()).collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

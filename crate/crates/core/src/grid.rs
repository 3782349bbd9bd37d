//! Uniform boundary grids on the unit circle and discrete Fourier helpers.

use num_complex::Complex64 as C64;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Uniform grid of `m` roots of unity on the boundary of the unit disc.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    points: Vec<C64>,
}

impl BoundaryGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidArgument(format!("grid size {m} < 4")));
        }
        let points = (0..m)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                C64::new(theta.cos(), theta.sin())
            })
            .collect();
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> C64 {
        self.points[i]
    }

    pub fn theta(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * i as f64 / self.len() as f64
    }
}

/// Forward DFT normalized so that output index `k` holds the Fourier
/// coefficient of mode `k` for `k <= m/2` and of mode `k - m` above.
pub fn dft_forward(samples: &[C64]) -> Vec<C64> {
    let m = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.to_vec();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    buf.into_iter().map(|c| c * scale).collect()
}

/// Signed frequency of DFT bin `k` in a length-`m` transform.
pub fn bin_frequency(k: usize, m: usize) -> i64 {
    if k <= m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

/// l2 mass of strictly negative Fourier modes of a sampled boundary function.
pub fn negative_mode_mass(samples: &[C64]) -> f64 {
    let m = samples.len();
    dft_forward(samples)
        .iter()
        .enumerate()
        .filter(|(k, _)| bin_frequency(*k, m) < 0)
        .map(|(_, c)| c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Power-series coefficients 0..=n_max recovered from boundary samples.
///
/// Exact for polynomials of degree < m/2 sampled on the uniform grid.
pub fn coefficients_from_samples(samples: &[C64], n_max: usize) -> Vec<C64> {
    let m = samples.len();
    let dft = dft_forward(samples);
    (0..=n_max.min(m.saturating_sub(1)))
        .map(|k| dft[k])
        .collect()
}

//! Vector-valued analytic discs as truncated power series on the closed unit
//! disc, with boundary-grid evaluation, discrete Hölder norms, jets, and the
//! (1 - zeta)-factored spaces used for pointwise constraints.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, BoundaryGrid};
use crate::par;

/// Default power-series truncation degree.
pub const DEFAULT_TRUNCATION: usize = 64;
/// Default boundary grid size (4x oversampling of the truncation).
pub const DEFAULT_GRID: usize = 256;
/// Default Hölder exponent.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// A vector-valued analytic disc stored as power-series coefficients in zeta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDisc {
    /// Per-component coefficients in ascending powers of zeta.
    coeffs: Vec<Vec<C64>>,
    /// Boundary grid size used for sampled diagnostics.
    grid_m: usize,
}

impl AnalyticDisc {
    pub fn new(coeffs: Vec<Vec<C64>>, grid_m: usize) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("disc needs at least one component".into()));
        }
        let len = coeffs[0].len();
        if len == 0 || coeffs.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidArgument(
                "disc components must share a nonzero coefficient length".into(),
            ));
        }
        if grid_m < 4 {
            return Err(Error::InvalidArgument(format!("grid size {grid_m} < 4")));
        }
        Ok(Self { coeffs, grid_m })
    }

    /// Constant disc with the given value.
    pub fn constant(value: &[C64], grid_m: usize) -> Result<Self> {
        Self::new(value.iter().map(|v| vec![*v]).collect(), grid_m)
    }

    pub fn zero(components: usize, grid_m: usize) -> Result<Self> {
        Self::constant(&vec![C64::new(0.0, 0.0); components], grid_m)
    }

    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    /// Truncation degree N_F (highest stored power).
    pub fn degree(&self) -> usize {
        self.coeffs[0].len() - 1
    }

    pub fn grid_m(&self) -> usize {
        self.grid_m
    }

    pub fn coefficients(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    pub fn coefficient(&self, component: usize, power: usize) -> C64 {
        self.coeffs[component].get(power).copied().unwrap_or_default()
    }

    /// Horner evaluation at a point of the closed disc.
    pub fn eval(&self, zeta: C64) -> Result<Vec<C64>> {
        if zeta.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "evaluation point |zeta| = {} lies outside the closed disc",
                zeta.norm()
            )));
        }
        Ok(self.eval_unchecked(zeta))
    }

    pub(crate) fn eval_unchecked(&self, zeta: C64) -> Vec<C64> {
        self.coeffs
            .iter()
            .map(|c| {
                let mut acc = C64::new(0.0, 0.0);
                for &a in c.iter().rev() {
                    acc = acc * zeta + a;
                }
                acc
            })
            .collect()
    }

    /// Coefficient shift: d/dzeta of the series.
    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                if c.len() == 1 {
                    vec![C64::new(0.0, 0.0)]
                } else {
                    c.iter()
                        .enumerate()
                        .skip(1)
                        .map(|(q, a)| a * q as f64)
                        .collect()
                }
            })
            .collect();
        Self { coeffs, grid_m: self.grid_m }
    }

    /// Boundary samples on the uniform grid, component-major.
    pub fn boundary_samples(&self) -> Result<Vec<Vec<C64>>> {
        let g = BoundaryGrid::new(self.grid_m)?;
        Ok((0..self.components())
            .map(|c| g.points().iter().map(|&z| self.eval_component(c, z)).collect())
            .collect())
    }

    fn eval_component(&self, component: usize, zeta: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &a in self.coeffs[component].iter().rev() {
            acc = acc * zeta + a;
        }
        acc
    }

    /// Componentwise linear combination `a*self + b*other` (real scalars).
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.components() != other.components() {
            return Err(Error::InvalidArgument("component mismatch".into()));
        }
        let len = self.coeffs[0].len().max(other.coeffs[0].len());
        let coeffs = (0..self.components())
            .map(|c| {
                (0..len)
                    .map(|q| self.coefficient(c, q) * a + other.coefficient(c, q) * b)
                    .collect()
            })
            .collect();
        Self::new(coeffs, self.grid_m)
    }

    /// `zeta^0` mass check is not needed; holomorphy is structural. This
    /// recomputes the boundary DFT and reports residual negative-mode mass,
    /// which should be ~0 up to rounding for any stored disc.
    pub fn holomorphy_defect(&self) -> Result<f64> {
        let samples = self.boundary_samples()?;
        Ok(negative_mode_defect(&samples))
    }

    /// Serializes coefficients to a JSON string.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("disc serialization cannot fail")
    }

    /// Writes the boundary trace as CSV with columns (theta, component, re, im).
    pub fn boundary_csv(&self) -> Result<String> {
        let g = BoundaryGrid::new(self.grid_m)?;
        let mut out = String::from("theta,component,re,im\n");
        for (i, &z) in g.points().iter().enumerate() {
            let v = self.eval_unchecked(z);
            for (c, val) in v.iter().enumerate() {
                out.push_str(&format!("{:.17e},{},{:.17e},{:.17e}\n", g.theta(i), c, val.re, val.im));
            }
        }
        Ok(out)
    }
}

/// A disc of the form `(1 - zeta) * u`, stored through its cofactor `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredDisc {
    cofactor: AnalyticDisc,
}

impl FactoredDisc {
    pub fn new(cofactor: AnalyticDisc) -> Self {
        Self { cofactor }
    }

    pub fn cofactor(&self) -> &AnalyticDisc {
        &self.cofactor
    }

    /// Expands `(1 - zeta) * u` exactly in coefficient space.
    pub fn realize(&self) -> AnalyticDisc {
        let u = &self.cofactor;
        let deg = u.degree();
        let coeffs = (0..u.components())
            .map(|c| {
                let mut out = vec![C64::new(0.0, 0.0); deg + 2];
                for q in 0..=deg {
                    let a = u.coefficient(c, q);
                    out[q] += a;
                    out[q + 1] -= a;
                }
                out
            })
            .collect();
        AnalyticDisc { coeffs, grid_m: u.grid_m }
    }

    /// Recovers the cofactor of a disc known to vanish at zeta = 1.
    ///
    /// Exact synthetic division by (1 - zeta); errors if the remainder is
    /// above tolerance.
    pub fn from_realized(disc: &AnalyticDisc, tol: f64) -> Result<Self> {
        let deg = disc.degree();
        let mut coeffs = Vec::with_capacity(disc.components());
        for c in 0..disc.components() {
            // p(zeta) = (1 - zeta) u(zeta): u_q = p_q + u_{q-1}, remainder u_deg.
            let mut u = vec![C64::new(0.0, 0.0); deg.max(1)];
            let mut carry = C64::new(0.0, 0.0);
            for q in 0..deg {
                carry = disc.coefficient(c, q) + carry;
                u[q] = carry;
            }
            let remainder = disc.coefficient(c, deg) + carry;
            if remainder.norm() > tol {
                return Err(Error::InvalidArgument(format!(
                    "disc does not vanish at zeta = 1 (remainder {:.3e})",
                    remainder.norm()
                )));
            }
            coeffs.push(u);
        }
        Ok(Self { cofactor: AnalyticDisc { coeffs, grid_m: disc.grid_m } })
    }
}

/// A lifted disc (h, g, h~, g~) in C^n x C^d x C^n x C^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedDisc {
    pub h: AnalyticDisc,
    pub g: AnalyticDisc,
    pub ht: AnalyticDisc,
    pub gt: AnalyticDisc,
}

impl LiftedDisc {
    pub fn new(h: AnalyticDisc, g: AnalyticDisc, ht: AnalyticDisc, gt: AnalyticDisc) -> Result<Self> {
        if h.components() != ht.components() || g.components() != gt.components() {
            return Err(Error::InvalidArgument(
                "lift components must pair up as (n, d, n, d)".into(),
            ));
        }
        Ok(Self { h, g, ht, gt })
    }

    pub fn n(&self) -> usize {
        self.h.components()
    }

    pub fn d(&self) -> usize {
        self.g.components()
    }

    pub fn grid_m(&self) -> usize {
        self.h.grid_m()
    }

    /// Values of all 2n+2d components at a point, in the order (h, g, h~, g~).
    pub fn eval_stacked(&self, zeta: C64) -> Vec<C64> {
        let mut out = self.h.eval_unchecked(zeta);
        out.extend(self.g.eval_unchecked(zeta));
        out.extend(self.ht.eval_unchecked(zeta));
        out.extend(self.gt.eval_unchecked(zeta));
        out
    }

    /// Linear combination, componentwise over all four parts.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        Ok(Self {
            h: self.h.linear_combination(a, &other.h, b)?,
            g: self.g.linear_combination(a, &other.g, b)?,
            ht: self.ht.linear_combination(a, &other.ht, b)?,
            gt: self.gt.linear_combination(a, &other.gt, b)?,
        })
    }

    /// Flattens every coefficient (ordered h, g, h~, g~; ascending powers up
    /// to `n_f`) into a real vector (Re, Im interleaved).
    pub fn flatten_real(&self, n_f: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * (self.n() * 2 + self.d() * 2) * (n_f + 1));
        for part in [&self.h, &self.g, &self.ht, &self.gt] {
            for c in 0..part.components() {
                for q in 0..=n_f {
                    let a = part.coefficient(c, q);
                    out.push(a.re);
                    out.push(a.im);
                }
            }
        }
        out
    }
}

/// The 1-jet of a lift at zeta = 1: values then first derivatives, each in
/// the order (h, g, h~, g~).
pub fn jet1_at_one(lift: &LiftedDisc) -> Vec<C64> {
    let one = C64::new(1.0, 0.0);
    let mut out = lift.eval_stacked(one);
    let d = LiftedDisc {
        h: lift.h.derivative(),
        g: lift.g.derivative(),
        ht: lift.ht.derivative(),
        gt: lift.gt.derivative(),
    };
    out.extend(d.eval_stacked(one));
    out
}

/// An element of the constrained affine family: four (1 - zeta)-factored
/// parts plus the fixed shift `(zeta / 2) c` on the g~ component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedLift {
    pub hf: FactoredDisc,
    pub gf: FactoredDisc,
    pub htf: FactoredDisc,
    pub gtf: FactoredDisc,
    /// Real shift vector c; the realized g~ is `(1 - zeta) g~' + (zeta/2) c`.
    pub shift: Vec<f64>,
}

impl ConstrainedLift {
    pub fn new(
        hf: FactoredDisc,
        gf: FactoredDisc,
        htf: FactoredDisc,
        gtf: FactoredDisc,
        shift: Vec<f64>,
    ) -> Result<Self> {
        if gf.cofactor().components() != shift.len() || gtf.cofactor().components() != shift.len() {
            return Err(Error::InvalidArgument("shift length must equal d".into()));
        }
        if hf.cofactor().components() != htf.cofactor().components() {
            return Err(Error::InvalidArgument("h and h~ must share n".into()));
        }
        Ok(Self { hf, gf, htf, gtf, shift })
    }

    pub fn n(&self) -> usize {
        self.hf.cofactor().components()
    }

    pub fn d(&self) -> usize {
        self.shift.len()
    }

    pub fn grid_m(&self) -> usize {
        self.hf.cofactor().grid_m()
    }

    /// Realizes the lift, expanding the factored parts and adding the shift.
    pub fn realize(&self) -> LiftedDisc {
        let gt_base = self.gtf.realize();
        let mut coeffs: Vec<Vec<C64>> = gt_base.coefficients().to_vec();
        for (j, c) in self.shift.iter().enumerate() {
            if coeffs[j].len() < 2 {
                coeffs[j].resize(2, C64::new(0.0, 0.0));
            }
            coeffs[j][1] += C64::new(0.5 * c, 0.0);
        }
        let gt = AnalyticDisc::new(coeffs, gt_base.grid_m()).expect("shape preserved");
        LiftedDisc {
            h: self.hf.realize(),
            g: self.gf.realize(),
            ht: self.htf.realize(),
            gt,
        }
    }
}

/// Discrete C^{k,alpha} norm over the boundary grid.
///
/// Sum of the sup norms of the derivatives up to order k plus the discrete
/// Hölder quotient of the k-th derivative over grid pairs.
pub fn holder_norm(disc: &AnalyticDisc, k: usize, alpha: f64) -> Result<f64> {
    if k > 1 {
        return Err(Error::InvalidArgument("only k <= 1 is supported".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
    }
    if disc.grid_m() < 64 {
        return Err(Error::InvalidArgument(format!(
            "grid size {} too coarse for the Hölder quotient (need >= 64)",
            disc.grid_m()
        )));
    }
    let g = BoundaryGrid::new(disc.grid_m())?;
    let m = g.len();

    let point_norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();

    let mut total = 0.0;
    let mut current = disc.clone();
    let mut top_samples: Vec<Vec<C64>> = Vec::new();
    for j in 0..=k {
        let samples: Vec<Vec<C64>> =
            g.points().iter().map(|&z| current.eval_unchecked(z)).collect();
        total += samples.iter().map(|v| point_norm(v)).fold(0.0, f64::max);
        if j == k {
            top_samples = samples;
        } else {
            current = current.derivative();
        }
    }

    // Hölder quotient over all grid pairs of the k-th derivative.
    let quotients = par::map_indexed(m, |i| {
        let mut best: f64 = 0.0;
        for j in (i + 1)..m {
            let dist = (g.point(i) - g.point(j)).norm();
            let diff: f64 = top_samples[i]
                .iter()
                .zip(&top_samples[j])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            best = best.max(diff / dist.powf(alpha));
        }
        best
    });
    total += quotients.into_iter().fold(0.0, f64::max);
    Ok(total)
}

/// The norm on the factored space: the C^{1,alpha} norm of the cofactor.
pub fn factored_norm(fd: &FactoredDisc, alpha: f64) -> Result<f64> {
    holder_norm(fd.cofactor(), 1, alpha)
}

/// l2 mass of negative Fourier modes across all components of a sampled
/// boundary function (holomorphic-extendability certificate).
pub fn negative_mode_defect(samples_per_component: &[Vec<C64>]) -> f64 {
    samples_per_component
        .iter()
        .map(|s| grid::negative_mode_mass(s).powi(2))
        .sum::<f64>()
        .sqrt()
}

//! Generic real submanifolds of C^{n+d} in normalized coordinates:
//! Hermitian pencils, weighted polynomial perturbations, defining functions
//! with exact Wirtinger jets, and the non-degeneracy conditions
//! (a), (b), (f), (t) with explicit witnesses.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative singular-value tolerance for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;
/// Default number of randomized witness trials.
pub const DEFAULT_WITNESS_TRIALS: usize = 64;
/// Default seed for witness searches.
pub const DEFAULT_WITNESS_SEED: u64 = 0x5eed;

/// The d Hermitian n x n matrices defining the quadric model.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPencil {
    n: usize,
    d: usize,
    mats: Vec<DMatrix<C64>>,
}

impl HermitianPencil {
    pub fn new(mats: Vec<DMatrix<C64>>) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::InvalidPencil("need at least one matrix".into()));
        }
        let n = mats[0].nrows();
        if n == 0 {
            return Err(Error::InvalidPencil("matrices must be nonempty".into()));
        }
        for (j, a) in mats.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::InvalidPencil(format!(
                    "matrix {j} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let scale = a.iter().map(|c| c.norm()).fold(1.0, f64::max);
            for i in 0..n {
                for k in 0..n {
                    if (a[(i, k)] - a[(k, i)].conj()).norm() > 1e-12 * scale {
                        return Err(Error::InvalidPencil(format!(
                            "matrix {j} is not Hermitian at ({i}, {k})"
                        )));
                    }
                }
            }
        }
        let d = mats.len();
        Ok(Self { n, d, mats })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.mats
    }

    pub fn matrix(&self, j: usize) -> &DMatrix<C64> {
        &self.mats[j]
    }

    /// Real combination sum_j c_j A_j.
    pub fn combination(&self, c: &[f64]) -> Result<DMatrix<C64>> {
        if c.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "combination needs {} coefficients, got {}",
                self.d,
                c.len()
            )));
        }
        let mut acc = DMatrix::<C64>::zeros(self.n, self.n);
        for (cj, a) in c.iter().zip(&self.mats) {
            acc += a * C64::new(*cj, 0.0);
        }
        Ok(acc)
    }

    /// The n x d matrix [A_1 V | ... | A_d V].
    pub fn witness_matrix(&self, v: &[C64]) -> Result<DMatrix<C64>> {
        if v.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "witness must have {} entries, got {}",
                self.n,
                v.len()
            )));
        }
        let vv = DMatrix::from_column_slice(self.n, 1, v);
        let mut out = DMatrix::<C64>::zeros(self.n, self.d);
        for (j, a) in self.mats.iter().enumerate() {
            out.set_column(j, &(a * &vv).column(0));
        }
        Ok(out)
    }

    /// The quadric in C^8 (n = d = 4) that is Levi non-degenerate in the
    /// sense of Beloshapka yet admits no full-rank witness: every A_j V for
    /// j >= 2 lies in span{e_1, e_2}.
    pub fn example_c8() -> Self {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let h = C64::new(0.5, 0.0);
        let a1 = DMatrix::identity(4, 4);
        let a2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![o, z, z, z]));
        let a3 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![z, o, z, z]));
        let a4 = DMatrix::from_row_slice(4, 4, &[o, h, z, z, h, z, z, z, z, z, z, z, z, z, z, z]);
        Self::new(vec![a1, a2, a3, a4]).expect("example pencil is Hermitian")
    }
}

/// One real monomial in (Re z, Im z, Im w) with an integer exponent per
/// variable; Re z_k and Im z_k have weight one, Im w_l weight two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerm {
    pub coefficient: f64,
    pub re_z: Vec<u32>,
    pub im_z: Vec<u32>,
    pub im_w: Vec<u32>,
}

impl PerturbationTerm {
    pub fn weighted_degree(&self) -> u32 {
        let z: u32 = self.re_z.iter().sum::<u32>() + self.im_z.iter().sum::<u32>();
        let w: u32 = self.im_w.iter().sum();
        z + 2 * w
    }
}

/// Real polynomial perturbation, one term list per defining component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPolynomial {
    n: usize,
    d: usize,
    components: Vec<Vec<PerturbationTerm>>,
    max_weighted_degree: u32,
}

impl PerturbationPolynomial {
    pub const DEFAULT_MAX_WEIGHTED_DEGREE: u32 = 6;

    pub fn zero(n: usize, d: usize) -> Self {
        Self { n, d, components: vec![Vec::new(); d], max_weighted_degree: Self::DEFAULT_MAX_WEIGHTED_DEGREE }
    }

    pub fn new(n: usize, d: usize, components: Vec<Vec<PerturbationTerm>>) -> Result<Self> {
        Self::with_max_degree(n, d, components, Self::DEFAULT_MAX_WEIGHTED_DEGREE)
    }

    pub fn with_max_degree(
        n: usize,
        d: usize,
        components: Vec<Vec<PerturbationTerm>>,
        max_weighted_degree: u32,
    ) -> Result<Self> {
        if components.len() != d {
            return Err(Error::InvalidArgument(format!(
                "perturbation needs {d} components, got {}",
                components.len()
            )));
        }
        for (j, terms) in components.iter().enumerate() {
            for term in terms {
                if term.re_z.len() != n || term.im_z.len() != n || term.im_w.len() != d {
                    return Err(Error::InvalidArgument(format!(
                        "exponent lists of component {} must have lengths ({n}, {n}, {d})",
                        j + 1
                    )));
                }
                let w = term.weighted_degree();
                if w < 3 {
                    return Err(Error::InvalidArgument(format!(
                        "term in component {} has weighted degree {w} < 3",
                        j + 1
                    )));
                }
                if w > max_weighted_degree {
                    return Err(Error::InvalidArgument(format!(
                        "term in component {} has weighted degree {w} > {max_weighted_degree}",
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { n, d, components, max_weighted_degree })
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_empty())
    }

    pub fn components(&self) -> &[Vec<PerturbationTerm>] {
        &self.components
    }

    /// Rescales every term coefficient by `factor^(weighted_degree - 2)`.
    pub(crate) fn dilated(&self, factor: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| PerturbationTerm {
                        coefficient: t.coefficient
                            * factor.powi(t.weighted_degree() as i32 - 2),
                        ..t.clone()
                    })
                    .collect()
            })
            .collect();
        Self { components, ..self.clone() }
    }
}

/// Value, gradient and Hessian of one real monomial over the concatenated
/// real variables [Re z | Im z | Im w].
fn monomial_jet(term: &PerturbationTerm, vals: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
    let exps: Vec<u32> = term
        .re_z
        .iter()
        .chain(term.im_z.iter())
        .chain(term.im_w.iter())
        .copied()
        .collect();
    let len = exps.len();
    debug_assert_eq!(vals.len(), len);
    let powm = |u: f64, e: i64| -> f64 {
        if e <= 0 {
            if e == 0 { 1.0 } else { 0.0 }
        } else {
            u.powi(e as i32)
        }
    };
    let prod_except = |skip: &[usize]| -> f64 {
        let mut p = 1.0;
        for k in 0..len {
            if !skip.contains(&k) {
                p *= powm(vals[k], exps[k] as i64);
            }
        }
        p
    };
    let value = term.coefficient * prod_except(&[]);
    let mut grad = vec![0.0; len];
    for i in 0..len {
        if exps[i] > 0 {
            grad[i] = term.coefficient
                * exps[i] as f64
                * powm(vals[i], exps[i] as i64 - 1)
                * prod_except(&[i]);
        }
    }
    let mut hess = DMatrix::<f64>::zeros(len, len);
    for i in 0..len {
        for j in i..len {
            let v = if i == j {
                if exps[i] >= 2 {
                    term.coefficient
                        * (exps[i] * (exps[i] - 1)) as f64
                        * powm(vals[i], exps[i] as i64 - 2)
                        * prod_except(&[i])
                } else {
                    0.0
                }
            } else if exps[i] > 0 && exps[j] > 0 {
                term.coefficient
                    * (exps[i] * exps[j]) as f64
                    * powm(vals[i], exps[i] as i64 - 1)
                    * powm(vals[j], exps[j] as i64 - 1)
                    * prod_except(&[i, j])
            } else {
                0.0
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (value, grad, hess)
}

/// Quadric plus scaled weighted-order >= 3 perturbation:
/// r_j = Re w_j - conj(z)^T A_j z + t p_j(Re z, Im z, Im w).
#[derive(Debug, Clone, PartialEq)]
pub struct DefiningFunction {
    pencil: HermitianPencil,
    perturbation: PerturbationPolynomial,
    t: f64,
}

/// First and second Wirtinger derivatives of every defining component at a
/// point; layout documented per field.
#[derive(Debug, Clone)]
pub(crate) struct RJet {
    /// r_j values.
    pub r: Vec<f64>,
    /// (j, k): d r_j / d z_k.
    pub dz: DMatrix<C64>,
    /// (j, l): d r_j / d w_l.
    pub dw: DMatrix<C64>,
    /// Per j, (k, m): d^2 r_j / dz_k dz_m.
    pub hzz: Vec<DMatrix<C64>>,
    /// Per j, (k, m): d^2 r_j / dz_k d z-bar_m.
    pub hzzb: Vec<DMatrix<C64>>,
    /// Per j, (k, l): d^2 r_j / dz_k dw_l.
    pub hzw: Vec<DMatrix<C64>>,
    /// Per j, (k, l): d^2 r_j / dz_k d w-bar_l.
    pub hzwb: Vec<DMatrix<C64>>,
    /// Per j, (l, m): d^2 r_j / dw_l dw_m.
    pub hww: Vec<DMatrix<C64>>,
    /// Per j, (l, m): d^2 r_j / dw_l d w-bar_m.
    pub hwwb: Vec<DMatrix<C64>>,
}

impl DefiningFunction {
    pub fn new(pencil: HermitianPencil, perturbation: PerturbationPolynomial, t: f64) -> Result<Self> {
        if perturbation.n != pencil.n() || perturbation.d != pencil.d() {
            return Err(Error::InvalidArgument(
                "perturbation dimensions must match the pencil".into(),
            ));
        }
        if t < 0.0 || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("scale t = {t} must be finite and >= 0")));
        }
        Ok(Self { pencil, perturbation, t })
    }

    pub fn quadric(pencil: HermitianPencil) -> Self {
        let p = PerturbationPolynomial::zero(pencil.n(), pencil.d());
        Self { pencil, perturbation: p, t: 0.0 }
    }

    pub fn pencil(&self) -> &HermitianPencil {
        &self.pencil
    }

    pub fn perturbation(&self) -> &PerturbationPolynomial {
        &self.perturbation
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.pencil.n()
    }

    pub fn d(&self) -> usize {
        self.pencil.d()
    }

    pub fn is_quadric(&self) -> bool {
        self.t == 0.0 || self.perturbation.is_zero()
    }

    pub fn with_scale(&self, t: f64) -> Result<Self> {
        Self::new(self.pencil.clone(), self.perturbation.clone(), t)
    }

    /// Applies the anisotropic dilation (z, w) -> (tz, t^2 w) to the defining
    /// functions and renormalizes: the quadric part is invariant while every
    /// perturbation monomial of weighted degree m picks up a factor t^(m-2).
    pub fn dilated(&self, t_dil: f64) -> Result<Self> {
        if t_dil <= 0.0 || !t_dil.is_finite() {
            return Err(Error::InvalidArgument(format!("dilation factor {t_dil} must be > 0")));
        }
        Ok(Self {
            pencil: self.pencil.clone(),
            perturbation: self.perturbation.dilated(t_dil),
            t: self.t,
        })
    }

    fn real_vars(&self, z: &[C64], w: &[C64]) -> Vec<f64> {
        let mut vals = Vec::with_capacity(2 * self.n() + self.d());
        vals.extend(z.iter().map(|c| c.re));
        vals.extend(z.iter().map(|c| c.im));
        vals.extend(w.iter().map(|c| c.im));
        vals
    }

    /// Values r(z, w) in R^d.
    pub fn eval_r(&self, z: &[C64], w: &[C64]) -> Result<Vec<f64>> {
        self.check_point(z, w)?;
        let n = self.n();
        let vals = self.real_vars(z, w);
        let mut out = Vec::with_capacity(self.d());
        for (j, a) in self.pencil.mats.iter().enumerate() {
            let mut quad = C64::new(0.0, 0.0);
            for k in 0..n {
                for m in 0..n {
                    quad += z[k].conj() * a[(k, m)] * z[m];
                }
            }
            debug_assert!(quad.im.abs() < 1e-10 * (1.0 + quad.re.abs()));
            let mut p = 0.0;
            for term in &self.perturbation.components[j] {
                p += monomial_jet(term, &vals).0;
            }
            out.push(w[j].re - quad.re + self.t * p);
        }
        Ok(out)
    }

    /// Holomorphic gradient rows: d x (n+d), row j = (d_z r_j | d_w r_j).
    pub fn eval_grad_r(&self, z: &[C64], w: &[C64]) -> Result<DMatrix<C64>> {
        let jet = self.jet2(z, w)?;
        let (n, d) = (self.n(), self.d());
        let mut out = DMatrix::<C64>::zeros(d, n + d);
        for j in 0..d {
            for k in 0..n {
                out[(j, k)] = jet.dz[(j, k)];
            }
            for l in 0..d {
                out[(j, n + l)] = jet.dw[(j, l)];
            }
        }
        Ok(out)
    }

    fn check_point(&self, z: &[C64], w: &[C64]) -> Result<()> {
        if z.len() != self.n() || w.len() != self.d() {
            return Err(Error::InvalidArgument(format!(
                "point must have {} z and {} w entries",
                self.n(),
                self.d()
            )));
        }
        Ok(())
    }

    /// First and second Wirtinger derivatives of every component.
    pub(crate) fn jet2(&self, z: &[C64], w: &[C64]) -> Result<RJet> {
        self.check_point(z, w)?;
        let (n, d) = (self.n(), self.d());
        let i = C64::new(0.0, 1.0);
        let half = 0.5;
        let vals = self.real_vars(z, w);

        let mut r = vec![0.0; d];
        let mut dz = DMatrix::<C64>::zeros(d, n);
        let mut dw = DMatrix::<C64>::zeros(d, d);
        let mut hzz = vec![DMatrix::<C64>::zeros(n, n); d];
        let mut hzzb = vec![DMatrix::<C64>::zeros(n, n); d];
        let mut hzw = vec![DMatrix::<C64>::zeros(n, d); d];
        let mut hzwb = vec![DMatrix::<C64>::zeros(n, d); d];
        let mut hww = vec![DMatrix::<C64>::zeros(d, d); d];
        let mut hwwb = vec![DMatrix::<C64>::zeros(d, d); d];

        for j in 0..d {
            let a = &self.pencil.mats[j];
            // Quadric part: r_j = Re w_j - conj(z)^T A_j z.
            let mut quad = C64::new(0.0, 0.0);
            for k in 0..n {
                for m in 0..n {
                    quad += z[k].conj() * a[(k, m)] * z[m];
                }
            }
            r[j] = w[j].re - quad.re;
            for k in 0..n {
                // d/dz_k (-conj(z)^T A z) = -(conj(z)^T A)_k
                let mut s = C64::new(0.0, 0.0);
                for m in 0..n {
                    s += z[m].conj() * a[(m, k)];
                }
                dz[(j, k)] = -s;
                for m in 0..n {
                    hzzb[j][(k, m)] = -a[(m, k)];
                }
            }
            dw[(j, j)] = C64::new(half, 0.0);

            if self.t != 0.0 {
                for term in &self.perturbation.components[j] {
                    let (val, grad, hess) = monomial_jet(term, &vals);
                    r[j] += self.t * val;
                    // Index blocks in the real variable vector.
                    let xk = |k: usize| k;
                    let yk = |k: usize| n + k;
                    let vl = |l: usize| 2 * n + l;
                    for k in 0..n {
                        dz[(j, k)] += self.t * half * C64::new(grad[xk(k)], -grad[yk(k)]);
                    }
                    for l in 0..d {
                        dw[(j, l)] += self.t * C64::new(0.0, -half) * grad[vl(l)];
                    }
                    for k in 0..n {
                        for m in 0..n {
                            let pxx = hess[(xk(k), xk(m))];
                            let pyy = hess[(yk(k), yk(m))];
                            let pxy = hess[(xk(k), yk(m))];
                            let pyx = hess[(yk(k), xk(m))];
                            hzz[j][(k, m)] +=
                                self.t * 0.25 * (C64::new(pxx - pyy, 0.0) - i * (pxy + pyx));
                            hzzb[j][(k, m)] +=
                                self.t * 0.25 * (C64::new(pxx + pyy, 0.0) + i * (pxy - pyx));
                        }
                        for l in 0..d {
                            let pxv = hess[(xk(k), vl(l))];
                            let pyv = hess[(yk(k), vl(l))];
                            hzw[j][(k, l)] += self.t * 0.25 * (C64::new(-pyv, 0.0) - i * pxv);
                            hzwb[j][(k, l)] += self.t * 0.25 * (C64::new(pyv, 0.0) + i * pxv);
                        }
                    }
                    for l in 0..d {
                        for m in 0..d {
                            let pvv = hess[(vl(l), vl(m))];
                            hww[j][(l, m)] += self.t * C64::new(-0.25 * pvv, 0.0);
                            hwwb[j][(l, m)] += self.t * C64::new(0.25 * pvv, 0.0);
                        }
                    }
                }
            }
        }

        Ok(RJet { r, dz, dw, hzz, hzzb, hzw, hzwb, hww, hwwb })
    }
}

/// Non-degeneracy report with explicit witnesses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonDegeneracyReport {
    /// (a): the A_j are linearly independent.
    pub cond_a: bool,
    /// Rank of the pencil flattened to vectors in C^{n^2}.
    pub pencil_rank: usize,
    /// (b): the common kernel of the A_j is trivial.
    pub cond_b: bool,
    pub common_kernel_dim: usize,
    /// (f): some V makes [A_1 V | ... | A_d V] of rank d.
    pub cond_f: bool,
    pub witness_v: Option<Vec<C64>>,
    /// (t): some real combination of the A_j is invertible.
    pub cond_t: bool,
    pub witness_c: Option<Vec<f64>>,
    /// Negative (f)/(t) verdicts are probabilistic unless this flag is set
    /// by the exact low-dimension determinant expansion.
    pub cond_t_exact: bool,
    pub beloshapka: bool,
    pub fully: bool,
    pub trials: usize,
    pub seed: u64,
}

/// (a): rank of {A_1, ..., A_d} as vectors in C^{n^2}.
pub fn check_linear_independence(pencil: &HermitianPencil) -> (bool, usize) {
    let (n, d) = (pencil.n(), pencil.d());
    let mut flat = DMatrix::<C64>::zeros(d, n * n);
    for (j, a) in pencil.matrices().iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                flat[(j, r * n + c)] = a[(r, c)];
            }
        }
    }
    let rank = linalg::complex_rank(&flat, RANK_REL_TOL);
    (rank == d, rank)
}

/// (b): dimension of the common kernel, via the stacked (dn) x n matrix.
pub fn common_kernel_dimension(pencil: &HermitianPencil) -> usize {
    let (n, d) = (pencil.n(), pencil.d());
    let mut stacked = DMatrix::<C64>::zeros(d * n, n);
    for (j, a) in pencil.matrices().iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                stacked[(j * n + r, c)] = a[(r, c)];
            }
        }
    }
    n - linalg::complex_rank(&stacked, RANK_REL_TOL)
}

fn standard_complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) / 2.0_f64.sqrt()
}

/// Randomized search for a condition-(f) witness V.
///
/// The failure set is a proper algebraic subvariety whenever (f) holds, so a
/// single draw succeeds almost surely; absence after `trials` draws is a
/// probabilistic negative.
pub fn find_full_witness(pencil: &HermitianPencil, trials: usize, seed: u64) -> Option<Vec<C64>> {
    if pencil.d() > pencil.n() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let v: Vec<C64> = (0..pencil.n()).map(|_| standard_complex_normal(&mut rng)).collect();
        let m = pencil.witness_matrix(&v).expect("dimensions fixed");
        if linalg::complex_rank(&m, RANK_REL_TOL) == pencil.d() {
            return Some(v);
        }
    }
    None
}

/// Randomized search for a condition-(t) witness c, returning the unit-norm
/// draw with maximal |det| when it clears the tolerance.
pub fn find_invertible_combination(
    pencil: &HermitianPencil,
    trials: usize,
    seed: u64,
) -> Option<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..trials {
        let mut c: Vec<f64> = (0..pencil.d()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        c.iter_mut().for_each(|x| *x /= norm);
        let m = pencil.combination(&c).expect("dimensions fixed");
        let sigma_max = linalg::complex_op_norm_estimate(&m);
        let det = m.determinant().norm();
        let threshold = 1e-10 * sigma_max.powi(pencil.n() as i32).max(f64::MIN_POSITIVE);
        if det > threshold && best.as_ref().map_or(true, |(b, _)| det > *b) {
            best = Some((det, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Exact decision of condition (t) for n, d <= 2 by expanding the
/// determinant polynomial det(sum c_j A_j) in the c variables.
///
/// Returns None when the dimensions are out of range.
pub fn decide_invertible_combination_exact(pencil: &HermitianPencil) -> Option<bool> {
    let (n, d) = (pencil.n(), pencil.d());
    if n > 2 || d > 2 {
        return None;
    }
    let det_at = |c: &[f64]| pencil.combination(c).unwrap().determinant().norm();
    let tol = 1e-12
        * pencil
            .matrices()
            .iter()
            .map(linalg::complex_op_norm_estimate)
            .fold(1.0, f64::max)
            .powi(n as i32);
    let nonzero = match (n, d) {
        (_, 1) => det_at(&[1.0]) > tol,
        (1, 2) => det_at(&[1.0, 0.0]) > tol || det_at(&[0.0, 1.0]) > tol,
        (2, 2) => {
            // det(c1 A1 + c2 A2) = alpha c1^2 + beta c1 c2 + gamma c2^2.
            let alpha = pencil.combination(&[1.0, 0.0]).unwrap().determinant();
            let gamma = pencil.combination(&[0.0, 1.0]).unwrap().determinant();
            let both = pencil.combination(&[1.0, 1.0]).unwrap().determinant();
            let beta = both - alpha - gamma;
            alpha.norm() > tol || beta.norm() > tol || gamma.norm() > tol
        }
        _ => unreachable!(),
    };
    Some(nonzero)
}

/// Totally-real test for the conormal bundle at (0, sum_j c_j dr_j(0)):
/// invertibility of the boundary matrix G(1) assembled at that point.
pub fn check_totally_real_conormal(pencil: &HermitianPencil, c: &[f64]) -> Result<bool> {
    let def = DefiningFunction::quadric(pencil.clone());
    let point = crate::conormal::LiftPoint {
        z: vec![C64::new(0.0, 0.0); pencil.n()],
        w: vec![C64::new(0.0, 0.0); pencil.d()],
        zt: vec![C64::new(0.0, 0.0); pencil.n()],
        wt: c.iter().map(|cj| C64::new(0.5 * cj, 0.0)).collect(),
    };
    let rg = crate::conormal::rows_and_grad_at(&def, &point, C64::new(1.0, 0.0))?;
    let g1 = crate::rh_linear::reorder_grad_columns(&rg.grad, pencil.n(), pencil.d());
    let size = 2 * pencil.n() + 2 * pencil.d();
    let svals = linalg::complex_singular_values(&g1);
    Ok(svals.len() == size && svals[size - 1] > RANK_REL_TOL * svals[0].max(f64::MIN_POSITIVE))
}

/// Full non-degeneracy report with randomized witnesses.
pub fn non_degeneracy_report(pencil: &HermitianPencil, trials: usize, seed: u64) -> NonDegeneracyReport {
    let (cond_a, pencil_rank) = check_linear_independence(pencil);
    let common_kernel_dim = common_kernel_dimension(pencil);
    let cond_b = common_kernel_dim == 0;
    let witness_v = find_full_witness(pencil, trials, seed);
    let cond_f = witness_v.is_some();
    let witness_c = find_invertible_combination(pencil, trials, seed);
    let exact_t = decide_invertible_combination_exact(pencil);
    let cond_t = match (&witness_c, exact_t) {
        (Some(_), _) => true,
        (None, Some(t)) => t,
        (None, None) => false,
    };
    NonDegeneracyReport {
        cond_a,
        pencil_rank,
        cond_b,
        common_kernel_dim,
        cond_f,
        witness_v,
        cond_t,
        witness_c,
        cond_t_exact: exact_t.is_some(),
        beloshapka: cond_a && cond_b,
        fully: cond_f && cond_t,
        trials,
        seed,
    }
}

/// JSON ingestion schema: matrices as row-major arrays of [re, im] pairs,
/// perturbation terms as {component, coefficient, exponents: {reZ, imZ, imW}}
/// with 1-based component indices.
pub mod config {
    use super::*;

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct PencilConfig {
        pub n: usize,
        pub d: usize,
        /// One row-major n*n matrix per defining component.
        pub matrices: Vec<Vec<[f64; 2]>>,
    }

    impl PencilConfig {
        pub fn build(&self) -> Result<HermitianPencil> {
            if self.matrices.len() != self.d {
                return Err(Error::InvalidPencil(format!(
                    "expected {} matrices, got {}",
                    self.d,
                    self.matrices.len()
                )));
            }
            let mats = self
                .matrices
                .iter()
                .enumerate()
                .map(|(j, flat)| {
                    if flat.len() != self.n * self.n {
                        return Err(Error::InvalidPencil(format!(
                            "matrix {j} has {} entries, expected {}",
                            flat.len(),
                            self.n * self.n
                        )));
                    }
                    Ok(DMatrix::from_fn(self.n, self.n, |r, c| {
                        let [re, im] = flat[r * self.n + c];
                        C64::new(re, im)
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            HermitianPencil::new(mats)
        }

        pub fn from_pencil(pencil: &HermitianPencil) -> Self {
            let n = pencil.n();
            Self {
                n,
                d: pencil.d(),
                matrices: pencil
                    .matrices()
                    .iter()
                    .map(|a| {
                        (0..n * n).map(|idx| {
                            let v = a[(idx / n, idx % n)];
                            [v.re, v.im]
                        })
                        .collect()
                    })
                    .collect(),
            }
        }
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ExponentsConfig {
        #[serde(rename = "reZ")]
        pub re_z: Vec<u32>,
        #[serde(rename = "imZ")]
        pub im_z: Vec<u32>,
        #[serde(rename = "imW")]
        pub im_w: Vec<u32>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct PerturbationTermConfig {
        /// 1-based defining-component index.
        pub component: usize,
        pub coefficient: f64,
        pub exponents: ExponentsConfig,
    }

    pub fn build_perturbation(
        n: usize,
        d: usize,
        terms: &[PerturbationTermConfig],
    ) -> Result<PerturbationPolynomial> {
        let mut components = vec![Vec::new(); d];
        for t in terms {
            if t.component == 0 || t.component > d {
                return Err(Error::InvalidArgument(format!(
                    "perturbation component {} out of range 1..={d}",
                    t.component
                )));
            }
            components[t.component - 1].push(PerturbationTerm {
                coefficient: t.coefficient,
                re_z: t.exponents.re_z.clone(),
                im_z: t.exponents.im_z.clone(),
                im_w: t.exponents.im_w.clone(),
            });
        }
        PerturbationPolynomial::new(n, d, components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn pencil_1x1(a: f64) -> HermitianPencil {
        HermitianPencil::new(vec![DMatrix::from_element(1, 1, c(a, 0.0))]).unwrap()
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 1.0), c(1.0, 1.0), c(0.0, 0.0)]);
        assert!(HermitianPencil::new(vec![m]).is_err());
    }

    #[test]
    fn linear_independence_examples() {
        let id2 = HermitianPencil::new(vec![DMatrix::identity(2, 2)]).unwrap();
        assert_eq!(check_linear_independence(&id2), (true, 1));

        assert_eq!(check_linear_independence(&HermitianPencil::example_c8()), (true, 4));

        let dup = HermitianPencil::new(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)]).unwrap();
        assert_eq!(check_linear_independence(&dup), (false, 1));
    }

    #[test]
    fn common_kernel_examples() {
        let id = HermitianPencil::new(vec![DMatrix::identity(3, 3)]).unwrap();
        assert_eq!(common_kernel_dimension(&id), 0);
        assert_eq!(common_kernel_dimension(&HermitianPencil::example_c8()), 0);
        let degen = HermitianPencil::new(vec![DMatrix::from_diagonal(
            &nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
        )])
        .unwrap();
        assert_eq!(common_kernel_dimension(&degen), 1);
    }

    #[test]
    fn full_witness_examples() {
        let id = HermitianPencil::new(vec![DMatrix::identity(3, 3)]).unwrap();
        let v = find_full_witness(&id, 8, 1).expect("identity pencil has witnesses");
        assert!(v.iter().any(|x| x.norm() > 1e-8));

        // Every A_j V lies in span{e1, e2} for j >= 2, so rank <= 3 < 4.
        assert!(find_full_witness(&HermitianPencil::example_c8(), 64, 1).is_none());

        let diag = HermitianPencil::new(vec![
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)])),
        ])
        .unwrap();
        let v = find_full_witness(&diag, 8, 2).expect("diagonal pair has witnesses");
        let m = diag.witness_matrix(&v).unwrap();
        assert_eq!(linalg::complex_rank(&m, RANK_REL_TOL), 2);
    }

    #[test]
    fn invertible_combination_examples() {
        let id = HermitianPencil::new(vec![DMatrix::identity(3, 3)]).unwrap();
        assert!(find_invertible_combination(&id, 8, 3).is_some());

        let c8 = HermitianPencil::example_c8();
        let cw = find_invertible_combination(&c8, 16, 3).expect("A_1 = I makes (t) easy");
        assert!(c8.combination(&cw).unwrap().determinant().norm() > 1e-6);

        let pair = HermitianPencil::new(vec![
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])),
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        ])
        .unwrap();
        let cw = find_invertible_combination(&pair, 16, 4).expect("c = (1, 1) has det -1");
        assert!(pair.combination(&cw).unwrap().determinant().norm() > 1e-8);
    }

    #[test]
    fn exact_t_decision_small_dims() {
        let zero = HermitianPencil::new(vec![DMatrix::from_element(1, 1, c(0.0, 0.0))]).unwrap();
        assert_eq!(decide_invertible_combination_exact(&zero), Some(false));
        let pair = HermitianPencil::new(vec![
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)])),
            DMatrix::identity(2, 2),
        ])
        .unwrap();
        assert_eq!(decide_invertible_combination_exact(&pair), Some(true));
        assert_eq!(decide_invertible_combination_exact(&HermitianPencil::example_c8()), None);
    }

    #[test]
    fn eval_r_examples() {
        // Normalization at the origin.
        let pencil = pencil_1x1(1.0);
        let def = DefiningFunction::quadric(pencil.clone());
        let r0 = def.eval_r(&[c(0.0, 0.0)], &[c(0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(r0[0], 0.0, epsilon = 1e-15);
        let grad0 = def.eval_grad_r(&[c(0.0, 0.0)], &[c(0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(grad0[(0, 0)].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((grad0[(0, 1)] - c(0.5, 0.0)).norm(), 0.0, epsilon = 1e-15);

        // Direct substitution: r = Re 2 - 1 = 1.
        let r = def.eval_r(&[c(1.0, 0.0)], &[c(2.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-15);

        // Cubic term (Re z)^3 at t = 1: r = 1 - 1 + 1 = 1.
        let p = PerturbationPolynomial::new(
            1,
            1,
            vec![vec![PerturbationTerm { coefficient: 1.0, re_z: vec![3], im_z: vec![0], im_w: vec![0] }]],
        )
        .unwrap();
        let def_p = DefiningFunction::new(pencil, p, 1.0).unwrap();
        let r = def_p.eval_r(&[c(1.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let pencil = HermitianPencil::new(vec![
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.25, 0.5), c(0.25, -0.5), c(-1.0, 0.0)]),
            DMatrix::identity(2, 2),
        ])
        .unwrap();
        let p = PerturbationPolynomial::new(
            2,
            2,
            vec![
                vec![PerturbationTerm { coefficient: 0.7, re_z: vec![1, 0], im_z: vec![0, 0], im_w: vec![1, 0] }],
                vec![PerturbationTerm { coefficient: -0.3, re_z: vec![0, 2], im_z: vec![1, 0], im_w: vec![0, 0] }],
            ],
        )
        .unwrap();
        let def = DefiningFunction::new(pencil, p, 0.5).unwrap();
        let z = [c(0.3, -0.2), c(-0.1, 0.4)];
        let w = [c(0.2, 0.6), c(-0.5, 0.1)];
        let grad = def.eval_grad_r(&z, &w).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            for k in 0..2 {
                // d/dz_k via central differences in Re and Im.
                let mut zp = z;
                zp[k] += c(h, 0.0);
                let mut zm = z;
                zm[k] -= c(h, 0.0);
                let dre = (def.eval_r(&zp, &w).unwrap()[j] - def.eval_r(&zm, &w).unwrap()[j]) / (2.0 * h);
                let mut zp = z;
                zp[k] += c(0.0, h);
                let mut zm = z;
                zm[k] -= c(0.0, h);
                let dim = (def.eval_r(&zp, &w).unwrap()[j] - def.eval_r(&zm, &w).unwrap()[j]) / (2.0 * h);
                let fd = 0.5 * c(dre, -dim);
                assert_abs_diff_eq!((grad[(j, k)] - fd).norm(), 0.0, epsilon = 1e-8);
            }
            for l in 0..2 {
                let mut wp = w;
                wp[l] += c(h, 0.0);
                let mut wm = w;
                wm[l] -= c(h, 0.0);
                let dre = (def.eval_r(&z, &wp).unwrap()[j] - def.eval_r(&z, &wm).unwrap()[j]) / (2.0 * h);
                let mut wp = w;
                wp[l] += c(0.0, h);
                let mut wm = w;
                wm[l] -= c(0.0, h);
                let dim = (def.eval_r(&z, &wp).unwrap()[j] - def.eval_r(&z, &wm).unwrap()[j]) / (2.0 * h);
                let fd = 0.5 * c(dre, -dim);
                assert_abs_diff_eq!((grad[(j, 2 + l)] - fd).norm(), 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn perturbation_rejects_low_weight() {
        let t = PerturbationTerm { coefficient: 1.0, re_z: vec![1], im_z: vec![0], im_w: vec![0] };
        assert!(PerturbationPolynomial::new(1, 1, vec![vec![t]]).is_err());
        // Weight 3 = 1 + 2 is allowed.
        let t = PerturbationTerm { coefficient: 1.0, re_z: vec![1], im_z: vec![0], im_w: vec![1] };
        assert!(PerturbationPolynomial::new(1, 1, vec![vec![t]]).is_ok());
    }

    #[test]
    fn c8_example_is_beloshapka_but_not_fully() {
        let report = non_degeneracy_report(&HermitianPencil::example_c8(), 64, 9);
        assert!(report.beloshapka);
        assert!(report.cond_t);
        assert!(!report.cond_f);
        assert!(!report.fully);
    }

    #[test]
    fn cond_f_implies_cond_a_on_random_pencils() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.gen_range(1..=4);
            let d = rng.gen_range(1..=4);
            let mats: Vec<DMatrix<C64>> = (0..d)
                .map(|_| {
                    let b = DMatrix::from_fn(n, n, |_, _| standard_complex_normal(&mut rng));
                    (&b + b.adjoint()) * c(0.5, 0.0)
                })
                .collect();
            let pencil = HermitianPencil::new(mats).unwrap();
            if find_full_witness(&pencil, 16, 5).is_some() {
                assert!(check_linear_independence(&pencil).0);
            }
        }
    }
}

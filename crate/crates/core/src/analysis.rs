//! Geometric exploitation of the disc family: the center map and its
//! open-image criterion, 1-jet injectivity and jet recovery, anisotropic
//! dilations, push-forward by polynomial CR automorphisms, and the 2-jet
//! determination experiment.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discs::{jet1_at_one, AnalyticDisc, LiftedDisc};
use crate::error::{Error, Result};
use crate::geometry::DefiningFunction;
use crate::grid::{self, BoundaryGrid};
use crate::linalg;
use crate::par;
use crate::solver::FamilyChart;

/// Finite-difference step for chart Jacobians.
const FD_STEP: f64 = 1e-5;
/// Singular values below this fraction of the largest count as zero.
const RANK_REL_TOL: f64 = 1e-6;

/// One monomial of a polynomial self-map of C^{n+d}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMonomial {
    pub coefficient: C64,
    /// Exponents over the n+d complex variables (z_1..z_n, w_1..w_d).
    pub exponents: Vec<u32>,
}

/// A polynomial holomorphic self-map of C^{n+d} fixing the origin with
/// invertible differential there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialAutomorphism {
    n: usize,
    d: usize,
    components: Vec<Vec<MapMonomial>>,
}

impl PolynomialAutomorphism {
    pub fn new(n: usize, d: usize, components: Vec<Vec<MapMonomial>>) -> Result<Self> {
        if components.len() != n + d {
            return Err(Error::InvalidArgument(format!(
                "need {} components, got {}",
                n + d,
                components.len()
            )));
        }
        for (c, terms) in components.iter().enumerate() {
            for term in terms {
                if term.exponents.len() != n + d {
                    return Err(Error::InvalidArgument(format!(
                        "component {c}: exponent list must have {} entries",
                        n + d
                    )));
                }
                if term.exponents.iter().all(|&e| e == 0) && term.coefficient.norm() > 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "component {c} has a constant term; the map must fix 0"
                    )));
                }
            }
        }
        let map = Self { n, d, components };
        let j0 = map.jacobian(&vec![C64::new(0.0, 0.0); n + d]);
        if linalg::complex_rank(&j0, 1e-10) != n + d {
            return Err(Error::InvalidArgument("differential at 0 is singular".into()));
        }
        Ok(map)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn identity(n: usize, d: usize) -> Self {
        let components = (0..n + d)
            .map(|c| {
                let mut exp = vec![0u32; n + d];
                exp[c] = 1;
                vec![MapMonomial { coefficient: C64::new(1.0, 0.0), exponents: exp }]
            })
            .collect();
        Self { n, d, components }
    }

    /// z -> e^{i theta} z, w -> w; preserves every quadric in the
    /// normalized coordinates.
    pub fn phase_rotation(n: usize, d: usize, theta: f64) -> Self {
        let mut map = Self::identity(n, d);
        for c in 0..n {
            map.components[c][0].coefficient = C64::new(theta.cos(), theta.sin());
        }
        map
    }

    /// The anisotropic dilation (z, w) -> (lambda z, lambda^2 w).
    pub fn dilation(n: usize, d: usize, lambda: f64) -> Self {
        let mut map = Self::identity(n, d);
        for c in 0..n {
            map.components[c][0].coefficient = C64::new(lambda, 0.0);
        }
        for c in n..n + d {
            map.components[c][0].coefficient = C64::new(lambda * lambda, 0.0);
        }
        map
    }

    /// Identity plus one extra monomial on one component.
    pub fn identity_plus_term(n: usize, d: usize, component: usize, term: MapMonomial) -> Result<Self> {
        let mut map = Self::identity(n, d);
        if component >= n + d {
            return Err(Error::InvalidArgument("component out of range".into()));
        }
        map.components[component].push(term);
        Self::new(n, d, map.components)
    }

    pub fn eval(&self, point: &[C64]) -> Vec<C64> {
        self.components
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| {
                        let mut v = t.coefficient;
                        for (p, &e) in point.iter().zip(&t.exponents) {
                            for _ in 0..e {
                                v *= p;
                            }
                        }
                        v
                    })
                    .sum()
            })
            .collect()
    }

    /// Holomorphic Jacobian matrix at a point.
    pub fn jacobian(&self, point: &[C64]) -> DMatrix<C64> {
        let nd = self.n + self.d;
        DMatrix::from_fn(nd, nd, |c, var| {
            self.components[c]
                .iter()
                .map(|t| {
                    let e = t.exponents[var];
                    if e == 0 {
                        return C64::new(0.0, 0.0);
                    }
                    let mut v = t.coefficient * e as f64;
                    for (i, p) in point.iter().enumerate() {
                        let mut ee = t.exponents[i];
                        if i == var {
                            ee -= 1;
                        }
                        for _ in 0..ee {
                            v *= p;
                        }
                    }
                    v
                })
                .sum()
        })
    }

    /// Derivative of the Jacobian along a tangent vector (second-order
    /// chain-rule data for jets).
    fn jacobian_directional(&self, point: &[C64], dir: &[C64]) -> DMatrix<C64> {
        let nd = self.n + self.d;
        DMatrix::from_fn(nd, nd, |c, var| {
            let mut total = C64::new(0.0, 0.0);
            for (var2, dv) in dir.iter().enumerate() {
                let second: C64 = self.components[c]
                    .iter()
                    .map(|t| {
                        let e1 = t.exponents[var];
                        let mut exps = t.exponents.clone();
                        if e1 == 0 {
                            return C64::new(0.0, 0.0);
                        }
                        exps[var] -= 1;
                        let e2 = exps[var2];
                        if e2 == 0 {
                            return C64::new(0.0, 0.0);
                        }
                        exps[var2] -= 1;
                        let mut v = t.coefficient * e1 as f64 * e2 as f64;
                        for (i, p) in point.iter().enumerate() {
                            for _ in 0..exps[i] {
                                v *= p;
                            }
                        }
                        v
                    })
                    .sum();
                total += second * dv;
            }
            total
        })
    }

    /// Weighted degree of a monomial: z exponents count one, w exponents two.
    fn weighted_degree(&self, exps: &[u32]) -> u32 {
        let z: u32 = exps[..self.n].iter().sum();
        let w: u32 = exps[self.n..].iter().sum();
        z + 2 * w
    }

    /// Checks that the expansion at 0 is the identity plus terms of
    /// weighted order >= 3.
    pub fn is_identity_plus_weight3(&self) -> bool {
        for (c, terms) in self.components.iter().enumerate() {
            let mut id_seen = false;
            for t in terms {
                let is_id_exps =
                    t.exponents.iter().enumerate().all(|(i, &e)| e == if i == c { 1 } else { 0 });
                if is_id_exps {
                    if (t.coefficient - C64::new(1.0, 0.0)).norm() > 1e-12 {
                        return false;
                    }
                    id_seen = true;
                } else if t.coefficient.norm() > 1e-14 && self.weighted_degree(&t.exponents) < 3 {
                    return false;
                }
            }
            if !id_seen {
                return false;
            }
        }
        true
    }

    /// Conjugation by the anisotropic dilation: Lambda_t^{-1} o F o Lambda_t.
    pub fn conjugate_dilate(&self, tau: f64) -> Result<Self> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::InvalidArgument("dilation factor must be > 0".into()));
        }
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(c, terms)| {
                let comp_weight = if c < self.n { 1 } else { 2 };
                terms
                    .iter()
                    .map(|t| MapMonomial {
                        coefficient: t.coefficient
                            * tau.powi(self.weighted_degree(&t.exponents) as i32 - comp_weight),
                        exponents: t.exponents.clone(),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n: self.n, d: self.d, components })
    }

    /// Max residual of the defining functions along a random sample of the
    /// zero set pushed through the map.
    pub fn preservation_defect(
        &self,
        def: &DefiningFunction,
        samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<f64> {
        if self.n != def.n() || self.d != def.d() {
            return Err(Error::InvalidArgument("map dimensions do not match".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let z: Vec<C64> = (0..self.n)
                .map(|_| C64::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)))
                .collect();
            let im_w: Vec<f64> = (0..self.d).map(|_| rng.gen_range(-radius..radius)).collect();
            // Re w solves r = 0 in closed form: the perturbation does not
            // involve Re w.
            let w0: Vec<C64> = im_w.iter().map(|&v| C64::new(0.0, v)).collect();
            let residual_at_zero = def.eval_r(&z, &w0)?;
            let w: Vec<C64> =
                im_w.iter().zip(&residual_at_zero).map(|(&v, r)| C64::new(-r, v)).collect();
            debug_assert!(def.eval_r(&z, &w)?.iter().all(|x| x.abs() < 1e-12));
            let image = self.eval(&z.iter().chain(&w).copied().collect::<Vec<_>>());
            let r = def.eval_r(&image[..self.n], &image[self.n..])?;
            worst = worst.max(r.iter().fold(0.0_f64, |a, x| a.max(x.abs())));
        }
        Ok(worst)
    }
}

/// Singular values and rank verdict of a realified Jacobian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tolerance: f64,
}

impl RankReport {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let singular_values = linalg::real_singular_values(m);
        let smax = singular_values.first().copied().unwrap_or(0.0);
        let rank = singular_values.iter().filter(|&&s| s > RANK_REL_TOL * smax).count();
        Self { singular_values, rank, tolerance: RANK_REL_TOL }
    }

    pub fn singular_values_csv(&self) -> String {
        let mut out = String::from("index,sigma\n");
        for (i, s) in self.singular_values.iter().enumerate() {
            out.push_str(&format!("{},{:.17e}\n", i, s));
        }
        out
    }
}

fn realify(values: &[C64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * values.len());
    for v in values {
        out.push(v.re);
    }
    for v in values {
        out.push(v.im);
    }
    out
}

/// Center of the chart disc at s: f_s(0) = (h(0), g(0)).
pub fn center_map(chart: &FamilyChart, s: &[f64]) -> Result<Vec<C64>> {
    let lift = chart.solve(s)?.realize();
    let vals = lift.eval_stacked(C64::new(0.0, 0.0));
    Ok(vals[..chart.def().n() + chart.def().d()].to_vec())
}

/// 1-jet at zeta = 1 of the chart disc at s.
pub fn jet_map(chart: &FamilyChart, s: &[f64]) -> Result<Vec<C64>> {
    Ok(jet1_at_one(&chart.solve(s)?.realize()))
}

fn chart_jacobian<F>(chart: &FamilyChart, eval: F) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<C64>> + Sync + Send,
{
    let dim = chart.dim();
    let cols = par::try_map_indexed(dim, |i| -> Result<Vec<f64>> {
        let mut sp = vec![0.0; dim];
        sp[i] = FD_STEP;
        let plus = realify(&eval(&sp)?);
        sp[i] = -FD_STEP;
        let minus = realify(&eval(&sp)?);
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * FD_STEP)).collect())
    })?;
    let rows = cols[0].len();
    Ok(DMatrix::from_fn(rows, dim, |r, c| cols[c][r]))
}

/// Realified Jacobian of the center map over the chart directions, with its
/// rank; full rank 2n+2d means the centers fill an open set.
pub fn center_jacobian(chart: &FamilyChart) -> Result<RankReport> {
    let m = chart_jacobian(chart, |s| center_map(chart, s))?;
    Ok(RankReport::from_matrix(&m))
}

/// Realified Jacobian of the 1-jet map over the chart directions; full rank
/// 2n+2d means nearby discs are determined by their 1-jet at 1.
pub fn jet_jacobian(chart: &FamilyChart) -> Result<RankReport> {
    let m = chart_jacobian(chart, |s| jet_map(chart, s))?;
    Ok(RankReport::from_matrix(&m))
}

/// Gauss-Newton recovery of chart coordinates from a target 1-jet, with the
/// frozen finite-difference Jacobian refreshed on stall. Restarts from 8
/// perturbed initializations and requires agreement to 1e-6.
pub fn recover_from_jet(chart: &FamilyChart, target: &[C64], s_init: &[f64]) -> Result<Vec<f64>> {
    let dim = chart.dim();
    if s_init.len() != dim {
        return Err(Error::InvalidArgument("initial coordinates have wrong length".into()));
    }
    let target_flat = realify(target);
    let noise = (chart.epsilon() * 1e-3).min(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(0xdec0de);

    // One finite-difference Jacobian at s_init, shared by all restarts;
    // stalls trigger a local refresh.
    let shared_jac = chart_jacobian(chart, |sp| {
        let shifted: Vec<f64> = sp.iter().zip(s_init).map(|(a, b)| a + b).collect();
        jet_map(chart, &shifted)
    })?;

    let solve_once = |start: &[f64]| -> Result<Vec<f64>> {
        let mut s = start.to_vec();
        let mut jac = shared_jac.clone();
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let jet = realify(&jet_map(chart, &s)?);
            let res: Vec<f64> = jet.iter().zip(&target_flat).map(|(a, b)| a - b).collect();
            let sup = res.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            if sup < 1e-9 {
                return Ok(s);
            }
            if sup > 0.9 * last {
                // Stalled: refresh the Jacobian at the current point.
                jac = chart_jacobian(chart, |sp| {
                    let shifted: Vec<f64> = sp.iter().zip(&s).map(|(a, b)| a + b).collect();
                    jet_map(chart, &shifted)
                })?;
            }
            last = sup;
            let svd = jac.clone().svd(true, true);
            let delta = svd
                .solve(&DVector::from_vec(res.clone()), 1e-12)
                .map_err(|e| Error::InvalidArgument(format!("jet Jacobian solve failed: {e}")))?;
            for i in 0..dim {
                s[i] -= delta[i];
            }
        }
        Err(Error::NonConvergence { iterations: 40, residual: last, t: None })
    };

    let mut results: Vec<Vec<f64>> = Vec::new();
    let mut first_err = None;
    for attempt in 0..8 {
        let start: Vec<f64> = if attempt == 0 {
            s_init.to_vec()
        } else {
            s_init.iter().map(|x| x + noise * rng.gen_range(-1.0..1.0)).collect()
        };
        match solve_once(&start) {
            Ok(s) => results.push(s),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if results.is_empty() {
        return Err(first_err.expect("no results implies an error"));
    }
    let mut spread: f64 = 0.0;
    for a in &results {
        for b in &results {
            for (x, y) in a.iter().zip(b) {
                spread = spread.max((x - y).abs());
            }
        }
    }
    if spread > 1e-6 {
        return Err(Error::AmbiguousJetRecovery { spread });
    }
    Ok(results.swap_remove(0))
}

/// The dilated defining function r_t = t^{-2} r o Lambda_t.
pub fn dilate(def: &DefiningFunction, t_dil: f64) -> Result<DefiningFunction> {
    def.dilated(t_dil)
}

/// A pushed-forward lift with its holomorphy certificate.
#[derive(Debug, Clone)]
pub struct PushforwardOutcome {
    pub lift: LiftedDisc,
    pub negative_mode_defect: f64,
}

fn effective_degree(disc: &AnalyticDisc) -> usize {
    let scale = disc
        .coefficients()
        .iter()
        .flat_map(|c| c.iter().map(|x| x.norm()))
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut deg = 0;
    for c in disc.coefficients() {
        for (q, v) in c.iter().enumerate() {
            if v.norm() > 1e-14 * scale {
                deg = deg.max(q);
            }
        }
    }
    deg
}

/// Push-forward of a lifted disc: (F o f, f~ (d_{f} F)^{-1}), composed on
/// the boundary and projected back to coefficient space.
pub fn pushforward(map: &PolynomialAutomorphism, lift: &LiftedDisc) -> Result<PushforwardOutcome> {
    let (n, d) = (lift.n(), lift.d());
    if map.n() != n || map.d() != d {
        return Err(Error::InvalidArgument("map dimensions do not match the lift".into()));
    }
    // Sample densely enough for the polynomial composition to be alias-free.
    let map_degree = map
        .components
        .iter()
        .flat_map(|t| t.iter().map(|m| m.exponents.iter().sum::<u32>() as usize))
        .max()
        .unwrap_or(1)
        .max(1);
    let disc_degree = [&lift.h, &lift.g, &lift.ht, &lift.gt]
        .iter()
        .map(|p| effective_degree(p))
        .max()
        .unwrap_or(0);
    let needed = 2 * (map_degree * disc_degree + 2);
    let m_grid = needed.next_power_of_two().clamp(lift.grid_m(), 1 << 13);
    let grid = BoundaryGrid::new(m_grid)?;

    let pushed = par::try_map_indexed(grid.len(), |i| -> Result<(Vec<C64>, Vec<C64>)> {
        let zeta = grid.point(i);
        let vals = lift.eval_stacked(zeta);
        let f_point = &vals[..n + d];
        let cot = &vals[n + d..];
        let image = map.eval(f_point);
        let jac = map.jacobian(f_point);
        // f~ J^{-1} as a row vector: solve J^T x = f~^T.
        let jt = jac.transpose();
        let lu = jt.lu();
        if lu.determinant().norm() < 1e-14 {
            return Err(Error::SingularJacobianOnDisc { zeta });
        }
        let rhs = DVector::from_column_slice(cot);
        let x = lu.solve(&rhs).ok_or(Error::SingularJacobianOnDisc { zeta })?;
        Ok((image, x.iter().copied().collect()))
    })?;

    let keep = m_grid / 2 - 1;
    let project = |comp_range: std::ops::Range<usize>, from_f: bool| -> Result<(AnalyticDisc, f64)> {
        let mut defect: f64 = 0.0;
        let mut coeffs = Vec::with_capacity(comp_range.len());
        for cidx in comp_range {
            let samples: Vec<C64> = pushed
                .iter()
                .map(|(f, ft)| if from_f { f[cidx] } else { ft[cidx] })
                .collect();
            defect = defect.max(grid::negative_mode_mass(&samples));
            let mut c = grid::coefficients_from_samples(&samples, keep);
            // Trim trailing negligible coefficients.
            let scale = c.iter().map(|x| x.norm()).fold(f64::MIN_POSITIVE, f64::max);
            while c.len() > 1 && c.last().unwrap().norm() <= 1e-15 * scale {
                c.pop();
            }
            coeffs.push(c);
        }
        let len = coeffs.iter().map(|c| c.len()).max().unwrap_or(1);
        for c in &mut coeffs {
            c.resize(len, C64::new(0.0, 0.0));
        }
        Ok((AnalyticDisc::new(coeffs, lift.grid_m().max(4 * (len - 1).max(1)))?, defect))
    };

    let (h, d1) = project(0..n, true)?;
    let (g, d2) = project(n..n + d, true)?;
    let (ht, d3) = project(0..n, false)?;
    let (gt, d4) = project(n..n + d, false)?;
    let defect = d1.max(d2).max(d3).max(d4);
    Ok(PushforwardOutcome { lift: LiftedDisc::new(h, g, ht, gt)?, negative_mode_defect: defect })
}

/// Push-forward acting on 1-jet data only (value and derivative at zeta = 1),
/// via the chain rule including the second-order Jacobian term.
pub fn pushforward_jet(map: &PolynomialAutomorphism, jet: &[C64], n: usize, d: usize) -> Result<Vec<C64>> {
    let size = 2 * n + 2 * d;
    if jet.len() != 2 * size {
        return Err(Error::InvalidArgument("jet length must be 2(2n+2d)".into()));
    }
    let (vals, ders) = jet.split_at(size);
    let f1 = &vals[..n + d];
    let ft1 = &vals[n + d..];
    let df1 = &ders[..n + d];
    let ftd1 = &ders[n + d..];

    let jac = map.jacobian(f1);
    let jt = jac.transpose();
    let lu = jt.clone().lu();
    let x = lu
        .solve(&DVector::from_column_slice(ft1))
        .ok_or(Error::SingularJacobianOnDisc { zeta: C64::new(1.0, 0.0) })?;

    // Value part.
    let mut out = map.eval(f1);
    out.extend(x.iter().copied());

    // Derivative part: d/dzeta [F o f] = J f', and
    // d/dzeta [f~ J^{-1}] = f~' J^{-1} - f~ J^{-1} J' J^{-1}.
    let fd = DVector::from_column_slice(df1);
    let jf = &jac * &fd;
    out.extend(jf.iter().copied());

    let jprime = map.jacobian_directional(f1, df1);
    let ftd = lu
        .solve(&DVector::from_column_slice(ftd1))
        .ok_or(Error::SingularJacobianOnDisc { zeta: C64::new(1.0, 0.0) })?;
    // x^T = f~ J^{-1}; correction row = x^T J' J^{-1}: solve J^T y = J'^T x.
    let jpx = jprime.transpose() * &x;
    let y = lu
        .solve(&jpx)
        .ok_or(Error::SingularJacobianOnDisc { zeta: C64::new(1.0, 0.0) })?;
    out.extend((0..n + d).map(|i| ftd[i] - y[i]));
    Ok(out)
}

/// Options for the jet-determination experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Dilation parameter of the small-scale trick.
    pub t_dil: f64,
    /// The s-grid is grid_n x grid_n over the first two chart coordinates.
    pub grid_n: usize,
    /// Grid extent as a fraction of the chart radius.
    pub s_extent: f64,
    /// Tolerance for the same-1-jet and fixed-point assertions.
    pub tol: f64,
    pub preservation_samples: usize,
    pub preservation_tol: f64,
    pub seed: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            t_dil: 0.1,
            grid_n: 5,
            s_extent: 0.25,
            tol: 1e-8,
            preservation_samples: 128,
            preservation_tol: 1e-9,
            seed: 7,
        }
    }
}

/// Per-s record of the experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SRecord {
    pub s: Vec<f64>,
    pub center: Vec<C64>,
    pub jet_defect: f64,
    pub fixed_point_defect: f64,
    pub recovered_s_error: f64,
    pub status: String,
}

/// Aggregated experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub accepted: bool,
    pub rejection_reason: Option<String>,
    pub t_dil: f64,
    pub records: Vec<SRecord>,
    pub max_jet_defect: f64,
    pub max_fixed_point_defect: f64,
    pub max_recovered_s_error: f64,
    pub failures: usize,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    fn rejected(reason: String, t_dil: f64) -> Self {
        Self {
            accepted: false,
            rejection_reason: Some(reason),
            t_dil,
            records: Vec::new(),
            max_jet_defect: f64::NAN,
            max_fixed_point_defect: f64::NAN,
            max_recovered_s_error: f64::NAN,
            failures: 0,
        }
    }
}

/// The 2-jet determination experiment on the dilated manifold: push each
/// chart disc forward by the conjugated automorphism, verify the 1-jet at 1
/// is unchanged, recover the chart coordinates from the pushed jet, and
/// check the center is a fixed point.
///
/// `chart` must be a chart for `dilate(def, opts.t_dil)`.
pub fn jet_determination_experiment(
    def: &DefiningFunction,
    map: &PolynomialAutomorphism,
    chart: &FamilyChart,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    if !map.is_identity_plus_weight3() {
        return Ok(ExperimentReport::rejected(
            "map is not the identity plus weighted-order >= 3 terms".into(),
            opts.t_dil,
        ));
    }
    let defect = map.preservation_defect(def, opts.preservation_samples, 0.3, opts.seed)?;
    if defect > opts.preservation_tol {
        return Ok(ExperimentReport::rejected(
            format!("not an automorphism: preservation defect {defect:.3e}"),
            opts.t_dil,
        ));
    }
    let m_t = dilate(def, opts.t_dil)?;
    if chart.def() != &m_t {
        return Err(Error::InvalidArgument(
            "chart must be built on the dilated defining function".into(),
        ));
    }
    let f_t = map.conjugate_dilate(opts.t_dil)?;
    let (n, d) = (def.n(), def.d());

    let half = opts.grid_n / 2;
    let step = opts.s_extent * chart.epsilon() / half.max(1) as f64;
    let cells: Vec<(usize, usize)> =
        (0..opts.grid_n).flat_map(|i| (0..opts.grid_n).map(move |j| (i, j))).collect();

    let records: Vec<SRecord> = par::map_indexed(cells.len(), |idx| {
        let (i, j) = cells[idx];
        let mut s = vec![0.0; chart.dim()];
        s[0] = (i as f64 - half as f64) * step;
        s[1] = (j as f64 - half as f64) * step;
        let mut record = SRecord {
            s: s.clone(),
            center: Vec::new(),
            jet_defect: f64::NAN,
            fixed_point_defect: f64::NAN,
            recovered_s_error: f64::NAN,
            status: String::new(),
        };
        let lift = match chart.solve(&s) {
            Ok(l) => l.realize(),
            Err(e) => {
                record.status = format!("solve failed: {e}");
                return record;
            }
        };
        let center = lift.eval_stacked(C64::new(0.0, 0.0))[..n + d].to_vec();
        record.center = center.clone();
        let pushed = match pushforward(&f_t, &lift) {
            Ok(p) => p,
            Err(e) => {
                record.status = format!("pushforward failed: {e}");
                return record;
            }
        };
        let jet_orig = jet1_at_one(&lift);
        let jet_push = jet1_at_one(&pushed.lift);
        record.jet_defect = jet_orig
            .iter()
            .zip(&jet_push)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            .max(pushed.negative_mode_defect);

        match recover_from_jet(chart, &jet_push, &s) {
            Ok(rec) => {
                record.recovered_s_error =
                    rec.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            }
            Err(e) => {
                record.status = format!("jet recovery failed: {e}");
                return record;
            }
        }

        let image = f_t.eval(&center);
        record.fixed_point_defect =
            image.iter().zip(&center).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        record.status = "ok".into();
        record
    });

    let max_jet_defect =
        records.iter().filter(|r| r.status == "ok").map(|r| r.jet_defect).fold(0.0, f64::max);
    let max_fixed_point_defect = records
        .iter()
        .filter(|r| r.status == "ok")
        .map(|r| r.fixed_point_defect)
        .fold(0.0, f64::max);
    let max_recovered_s_error = records
        .iter()
        .filter(|r| r.status == "ok")
        .map(|r| r.recovered_s_error)
        .fold(0.0, f64::max);
    let failures = records.iter().filter(|r| r.status != "ok").count();
    Ok(ExperimentReport {
        accepted: true,
        rejection_reason: None,
        t_dil: opts.t_dil,
        records,
        max_jet_defect,
        max_fixed_point_defect,
        max_recovered_s_error,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conormal::{build_quadric_lift, verify_stationary};
    use crate::geometry::{HermitianPencil, PerturbationPolynomial, PerturbationTerm};
    use crate::solver::{family_chart, SolverConfig};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pencil_1x1() -> HermitianPencil {
        HermitianPencil::new(vec![DMatrix::from_element(1, 1, c(1.0, 0.0))]).unwrap()
    }

    fn small_config() -> SolverConfig {
        SolverConfig { n_f: 16, m_grid: 64, ..SolverConfig::default() }
    }

    fn chart_1x1() -> FamilyChart {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        family_chart(&def, &pencil, &[c(1.0, 0.0)], &[1.0], 0.5, &small_config()).unwrap()
    }

    #[test]
    fn dilation_examples() {
        let pencil = pencil_1x1();
        let quadric = DefiningFunction::quadric(pencil.clone());
        let dilated = dilate(&quadric, 0.5).unwrap();
        assert_eq!(dilated, quadric);

        let p = PerturbationPolynomial::new(
            1,
            1,
            vec![vec![PerturbationTerm { coefficient: 1.0, re_z: vec![3], im_z: vec![0], im_w: vec![0] }]],
        )
        .unwrap();
        let def = DefiningFunction::new(pencil.clone(), p, 1.0).unwrap();
        let dd = dilate(&def, 0.5).unwrap();
        assert_abs_diff_eq!(dd.perturbation().components()[0][0].coefficient, 0.5, epsilon = 1e-15);

        // Weight 3 via Im w Re z scales the same way.
        let p = PerturbationPolynomial::new(
            1,
            1,
            vec![vec![PerturbationTerm { coefficient: 1.0, re_z: vec![1], im_z: vec![0], im_w: vec![1] }]],
        )
        .unwrap();
        let def = DefiningFunction::new(pencil.clone(), p, 1.0).unwrap();
        let dd = dilate(&def, 0.5).unwrap();
        assert_abs_diff_eq!(dd.perturbation().components()[0][0].coefficient, 0.5, epsilon = 1e-15);

        // Composition law.
        let p = PerturbationPolynomial::new(
            1,
            1,
            vec![vec![PerturbationTerm { coefficient: 2.0, re_z: vec![4], im_z: vec![0], im_w: vec![0] }]],
        )
        .unwrap();
        let def = DefiningFunction::new(pencil, p, 1.0).unwrap();
        let ab = dilate(&dilate(&def, 0.7).unwrap(), 0.4).unwrap();
        let once = dilate(&def, 0.28).unwrap();
        assert_abs_diff_eq!(
            ab.perturbation().components()[0][0].coefficient,
            once.perturbation().components()[0][0].coefficient,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identity_pushforward_is_identity() {
        let pencil = pencil_1x1();
        let lift =
            build_quadric_lift(&pencil, &[c(1.0, 0.0)], &[c(-1.0, 0.0)], &[1.0], &[0.0], 64).unwrap();
        let id = PolynomialAutomorphism::identity(1, 1);
        let out = pushforward(&id, &lift).unwrap();
        assert!(out.negative_mode_defect < 1e-13);
        let a = lift.flatten_real(4);
        let b = out.lift.flatten_real(4);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn rotation_pushforward_stays_attached_and_rotates_ht() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let lift =
            build_quadric_lift(&pencil, &[c(1.0, 0.0)], &[c(-1.0, 0.0)], &[1.0], &[0.0], 64).unwrap();
        let theta = 0.7;
        let rot = PolynomialAutomorphism::phase_rotation(1, 1, theta);
        let out = pushforward(&rot, &lift).unwrap();
        assert!(out.negative_mode_defect < 1e-12);
        let report = verify_stationary(&def, &out.lift, 1e-8).unwrap();
        assert!(report.attachment_sup < 1e-12);
        assert!(report.lift_defect < 1e-11);
        // h~ picks up e^{-i theta}.
        let phase = c(theta.cos(), -theta.sin());
        for q in 0..2 {
            let expected = lift.ht.coefficient(0, q) * phase;
            assert_abs_diff_eq!((out.lift.ht.coefficient(0, q) - expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dilation_pushforward_scales_center() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let lift =
            build_quadric_lift(&pencil, &[c(0.8, 0.1)], &[c(-0.5, 0.2)], &[1.0], &[0.3], 64).unwrap();
        let lambda = 1.3;
        let dil = PolynomialAutomorphism::dilation(1, 1, lambda);
        let out = pushforward(&dil, &lift).unwrap();
        let report = verify_stationary(&def, &out.lift, 1e-8).unwrap();
        assert!(report.attachment_sup < 1e-12, "attachment {}", report.attachment_sup);
        let c0 = lift.eval_stacked(c(0.0, 0.0));
        let c1 = out.lift.eval_stacked(c(0.0, 0.0));
        assert_abs_diff_eq!((c1[0] - c0[0] * lambda).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((c1[1] - c0[1] * lambda * lambda).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn center_and_jet_jacobians_have_full_rank_1x1() {
        let chart = chart_1x1();
        let center = center_jacobian(&chart).unwrap();
        assert_eq!(center.rank, 4);
        let jet = jet_jacobian(&chart).unwrap();
        assert_eq!(jet.rank, 4);
    }

    #[test]
    fn chart_center_matches_initial_disc() {
        let chart = chart_1x1();
        let center = center_map(&chart, &[0.0; 4]).unwrap();
        // f_0(0) = (V, 2 conj(V)^T A V) = (1, 2).
        assert_abs_diff_eq!((center[0] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((center[1] - c(2.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn jet_roundtrip_recovery() {
        let chart = chart_1x1();
        let s_true = [0.04, -0.02, 0.035, 0.01];
        let target = jet_map(&chart, &s_true).unwrap();
        let recovered = recover_from_jet(&chart, &target, &[0.0; 4]).unwrap();
        for (a, b) in recovered.iter().zip(&s_true) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        // Jet of the base has position part (0, 0, 0, c/2).
        let base_jet = jet_map(&chart, &[0.0; 4]).unwrap();
        assert!(base_jet[..3].iter().all(|v| v.norm() < 1e-12));
        assert_abs_diff_eq!((base_jet[3] - c(0.5, 0.0)).norm(), 0.0, epsilon = 1e-12);
        let rec0 = recover_from_jet(&chart, &base_jet, &[0.01, 0.0, -0.01, 0.0]).unwrap();
        assert!(rec0.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn jet_chain_rule_identity_at_one() {
        // For a map with identity differential at 0 and a disc with
        // f(1) = 0, the jet of the pushforward equals the pushforward of
        // the jet.
        let pencil = pencil_1x1();
        let lift = crate::conormal::build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], 64)
            .unwrap()
            .realize();
        let map = PolynomialAutomorphism::identity_plus_term(
            1,
            1,
            1,
            MapMonomial { coefficient: c(0.05, 0.02), exponents: vec![3, 0] },
        )
        .unwrap();
        let pushed = pushforward(&map, &lift).unwrap();
        let jet_direct = jet1_at_one(&pushed.lift);
        let jet_chain = pushforward_jet(&map, &jet1_at_one(&lift), 1, 1).unwrap();
        for (a, b) in jet_direct.iter().zip(&jet_chain) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn experiment_accepts_identity_with_tiny_defects() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let opts = ExperimentOptions { grid_n: 3, ..ExperimentOptions::default() };
        let m_t = dilate(&def, opts.t_dil).unwrap();
        let chart =
            family_chart(&m_t, &pencil, &[c(1.0, 0.0)], &[1.0], 0.5, &small_config()).unwrap();
        let report =
            jet_determination_experiment(&def, &PolynomialAutomorphism::identity(1, 1), &chart, &opts)
                .unwrap();
        assert!(report.accepted);
        assert_eq!(report.failures, 0);
        assert_eq!(report.records.len(), 9);
        assert!(report.max_fixed_point_defect < 1e-12, "defect {}", report.max_fixed_point_defect);
        assert!(report.max_jet_defect < 1e-10);
    }

    #[test]
    fn center_rank_deficiency_matches_gram_for_d_greater_than_n() {
        // d = 2 > n = 1 satisfies (t) but never (f); the center map of a
        // synthetic numeric-kernel chart must be rank deficient, in step
        // with the Gram matrix verdict.
        use crate::rh_linear::{assemble_g, gram_d, numeric_kernel};
        let pencil = HermitianPencil::new(vec![
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(2.0, 0.0)),
        ])
        .unwrap();
        let def = DefiningFunction::quadric(pencil.clone());
        let cfg = small_config();
        let cvec = [1.0, 0.0];
        let v = [c(1.0, 0.0)];
        let base = crate::conormal::build_initial_lift(&pencil, &v, &cvec, cfg.m_grid).unwrap();
        let g = assemble_g(&def, &base.realize(), &cvec, cfg.m_grid).unwrap();
        let kernel = numeric_kernel(&g, true, cfg.n_f).unwrap();
        assert_eq!(kernel.dim, 6);
        let chart = FamilyChart::with_basis(def, base, kernel, 0.5, cfg).unwrap();
        let report = center_jacobian(&chart).unwrap();
        assert!(report.rank < 6, "rank {} should be deficient", report.rank);
        assert!(!gram_d(&pencil, &v).unwrap().positive_definite);
    }

    #[test]
    fn experiment_rejects_non_preserving_candidate() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let opts = ExperimentOptions { grid_n: 3, ..ExperimentOptions::default() };
        let m_t = dilate(&def, opts.t_dil).unwrap();
        let chart =
            family_chart(&m_t, &pencil, &[c(1.0, 0.0)], &[1.0], 0.5, &small_config()).unwrap();
        // Identity plus a weight-3 term that does not preserve the quadric.
        let map = PolynomialAutomorphism::identity_plus_term(
            1,
            1,
            0,
            MapMonomial { coefficient: c(0.1, 0.0), exponents: vec![3, 0] },
        )
        .unwrap();
        let report = jet_determination_experiment(&def, &map, &chart, &opts).unwrap();
        assert!(!report.accepted);
        assert!(report.rejection_reason.unwrap().contains("not an automorphism"));

        // A weight-2 candidate is rejected before the preservation check.
        let map = PolynomialAutomorphism::identity_plus_term(
            1,
            1,
            0,
            MapMonomial { coefficient: c(0.1, 0.0), exponents: vec![2, 0] },
        )
        .unwrap();
        let report = jet_determination_experiment(&def, &map, &chart, &opts).unwrap();
        assert!(!report.accepted);
        assert!(report.rejection_reason.unwrap().contains("weighted-order"));
    }
}

//! Nonlinear Riemann-Hilbert solver: Gauss-Newton on the collocated
//! defining rows of a constrained lift, with linear chart constraints that
//! pin the kernel directions of the linearization, plus continuation in the
//! perturbation scale t and the resulting family chart.
//!
//! Discretization: the unknowns are the real and imaginary parts of the
//! cofactor coefficients of the four (1 - zeta)-factored components, degree
//! < N_F. The rectangular system stacks the 2n+2d real rows at every grid
//! point (weighted by 1/sqrt(M)) over the 2n+2d chart constraints
//! <f - base, e_i> - s_i in the discrete boundary L2 pairing, which equals
//! the coefficient pairing for these degrees.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::conormal::{self, build_initial_lift, LiftPoint};
use crate::discs::{AnalyticDisc, ConstrainedLift, FactoredDisc, LiftedDisc};
use crate::error::{Error, Result};
use crate::geometry::{DefiningFunction, HermitianPencil};
use crate::grid::BoundaryGrid;
use crate::linalg::Lstsq;
use crate::par;
use crate::rh_linear::{explicit_kernel_basis, KernelBasis};

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Truncation degree of realized discs; cofactors carry n_f coefficients.
    pub n_f: usize,
    /// Boundary grid size (>= 4 n_f).
    pub m_grid: usize,
    /// Convergence tolerance on the residual sup norm.
    pub newton_tol: f64,
    pub max_iter: usize,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub continuation_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_f: 64,
            m_grid: 256,
            newton_tol: 1e-12,
            max_iter: 50,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            continuation_steps: 8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_f < 3 {
            return Err(Error::InvalidArgument("n_f must be at least 3".into()));
        }
        if self.m_grid < 4 * self.n_f {
            return Err(Error::InvalidArgument(format!(
                "grid {} must be at least 4 x n_f = {}",
                self.m_grid,
                4 * self.n_f
            )));
        }
        if !(self.newton_tol > 0.0) || !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.continuation_steps == 0 {
            return Err(Error::InvalidArgument("continuation needs at least one step".into()));
        }
        Ok(())
    }
}

/// One Gauss-Newton step record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub residual_sup: f64,
    pub constraint_sup: f64,
    pub step_scale: f64,
}

/// Iteration history of a solve.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    pub steps: Vec<TraceStep>,
}

impl SolveTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,residual_sup,constraint_sup,step_scale\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                s.iteration, s.residual_sup, s.constraint_sup, s.step_scale
            ));
        }
        out
    }

    pub fn final_residual(&self) -> f64 {
        self.steps.last().map(|s| s.residual_sup.max(s.constraint_sup)).unwrap_or(f64::NAN)
    }
}

/// A converged solve with its trace.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub lift: ConstrainedLift,
    pub trace: SolveTrace,
}

struct Discretization<'a> {
    def: &'a DefiningFunction,
    n: usize,
    d: usize,
    n_f: usize,
    grid: BoundaryGrid,
    shift: Vec<f64>,
    /// Flattened realized basis elements (length (2n+2d)(n_f+1) 2).
    basis_flat: Vec<Vec<f64>>,
    base_flat: Vec<f64>,
    s: Vec<f64>,
    weight: f64,
}

impl<'a> Discretization<'a> {
    fn new(
        def: &'a DefiningFunction,
        base: &ConstrainedLift,
        basis: &[LiftedDisc],
        s: &[f64],
        cfg: &SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (n, d) = (def.n(), def.d());
        if base.n() != n || base.d() != d {
            return Err(Error::InvalidArgument("base dimensions do not match".into()));
        }
        if s.len() != basis.len() {
            return Err(Error::InvalidArgument("one chart coordinate per basis element".into()));
        }
        let grid = BoundaryGrid::new(cfg.m_grid)?;
        let basis_flat = basis.iter().map(|b| b.flatten_real(cfg.n_f)).collect();
        let base_flat = base.realize().flatten_real(cfg.n_f);
        Ok(Self {
            def,
            n,
            d,
            n_f: cfg.n_f,
            grid,
            shift: base.shift.clone(),
            basis_flat,
            base_flat,
            s: s.to_vec(),
            weight: 1.0 / (cfg.m_grid as f64).sqrt(),
        })
    }

    fn size(&self) -> usize {
        2 * self.n + 2 * self.d
    }

    fn cols(&self) -> usize {
        self.size() * self.n_f * 2
    }

    fn rows(&self) -> usize {
        self.grid.len() * self.size() + self.basis_flat.len()
    }

    fn unknowns_from(&self, lift: &ConstrainedLift) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.cols());
        for part in [&lift.hf, &lift.gf, &lift.htf, &lift.gtf] {
            let u = part.cofactor();
            for comp in 0..u.components() {
                for q in 0..self.n_f {
                    let a = u.coefficient(comp, q);
                    x.push(a.re);
                    x.push(a.im);
                }
            }
        }
        x
    }

    fn lift_from(&self, x: &[f64]) -> ConstrainedLift {
        let mut offset = 0;
        let mut parts = Vec::with_capacity(4);
        for comps in [self.n, self.d, self.n, self.d] {
            let coeffs: Vec<Vec<C64>> = (0..comps)
                .map(|c| {
                    (0..self.n_f)
                        .map(|q| {
                            let base = offset + (c * self.n_f + q) * 2;
                            C64::new(x[base], x[base + 1])
                        })
                        .collect()
                })
                .collect();
            offset += comps * self.n_f * 2;
            parts.push(FactoredDisc::new(
                AnalyticDisc::new(coeffs, self.grid.len()).expect("shape fixed"),
            ));
        }
        let gtf = parts.pop().unwrap();
        let htf = parts.pop().unwrap();
        let gf = parts.pop().unwrap();
        let hf = parts.pop().unwrap();
        ConstrainedLift::new(hf, gf, htf, gtf, self.shift.clone()).expect("shape fixed")
    }

    /// Weighted residual vector plus sup norms of the two blocks.
    fn residual(&self, lift: &ConstrainedLift) -> Result<(Vec<f64>, f64, f64)> {
        let realized = lift.realize();
        let size = self.size();
        let m = self.grid.len();
        let rows = par::try_map_indexed(m, |i| {
            let zeta = self.grid.point(i);
            let p = LiftPoint::from_stacked(&realized.eval_stacked(zeta), self.n, self.d);
            conormal::rows_at(self.def, &p, zeta)
        })?;
        let mut out = vec![0.0; self.rows()];
        let mut sup: f64 = 0.0;
        for (i, r) in rows.iter().enumerate() {
            for rho in 0..size {
                sup = sup.max(r[rho].abs());
                out[i * size + rho] = self.weight * r[rho];
            }
        }
        let flat = realized.flatten_real(self.n_f);
        let mut cons_sup: f64 = 0.0;
        for (i, e) in self.basis_flat.iter().enumerate() {
            let mut dot = 0.0;
            for (k, ev) in e.iter().enumerate() {
                dot += (flat[k] - self.base_flat[k]) * ev;
            }
            let val = dot - self.s[i];
            cons_sup = cons_sup.max(val.abs());
            out[m * size + i] = val;
        }
        Ok((out, sup, cons_sup))
    }

    fn jacobian(&self, lift: &ConstrainedLift) -> Result<faer::Mat<f64>> {
        let realized = lift.realize();
        let size = self.size();
        let m = self.grid.len();
        let grads = par::try_map_indexed(m, |i| {
            let zeta = self.grid.point(i);
            let p = LiftPoint::from_stacked(&realized.eval_stacked(zeta), self.n, self.d);
            conormal::rows_and_grad_at(self.def, &p, zeta).map(|rg| rg.grad)
        })?;
        // Factored basis functions (1 - zeta) zeta^q per grid point.
        let psi: Vec<Vec<C64>> = (0..m)
            .map(|i| {
                let z = self.grid.point(i);
                let mut pows = Vec::with_capacity(self.n_f + 1);
                let mut acc = C64::new(1.0, 0.0);
                for _ in 0..=self.n_f {
                    pows.push(acc);
                    acc *= z;
                }
                (0..self.n_f).map(|q| pows[q] - pows[q + 1]).collect()
            })
            .collect();

        let n_f = self.n_f;
        let rows_grid = m * size;
        let mat = faer::Mat::from_fn(self.rows(), self.cols(), |r, c| {
            let p = c / (n_f * 2);
            let rest = c % (n_f * 2);
            let (q, part) = (rest / 2, rest % 2);
            if r < rows_grid {
                let (i, rho) = (r / size, r % size);
                let gv = grads[i][(rho, p)].conj() * psi[i][q];
                self.weight * if part == 0 { 2.0 * gv.re } else { -2.0 * gv.im }
            } else {
                let e = &self.basis_flat[r - rows_grid];
                // Realized coefficient q gains +u_q, coefficient q+1 gains
                // -u_q from the (1 - zeta) factor.
                let at = |qq: usize| -> (f64, f64) {
                    let base = (p * (n_f + 1) + qq) * 2;
                    (e[base], e[base + 1])
                };
                let (re_q, im_q) = at(q);
                let (re_q1, im_q1) = at(q + 1);
                if part == 0 {
                    re_q - re_q1
                } else {
                    im_q - im_q1
                }
            }
        });
        Ok(mat)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gauss_newton(
    disc: &Discretization,
    start: &ConstrainedLift,
    cfg: &SolverConfig,
    frozen: Option<&Lstsq>,
    t_label: Option<f64>,
) -> Result<SolveOutcome> {
    let mut x = disc.unknowns_from(start);
    let mut lift = disc.lift_from(&x);
    let mut trace = SolveTrace::default();
    let mut use_frozen = frozen.is_some();
    let mut last_sup = f64::INFINITY;

    for iteration in 0..=cfg.max_iter {
        let (res, sup, cons_sup) = disc.residual(&lift)?;
        trace.steps.push(TraceStep {
            iteration,
            residual_sup: sup,
            constraint_sup: cons_sup,
            step_scale: 0.0,
        });
        if sup < cfg.newton_tol && cons_sup < cfg.newton_tol {
            return Ok(SolveOutcome { lift, trace });
        }
        if iteration == cfg.max_iter {
            break;
        }
        // Frozen factorizations are good while the iteration contracts;
        // switch to fresh Jacobians as soon as progress stalls.
        if use_frozen && sup.max(cons_sup) > 0.7 * last_sup {
            use_frozen = false;
        }
        last_sup = sup.max(cons_sup);

        let owned;
        let factor: &Lstsq = if use_frozen {
            frozen.unwrap()
        } else {
            owned = Lstsq::new(&disc.jacobian(&lift)?);
            let cond = owned.condition_estimate();
            if cond > 1e12 {
                return Err(Error::LinearizationSingular { cond });
            }
            &owned
        };

        let neg_res: Vec<f64> = res.iter().map(|v| -v).collect();
        let delta = factor.solve(&neg_res);
        let merit0 = l2(&res);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + lambda * di).collect();
            let trial_lift = disc.lift_from(&trial);
            if let Ok((trial_res, _, _)) = disc.residual(&trial_lift) {
                if l2(&trial_res) < merit0 * (1.0 - 1e-4 * lambda) || merit0 == 0.0 {
                    x = trial;
                    lift = trial_lift;
                    trace.steps.last_mut().unwrap().step_scale = lambda;
                    accepted = true;
                    break;
                }
            }
            lambda *= cfg.backtrack_factor;
        }
        if !accepted {
            if use_frozen {
                // Retry the same iterate with a fresh linearization.
                use_frozen = false;
                last_sup = f64::INFINITY;
                continue;
            }
            return Err(Error::NonConvergence {
                iterations: iteration,
                residual: sup.max(cons_sup),
                t: t_label,
            });
        }
    }
    let residual = trace.final_residual();
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual, t: t_label })
}

/// Gauss-Newton solve of the constrained problem with chart coordinates s
/// relative to `start` along the given kernel basis directions.
pub fn solve_constrained(
    def: &DefiningFunction,
    start: &ConstrainedLift,
    basis: &[LiftedDisc],
    s: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    let disc = Discretization::new(def, start, basis, s, cfg)?;
    gauss_newton(&disc, start, cfg, None, (def.t() != 0.0).then_some(def.t()))
}

/// Continuation in the perturbation scale: solves at t_k = k t / steps,
/// warm-starting each step from the previous solution.
pub fn continuation(
    def: &DefiningFunction,
    start: &ConstrainedLift,
    basis: &[LiftedDisc],
    s: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let t_target = def.t();
    if t_target == 0.0 || def.is_quadric() {
        return solve_constrained(def, start, basis, s, cfg);
    }
    let mut current = start.clone();
    let mut outcome = None;
    for k in 1..=cfg.continuation_steps {
        let t_k = t_target * k as f64 / cfg.continuation_steps as f64;
        let def_k = def.with_scale(t_k)?;
        let disc = Discretization::new(&def_k, start, basis, s, cfg)?;
        let res = gauss_newton(&disc, &current, cfg, None, Some(t_k))?;
        current = res.lift.clone();
        outcome = Some(res);
    }
    Ok(outcome.expect("at least one continuation step"))
}

/// Orthonormalizes realized kernel elements in the coefficient pairing,
/// returning the rotated lifts.
fn orthonormal_lifts(basis: &[LiftedDisc], n_f: usize) -> Result<Vec<LiftedDisc>> {
    let mut out: Vec<(LiftedDisc, Vec<f64>)> = Vec::with_capacity(basis.len());
    for e in basis {
        let mut lift = e.clone();
        let mut flat = e.flatten_real(n_f);
        for _ in 0..2 {
            for (ql, qf) in &out {
                let dot: f64 = flat.iter().zip(qf).map(|(a, b)| a * b).sum();
                if dot != 0.0 {
                    flat.iter_mut().zip(qf).for_each(|(a, b)| *a -= dot * b);
                    lift = lift.linear_combination(1.0, ql, -dot)?;
                }
            }
        }
        let norm = l2(&flat);
        if norm < 1e-10 {
            return Err(Error::InvalidArgument("kernel basis is numerically dependent".into()));
        }
        flat.iter_mut().for_each(|a| *a /= norm);
        let zero = LiftedDisc::new(
            AnalyticDisc::zero(lift.n(), lift.grid_m())?,
            AnalyticDisc::zero(lift.d(), lift.grid_m())?,
            AnalyticDisc::zero(lift.n(), lift.grid_m())?,
            AnalyticDisc::zero(lift.d(), lift.grid_m())?,
        )?;
        lift = lift.linear_combination(1.0 / norm, &zero, 0.0)?;
        out.push((lift, flat));
    }
    Ok(out.into_iter().map(|(l, _)| l).collect())
}

/// Local parameterization s in R^{2n+2d} -> lifted stationary disc near the
/// base disc.
#[derive(Clone)]
pub struct FamilyChart {
    def: DefiningFunction,
    base: ConstrainedLift,
    basis: Vec<LiftedDisc>,
    basis_cofactors: Vec<ConstrainedLift>,
    raw_basis: Arc<KernelBasis>,
    epsilon: f64,
    config: SolverConfig,
    frozen: Arc<Lstsq>,
}

impl FamilyChart {
    /// Chart anchored at `base0` (continued to t when the defining function
    /// is perturbed) with orthonormalized kernel directions from `raw`.
    pub fn with_basis(
        def: DefiningFunction,
        base0: ConstrainedLift,
        raw: KernelBasis,
        epsilon: f64,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        let basis = orthonormal_lifts(&raw.basis, config.n_f)?;
        let zeros = vec![0.0; basis.len()];
        let base = if def.t() != 0.0 && !def.is_quadric() {
            continuation(&def, &base0, &basis, &zeros, &config)?.lift
        } else {
            base0
        };
        // Chart solves reuse the factorization at the base.
        let disc = Discretization::new(&def, &base, &basis, &zeros, &config)?;
        let frozen = Arc::new(Lstsq::new(&disc.jacobian(&base)?));
        if frozen.condition_estimate() > 1e12 {
            return Err(Error::LinearizationSingular { cond: frozen.condition_estimate() });
        }
        let basis_cofactors = basis
            .iter()
            .map(|e| {
                ConstrainedLift::new(
                    FactoredDisc::from_realized(&e.h, 1e-9)?,
                    FactoredDisc::from_realized(&e.g, 1e-9)?,
                    FactoredDisc::from_realized(&e.ht, 1e-9)?,
                    FactoredDisc::from_realized(&e.gt, 1e-9)?,
                    vec![0.0; def.d()],
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            def,
            base,
            basis,
            basis_cofactors,
            raw_basis: Arc::new(raw),
            epsilon,
            config,
            frozen,
        })
    }

    pub fn def(&self) -> &DefiningFunction {
        &self.def
    }

    pub fn base(&self) -> &ConstrainedLift {
        &self.base
    }

    /// Orthonormalized chart directions.
    pub fn basis(&self) -> &[LiftedDisc] {
        &self.basis
    }

    pub fn raw_basis(&self) -> &KernelBasis {
        &self.raw_basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Warm-started solve at chart coordinates s.
    pub fn solve(&self, s: &[f64]) -> Result<ConstrainedLift> {
        Ok(self.solve_traced(s)?.lift)
    }

    pub fn solve_traced(&self, s: &[f64]) -> Result<SolveOutcome> {
        if s.len() != self.basis.len() {
            return Err(Error::InvalidArgument("chart coordinate dimension mismatch".into()));
        }
        let norm = l2(s);
        if norm >= self.epsilon {
            return Err(Error::InvalidArgument(format!(
                "|s| = {norm:.3e} outside the chart radius {:.3e}",
                self.epsilon
            )));
        }
        // First-order warm start: base + sum_i s_i e_i in cofactor form.
        let mut warm = self.base.clone();
        for (si, e) in s.iter().zip(&self.basis_cofactors) {
            if *si != 0.0 {
                warm = ConstrainedLift::new(
                    FactoredDisc::new(
                        warm.hf.cofactor().linear_combination(1.0, e.hf.cofactor(), *si)?,
                    ),
                    FactoredDisc::new(
                        warm.gf.cofactor().linear_combination(1.0, e.gf.cofactor(), *si)?,
                    ),
                    FactoredDisc::new(
                        warm.htf.cofactor().linear_combination(1.0, e.htf.cofactor(), *si)?,
                    ),
                    FactoredDisc::new(
                        warm.gtf.cofactor().linear_combination(1.0, e.gtf.cofactor(), *si)?,
                    ),
                    warm.shift.clone(),
                )?;
            }
        }
        let disc = Discretization::new(&self.def, &self.base, &self.basis, s, &self.config)?;
        gauss_newton(
            &disc,
            &warm,
            &self.config,
            Some(&self.frozen),
            (self.def.t() != 0.0).then_some(self.def.t()),
        )
    }
}

/// Builds the chart at the initial disc of a fully non-degenerate pencil:
/// base from the explicit construction (continued to t when the defining
/// function is perturbed), directions from the closed-form kernel basis.
pub fn family_chart(
    def: &DefiningFunction,
    pencil: &HermitianPencil,
    v: &[C64],
    c: &[f64],
    epsilon: f64,
    config: &SolverConfig,
) -> Result<FamilyChart> {
    let base0 = build_initial_lift(pencil, v, c, config.m_grid)?;
    let raw = explicit_kernel_basis(pencil, v, c, config.m_grid)?;
    FamilyChart::with_basis(def.clone(), base0, raw, epsilon, config.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pencil_1x1() -> HermitianPencil {
        HermitianPencil::new(vec![DMatrix::from_element(1, 1, c(1.0, 0.0))]).unwrap()
    }

    fn small_config() -> SolverConfig {
        SolverConfig { n_f: 16, m_grid: 64, ..SolverConfig::default() }
    }

    fn cubic_def(t: f64) -> DefiningFunction {
        use crate::geometry::{PerturbationPolynomial, PerturbationTerm};
        let p = PerturbationPolynomial::new(
            1,
            1,
            vec![vec![PerturbationTerm {
                coefficient: 1.0,
                re_z: vec![3],
                im_z: vec![0],
                im_w: vec![0],
            }]],
        )
        .unwrap();
        DefiningFunction::new(pencil_1x1(), p, t).unwrap()
    }

    #[test]
    fn config_invariants_enforced() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { m_grid: 100, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { newton_tol: 0.0, ..SolverConfig::default() }.validate().is_err());
    }

    #[test]
    fn quadric_solve_at_zero_returns_start_immediately() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let cfg = small_config();
        let base = build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let raw = explicit_kernel_basis(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let basis = orthonormal_lifts(&raw.basis, cfg.n_f).unwrap();
        let out = solve_constrained(&def, &base, &basis, &vec![0.0; 4], &cfg).unwrap();
        // Converges at iteration 0: one residual evaluation, no step.
        assert_eq!(out.trace.steps.len(), 1);
        let diff: f64 = out
            .lift
            .realize()
            .flatten_real(cfg.n_f)
            .iter()
            .zip(base.realize().flatten_real(cfg.n_f))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(diff, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn chart_moves_first_order_along_kernel_directions() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let cfg = small_config();
        let chart = family_chart(&def, &pencil, &[c(1.0, 0.0)], &[1.0], 0.5, &cfg).unwrap();
        let delta = 1e-3;
        for i in 0..chart.dim() {
            let mut s = vec![0.0; chart.dim()];
            s[i] = delta;
            let lift = chart.solve(&s).unwrap();
            let expected = chart
                .base()
                .realize()
                .linear_combination(1.0, &chart.basis()[i], delta)
                .unwrap();
            let diff: f64 = lift
                .realize()
                .flatten_real(cfg.n_f)
                .iter()
                .zip(expected.flatten_real(cfg.n_f))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 10.0 * delta * delta, "direction {i}: O(delta^2) bound violated: {diff}");
        }
    }

    #[test]
    fn chart_outputs_are_stationary() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let cfg = small_config();
        let chart = family_chart(&def, &pencil, &[c(1.0, 0.0)], &[1.0], 0.5, &cfg).unwrap();
        let s = [0.02, -0.03, 0.01, 0.04];
        let lift = chart.solve(&s).unwrap().realize();
        let report = conormal::verify_stationary(&def, &lift, 1e-8).unwrap();
        assert!(report.attachment_sup < 10.0 * cfg.newton_tol);
        assert!(report.lift_defect < 1e-10);
        assert!(report.nonvanishing);
    }

    #[test]
    fn cubic_perturbation_converges_with_order_t_distance() {
        let cfg = small_config();
        let pencil = pencil_1x1();
        let base = build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let raw = explicit_kernel_basis(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let basis = orthonormal_lifts(&raw.basis, cfg.n_f).unwrap();
        let zeros = vec![0.0; 4];
        let base_flat = base.realize().flatten_real(cfg.n_f);

        let dist_at = |t: f64| -> f64 {
            let def = cubic_def(t);
            let out = continuation(&def, &base, &basis, &zeros, &cfg).unwrap();
            let report = conormal::verify_stationary(&def, &out.lift.realize(), 1e-8).unwrap();
            assert!(report.attachment_sup < 1e-11, "attachment {}", report.attachment_sup);
            assert!(report.lift_defect < 1e-10);
            out.lift
                .realize()
                .flatten_real(cfg.n_f)
                .iter()
                .zip(&base_flat)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let d1 = dist_at(0.02);
        let d2 = dist_at(0.01);
        assert!(d1 > 1e-5, "perturbation must move the disc, got {d1}");
        let ratio = d2 / d1;
        assert!((0.4..=0.6).contains(&ratio), "linear decay in t violated: {ratio}");
    }

    #[test]
    fn continuation_path_independent_of_step_count() {
        let cfg = small_config();
        let pencil = pencil_1x1();
        let base = build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let raw = explicit_kernel_basis(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let basis = orthonormal_lifts(&raw.basis, cfg.n_f).unwrap();
        let zeros = vec![0.0; 4];
        let def = cubic_def(0.02);
        let a = continuation(&def, &base, &basis, &zeros, &cfg).unwrap();
        let cfg2 = SolverConfig { continuation_steps: 16, ..cfg.clone() };
        let b = continuation(&def, &base, &basis, &zeros, &cfg2).unwrap();
        let diff: f64 = a
            .lift
            .realize()
            .flatten_real(cfg.n_f)
            .iter()
            .zip(b.lift.realize().flatten_real(cfg.n_f))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 10.0 * cfg.newton_tol, "paths differ by {diff}");
    }

    #[test]
    fn hopeless_scale_fails_controlled() {
        let cfg = SolverConfig { max_iter: 12, continuation_steps: 2, ..small_config() };
        let pencil = pencil_1x1();
        let base = build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let raw = explicit_kernel_basis(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let basis = orthonormal_lifts(&raw.basis, cfg.n_f).unwrap();
        let def = cubic_def(10.0);
        let err = continuation(&def, &base, &basis, &vec![0.0; 4], &cfg).unwrap_err();
        match err {
            Error::NonConvergence { t, .. } => assert!(t.is_some()),
            other => panic!("expected controlled non-convergence, got {other}"),
        }
    }

    #[test]
    fn newton_tail_is_quadratic() {
        // Log-log slope of successive residuals over the fast tail.
        let cfg = SolverConfig { n_f: 24, m_grid: 96, ..SolverConfig::default() };
        let pencil = pencil_1x1();
        let base = build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let raw = explicit_kernel_basis(&pencil, &[c(1.0, 0.0)], &[1.0], cfg.m_grid).unwrap();
        let basis = orthonormal_lifts(&raw.basis, cfg.n_f).unwrap();
        let def = cubic_def(0.02);
        let out = solve_constrained(&def, &base, &basis, &vec![0.0; 4], &cfg).unwrap();
        let residuals: Vec<f64> = out
            .trace
            .steps
            .iter()
            .map(|s| s.residual_sup.max(s.constraint_sup))
            .filter(|r| *r > 1e-15)
            .collect();
        let mut slopes = Vec::new();
        for w in residuals.windows(2) {
            if w[0] < 1e-4 && w[1] < w[0] {
                slopes.push(w[1].ln() / w[0].ln());
            }
        }
        assert!(!slopes.is_empty(), "no tail datapoints: {residuals:?}");
        let s = slopes.iter().fold(0.0_f64, |a, &b| a.max(b));
        assert!(s >= 1.8, "quadratic tail violated: slopes {slopes:?} from {residuals:?}");
    }
}

//! The conormal-bundle defining system, the explicit quadric stationary-disc
//! family, and residual verification that a lifted disc is stationary.
//!
//! For a defining function r the 2n+2d real rows at a cotangent point
//! (z, w, z~, w~) and boundary parameter zeta are produced by eliminating the
//! conormal coefficients through the w-block of the gradient:
//!
//!   gamma = (M_w^T)^{-1} (conj(zeta) w~),   (M_w)_{jl} = d r_j / d w_l,
//!
//!   rows 1..d:        r_j(z, w)
//!   rows d+1..d+n:    E_k + conj(E_k),      E_k = z~_k - zeta sum_j gamma_j d_{z_k} r_j
//!   rows d+n+1..d+2n: i E_k - i conj(E_k)
//!   rows d+2n+1..:    (i/2)(gamma_j - conj(gamma_j))
//!
//! At t = 0 the w-block is I/2, gamma = 2 conj(zeta) w~, and the rows reduce
//! verbatim to the quadric display (the z~-rows carry the extra factor of
//! zeta that normalizes away the conj(zeta) produced by the elimination).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::discs::{AnalyticDisc, ConstrainedLift, FactoredDisc, LiftedDisc};
use crate::error::{Error, Result};
use crate::geometry::{DefiningFunction, HermitianPencil};
use crate::grid::BoundaryGrid;
use crate::linalg;
use crate::par;

/// A cotangent point (z, w, z~, w~).
#[derive(Debug, Clone)]
pub struct LiftPoint {
    pub z: Vec<C64>,
    pub w: Vec<C64>,
    pub zt: Vec<C64>,
    pub wt: Vec<C64>,
}

impl LiftPoint {
    pub(crate) fn from_stacked(values: &[C64], n: usize, d: usize) -> Self {
        Self {
            z: values[..n].to_vec(),
            w: values[n..n + d].to_vec(),
            zt: values[n + d..2 * n + d].to_vec(),
            wt: values[2 * n + d..].to_vec(),
        }
    }
}

/// Rows and their holomorphic gradient with respect to the conjugated
/// variables, columns in the natural order (z, w, z~, w~).
#[derive(Debug, Clone)]
pub(crate) struct RowsGrad {
    pub rows: DVector<f64>,
    pub grad: DMatrix<C64>,
}

fn gamma_system(
    def: &DefiningFunction,
    jet: &crate::geometry::RJet,
    wt: &[C64],
    zeta: C64,
) -> Result<(nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>, DVector<C64>)> {
    let d = def.d();
    let mt = DMatrix::from_fn(d, d, |l, j| jet.dw[(j, l)]);
    let scale = mt.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let lu = mt.clone().lu();
    let det = lu.determinant();
    if det.norm() <= 1e-12 * scale.powi(d as i32) {
        return Err(Error::ConormalEliminationDegenerate { zeta, det_abs: det.norm() });
    }
    let rhs = DVector::from_fn(d, |l, _| zeta.conj() * wt[l]);
    let gamma = lu
        .solve(&rhs)
        .ok_or(Error::ConormalEliminationDegenerate { zeta, det_abs: det.norm() })?;
    Ok((lu, gamma))
}

/// Defining rows at a cotangent point.
pub(crate) fn rows_at(def: &DefiningFunction, p: &LiftPoint, zeta: C64) -> Result<DVector<f64>> {
    let (n, d) = (def.n(), def.d());
    let jet = def.jet2(&p.z, &p.w)?;
    let (_, gamma) = gamma_system(def, &jet, &p.wt, zeta)?;
    let mut rows = DVector::zeros(2 * n + 2 * d);
    for j in 0..d {
        rows[j] = jet.r[j];
    }
    for k in 0..n {
        let mut e = p.zt[k];
        for j in 0..d {
            e -= zeta * gamma[j] * jet.dz[(j, k)];
        }
        rows[d + k] = 2.0 * e.re;
        rows[d + n + k] = -2.0 * e.im;
    }
    for j in 0..d {
        rows[d + 2 * n + j] = -gamma[j].im;
    }
    Ok(rows)
}

/// Rows plus the full gradient used by both the linearization and the
/// nonlinear solver.
pub(crate) fn rows_and_grad_at(def: &DefiningFunction, p: &LiftPoint, zeta: C64) -> Result<RowsGrad> {
    let (n, d) = (def.n(), def.d());
    let size = 2 * n + 2 * d;
    let jet = def.jet2(&p.z, &p.w)?;
    let (lu, gamma) = gamma_system(def, &jet, &p.wt, zeta)?;
    let i1 = C64::new(0.0, 1.0);

    // Columns of the inverse of M_w^T, needed for the w~ derivatives.
    let mut mti = DMatrix::<C64>::identity(d, d);
    mti = lu.solve(&mti).expect("determinant checked above");

    // gamma derivatives with respect to z_m, zbar_m, w_l, wbar_l.
    // d gamma / d q = -Mt^{-1} (d Mt / d q) gamma.
    let dgamma = |dmt: DMatrix<C64>| -> DVector<C64> {
        let rhs = &dmt * &gamma;
        -(lu.solve(&rhs).expect("determinant checked above"))
    };
    let mut dg_z = Vec::with_capacity(n);
    let mut dg_zb = Vec::with_capacity(n);
    for m in 0..n {
        dg_z.push(dgamma(DMatrix::from_fn(d, d, |l, j| jet.hzw[j][(m, l)])));
        dg_zb.push(dgamma(DMatrix::from_fn(d, d, |l, j| jet.hzwb[j][(m, l)].conj())));
    }
    let mut dg_w = Vec::with_capacity(d);
    let mut dg_wb = Vec::with_capacity(d);
    for m in 0..d {
        dg_w.push(dgamma(DMatrix::from_fn(d, d, |l, j| jet.hww[j][(l, m)])));
        dg_wb.push(dgamma(DMatrix::from_fn(d, d, |l, j| jet.hwwb[j][(l, m)])));
    }

    // E_k and its derivatives.
    let mut e_vals = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let mut e = p.zt[k];
        for j in 0..d {
            e -= zeta * gamma[j] * jet.dz[(j, k)];
        }
        e_vals[k] = e;
    }
    let de = |k: usize, dgq: &DVector<C64>, hq: Option<&dyn Fn(usize) -> C64>| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..d {
            s += dgq[j] * jet.dz[(j, k)];
            if let Some(h) = hq {
                s += gamma[j] * h(j);
            }
        }
        -zeta * s
    };

    let col_z = |m: usize| m;
    let col_w = |l: usize| n + l;
    let col_zt = |m: usize| n + d + m;
    let col_wt = |l: usize| 2 * n + d + l;

    let mut rows = DVector::zeros(size);
    let mut grad = DMatrix::<C64>::zeros(size, size);

    for j in 0..d {
        rows[j] = jet.r[j];
        for m in 0..n {
            grad[(j, col_z(m))] = jet.dz[(j, m)].conj();
        }
        for l in 0..d {
            grad[(j, col_w(l))] = jet.dw[(j, l)].conj();
        }
    }

    for k in 0..n {
        rows[d + k] = 2.0 * e_vals[k].re;
        rows[d + n + k] = -2.0 * e_vals[k].im;
        for m in 0..n {
            let de_z = de(k, &dg_z[m], Some(&|j| jet.hzz[j][(k, m)]));
            let de_zb = de(k, &dg_zb[m], Some(&|j| jet.hzzb[j][(k, m)]));
            grad[(d + k, col_z(m))] = de_zb + de_z.conj();
            grad[(d + n + k, col_z(m))] = i1 * (de_zb - de_z.conj());
        }
        for l in 0..d {
            let de_w = de(k, &dg_w[l], Some(&|j| jet.hzw[j][(k, l)]));
            let de_wb = de(k, &dg_wb[l], Some(&|j| jet.hzwb[j][(k, l)]));
            grad[(d + k, col_w(l))] = de_wb + de_w.conj();
            grad[(d + n + k, col_w(l))] = i1 * (de_wb - de_w.conj());
        }
        grad[(d + k, col_zt(k))] = C64::new(1.0, 0.0);
        grad[(d + n + k, col_zt(k))] = -i1;
        for l in 0..d {
            // dE_k / d w~_l = -(K Mt^{-1})_{kl} with K = dz^T.
            let mut s = C64::new(0.0, 0.0);
            for j in 0..d {
                s += jet.dz[(j, k)] * mti[(j, l)];
            }
            let de_wt = -s;
            grad[(d + k, col_wt(l))] = de_wt.conj();
            grad[(d + n + k, col_wt(l))] = -i1 * de_wt.conj();
        }
    }

    for j in 0..d {
        rows[d + 2 * n + j] = -gamma[j].im;
        for m in 0..n {
            grad[(d + 2 * n + j, col_z(m))] = 0.5 * i1 * (dg_zb[m][j] - dg_z[m][j].conj());
        }
        for l in 0..d {
            grad[(d + 2 * n + j, col_w(l))] = 0.5 * i1 * (dg_wb[l][j] - dg_w[l][j].conj());
            grad[(d + 2 * n + j, col_wt(l))] = -0.5 * i1 * zeta * mti[(j, l)].conj();
        }
    }

    Ok(RowsGrad { rows, grad })
}

/// The 2n+2d-row defining system of the conormal set over the boundary.
#[derive(Debug, Clone)]
pub struct ConormalSystem {
    def: DefiningFunction,
}

impl ConormalSystem {
    pub fn new(def: DefiningFunction) -> Self {
        Self { def }
    }

    pub fn defining_function(&self) -> &DefiningFunction {
        &self.def
    }

    pub fn dimension(&self) -> usize {
        2 * self.def.n() + 2 * self.def.d()
    }
}

/// Residual rows of a lifted disc over the grid; (2n+2d) x M.
pub fn eval_conormal(
    system: &ConormalSystem,
    lift: &LiftedDisc,
    grid: &BoundaryGrid,
) -> Result<DMatrix<f64>> {
    let def = &system.def;
    let (n, d) = (def.n(), def.d());
    if lift.n() != n || lift.d() != d {
        return Err(Error::InvalidArgument("lift dimensions do not match the system".into()));
    }
    let cols = par::try_map_indexed(grid.len(), |i| {
        let zeta = grid.point(i);
        let p = LiftPoint::from_stacked(&lift.eval_stacked(zeta), n, d);
        rows_at(def, &p, zeta)
    })?;
    let mut out = DMatrix::zeros(system.dimension(), grid.len());
    for (i, col) in cols.into_iter().enumerate() {
        out.set_column(i, &col);
    }
    Ok(out)
}

/// Residual rows rendered as CSV keyed by (row, theta).
pub fn residual_csv(res: &DMatrix<f64>, grid: &BoundaryGrid) -> String {
    let mut out = String::from("row,theta,value\n");
    for i in 0..grid.len() {
        for r in 0..res.nrows() {
            out.push_str(&format!("{},{:.17e},{:.17e}\n", r, grid.theta(i), res[(r, i)]));
        }
    }
    out
}

fn check_combination_invertible(pencil: &HermitianPencil, c: &[f64]) -> Result<DMatrix<C64>> {
    let a = pencil.combination(c)?;
    let s = linalg::complex_singular_values(&a);
    if s.is_empty() || s[s.len() - 1] <= 1e-12 * s[0].max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(
            "the combination sum_j c_j A_j is singular; pick c by condition (t)".into(),
        ));
    }
    Ok(a)
}

/// The explicit quadric stationary lift
///   h = V + zeta W,
///   g_j = conj(V)^T A_j V + conj(W)^T A_j W + 2 conj(V)^T A_j W zeta + i y_j,
///   h~ = -(conj(W)^T A) - (conj(V)^T A) zeta,
///   g~ = (zeta / 2) c,
/// with A = sum_j c_j A_j.
pub fn build_quadric_lift(
    pencil: &HermitianPencil,
    v: &[C64],
    w: &[C64],
    c: &[f64],
    y: &[f64],
    grid_m: usize,
) -> Result<LiftedDisc> {
    let (n, d) = (pencil.n(), pencil.d());
    if v.len() != n || w.len() != n || c.len() != d || y.len() != d {
        return Err(Error::InvalidArgument("parameter dimensions must be (n, n, d, d)".into()));
    }
    if w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() < 1e-14 {
        return Err(Error::InvalidArgument("W = 0 gives a constant disc".into()));
    }
    let a = check_combination_invertible(pencil, c)?;

    let sesq = |x: &[C64], mat: &DMatrix<C64>, y: &[C64]| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..n {
            for m in 0..n {
                s += x[k].conj() * mat[(k, m)] * y[m];
            }
        }
        s
    };
    let row_times = |x: &[C64], mat: &DMatrix<C64>, k: usize| -> C64 {
        // (conj(x)^T mat)_k
        let mut s = C64::new(0.0, 0.0);
        for m in 0..n {
            s += x[m].conj() * mat[(m, k)];
        }
        s
    };

    let h = AnalyticDisc::new((0..n).map(|k| vec![v[k], w[k]]).collect(), grid_m)?;
    let g = AnalyticDisc::new(
        (0..d)
            .map(|j| {
                let aj = pencil.matrix(j);
                vec![
                    sesq(v, aj, v) + sesq(w, aj, w) + C64::new(0.0, y[j]),
                    2.0 * sesq(v, aj, w),
                ]
            })
            .collect(),
        grid_m,
    )?;
    let ht = AnalyticDisc::new(
        (0..n).map(|k| vec![-row_times(w, &a, k), -row_times(v, &a, k)]).collect(),
        grid_m,
    )?;
    let gt = AnalyticDisc::new(
        (0..d).map(|j| vec![C64::new(0.0, 0.0), C64::new(0.5 * c[j], 0.0)]).collect(),
        grid_m,
    )?;
    LiftedDisc::new(h, g, ht, gt)
}

/// The constrained initial lift
///   ((1-zeta)V, 2(1-zeta) conj(V)^T A_j V, (1-zeta) conj(V)^T A, (zeta/2) c),
/// equal to `build_quadric_lift` with W = -V and y = 0.
pub fn build_initial_lift(
    pencil: &HermitianPencil,
    v: &[C64],
    c: &[f64],
    grid_m: usize,
) -> Result<ConstrainedLift> {
    let (n, d) = (pencil.n(), pencil.d());
    if v.len() != n || c.len() != d {
        return Err(Error::InvalidArgument("parameter dimensions must be (n, d)".into()));
    }
    if v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() < 1e-14 {
        return Err(Error::InvalidArgument("V = 0 gives a constant disc".into()));
    }
    let a = check_combination_invertible(pencil, c)?;

    let h = AnalyticDisc::constant(v, grid_m)?;
    let g = AnalyticDisc::new(
        (0..d)
            .map(|j| {
                let aj = pencil.matrix(j);
                let mut s = C64::new(0.0, 0.0);
                for k in 0..n {
                    for m in 0..n {
                        s += v[k].conj() * aj[(k, m)] * v[m];
                    }
                }
                vec![2.0 * s]
            })
            .collect(),
        grid_m,
    )?;
    let ht = AnalyticDisc::new(
        (0..n)
            .map(|k| {
                let mut s = C64::new(0.0, 0.0);
                for m in 0..n {
                    s += v[m].conj() * a[(m, k)];
                }
                vec![s]
            })
            .collect(),
        grid_m,
    )?;
    let gt = AnalyticDisc::zero(d, grid_m)?;
    ConstrainedLift::new(
        FactoredDisc::new(h),
        FactoredDisc::new(g),
        FactoredDisc::new(ht),
        FactoredDisc::new(gt),
        c.to_vec(),
    )
}

/// Stationarity audit of a lifted disc.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryReport {
    /// sup over the grid of max_j |r_j(f)|.
    pub attachment_sup: f64,
    /// max of the realness, holomorphy, and component-match defects.
    pub lift_defect: f64,
    /// max over the grid of |Im gamma|.
    pub realness_defect: f64,
    /// Negative Fourier mass of zeta sum_j c_j(zeta) dr_j(f(zeta)).
    pub holomorphy_defect: f64,
    /// sup discrepancy between (h~, g~) and the recovered conormal section.
    pub match_defect: f64,
    /// Recovered boundary functions c_j, sampled on the grid (d x M).
    pub c_of_zeta: Vec<Vec<f64>>,
    /// min over the grid of |c(zeta)|_2.
    pub min_c_norm: f64,
    /// Whether min |c| clears the degeneracy threshold.
    pub nonvanishing: bool,
    pub tolerance: f64,
}

impl StationaryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Default threshold excluding lifts with vanishing conormal component.
pub const DEFAULT_NONVANISHING_TOL: f64 = 1e-8;

/// Verifies the stationarity of a lift: attachment, recovery of the real
/// coefficients c(zeta) from the w~ components, their realness, holomorphic
/// extendability of the recovered conormal section, and its agreement with
/// the stored (h~, g~).
pub fn verify_stationary(
    def: &DefiningFunction,
    lift: &LiftedDisc,
    tol: f64,
) -> Result<StationaryReport> {
    let (n, d) = (def.n(), def.d());
    if lift.n() != n || lift.d() != d {
        return Err(Error::InvalidArgument("lift dimensions do not match".into()));
    }
    let grid = BoundaryGrid::new(lift.grid_m())?;
    let m = grid.len();

    struct PointData {
        attach: f64,
        c: Vec<f64>,
        im_defect: f64,
        section: Vec<C64>,
        match_defect: f64,
        c_norm: f64,
    }

    let data = par::try_map_indexed(m, |i| -> Result<PointData> {
        let zeta = grid.point(i);
        let vals = lift.eval_stacked(zeta);
        let p = LiftPoint::from_stacked(&vals, n, d);
        let jet = def.jet2(&p.z, &p.w)?;
        let (_, gamma) = gamma_system(def, &jet, &p.wt, zeta)?;
        let attach = jet.r.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let c: Vec<f64> = gamma.iter().map(|g| g.re).collect();
        let im_defect = gamma.iter().fold(0.0_f64, |acc, g| acc.max(g.im.abs()));
        // zeta sum_j c_j dr_j(f) in C^{n+d}.
        let mut section = vec![C64::new(0.0, 0.0); n + d];
        for j in 0..d {
            for k in 0..n {
                section[k] += zeta * c[j] * jet.dz[(j, k)];
            }
            for l in 0..d {
                section[n + l] += zeta * c[j] * jet.dw[(j, l)];
            }
        }
        let mut match_defect = 0.0_f64;
        for k in 0..n {
            match_defect = match_defect.max((p.zt[k] - section[k]).norm());
        }
        for l in 0..d {
            match_defect = match_defect.max((p.wt[l] - section[n + l]).norm());
        }
        let c_norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(PointData { attach, c, im_defect, section, match_defect, c_norm })
    })?;

    let attachment_sup = data.iter().fold(0.0_f64, |a, p| a.max(p.attach));
    let realness_defect = data.iter().fold(0.0_f64, |a, p| a.max(p.im_defect));
    let match_defect = data.iter().fold(0.0_f64, |a, p| a.max(p.match_defect));
    let min_c_norm = data.iter().fold(f64::INFINITY, |a, p| a.min(p.c_norm));
    let section_samples: Vec<Vec<C64>> =
        (0..n + d).map(|comp| data.iter().map(|p| p.section[comp]).collect()).collect();
    let holomorphy_defect = crate::discs::negative_mode_defect(&section_samples);
    let c_of_zeta: Vec<Vec<f64>> = (0..d).map(|j| data.iter().map(|p| p.c[j]).collect()).collect();

    let lift_defect = realness_defect.max(holomorphy_defect).max(match_defect);
    Ok(StationaryReport {
        attachment_sup,
        lift_defect,
        realness_defect,
        holomorphy_defect,
        match_defect,
        c_of_zeta,
        min_c_norm,
        nonvanishing: min_c_norm > tol,
        tolerance: tol,
    })
}

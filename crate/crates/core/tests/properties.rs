//! Property tests for the disc algebra and the geometric predicates.

use disclab::conormal::{build_quadric_lift, verify_stationary};
use disclab::discs::{holder_norm, jet1_at_one, AnalyticDisc, FactoredDisc, LiftedDisc};
use disclab::geometry::{
    check_totally_real_conormal, DefiningFunction, HermitianPencil,
};
use disclab::grid::{coefficients_from_samples, BoundaryGrid};
use disclab::linalg::complex_singular_values;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn complex_strategy() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn coeffs_strategy(len: usize) -> impl Strategy<Value = Vec<C64>> {
    proptest::collection::vec(complex_strategy(), 1..=len)
}

fn hermitian_strategy(n: usize) -> impl Strategy<Value = DMatrix<C64>> {
    proptest::collection::vec(complex_strategy(), n * n).prop_map(move |v| {
        let b = DMatrix::from_fn(n, n, |i, j| v[i * n + j]);
        (&b + b.adjoint()) * C64::new(0.5, 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficients_roundtrip_through_boundary(coeffs in coeffs_strategy(12)) {
        let disc = AnalyticDisc::new(vec![coeffs.clone()], 64).unwrap();
        let samples = disc.boundary_samples().unwrap();
        let rec = coefficients_from_samples(&samples[0], coeffs.len() - 1);
        for (a, b) in coeffs.iter().zip(&rec) {
            prop_assert!((a - b).norm() < 1e-12);
        }
        prop_assert!(disc.holomorphy_defect().unwrap() < 1e-12);
    }

    #[test]
    fn holder_norm_is_subadditive_and_homogeneous(
        a in coeffs_strategy(6),
        b in coeffs_strategy(6),
        scale in -3.0..3.0f64,
        k in 0usize..2,
    ) {
        let len = a.len().max(b.len());
        let pad = |v: &[C64]| {
            let mut out = v.to_vec();
            out.resize(len, C64::new(0.0, 0.0));
            out
        };
        let fa = AnalyticDisc::new(vec![pad(&a)], 64).unwrap();
        let fb = AnalyticDisc::new(vec![pad(&b)], 64).unwrap();
        let sum = fa.linear_combination(1.0, &fb, 1.0).unwrap();
        let na = holder_norm(&fa, k, 0.5).unwrap();
        let nb = holder_norm(&fb, k, 0.5).unwrap();
        let ns = holder_norm(&sum, k, 0.5).unwrap();
        prop_assert!(ns <= na + nb + 1e-10, "subadditivity: {ns} > {na} + {nb}");
        let scaled = fa.linear_combination(scale, &fb, 0.0).unwrap();
        let nscaled = holder_norm(&scaled, k, 0.5).unwrap();
        prop_assert!((nscaled - scale.abs() * na).abs() < 1e-9 * (1.0 + na));
    }

    #[test]
    fn jet_at_one_is_linear(
        a in coeffs_strategy(5),
        b in coeffs_strategy(5),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
    ) {
        let len = a.len().max(b.len());
        let pad = |v: &[C64]| {
            let mut out = v.to_vec();
            out.resize(len, C64::new(0.0, 0.0));
            out
        };
        let mk = |v: &[C64]| {
            let d = AnalyticDisc::new(vec![pad(v)], 64).unwrap();
            LiftedDisc::new(d.clone(), d.clone(), d.clone(), d).unwrap()
        };
        let fa = mk(&a);
        let fb = mk(&b);
        let combo = fa.linear_combination(alpha, &fb, beta).unwrap();
        let ja = jet1_at_one(&fa);
        let jb = jet1_at_one(&fb);
        let jc = jet1_at_one(&combo);
        for i in 0..jc.len() {
            let expected = ja[i] * alpha + jb[i] * beta;
            prop_assert!((jc[i] - expected).norm() < 1e-11);
        }
    }

    #[test]
    fn factored_discs_vanish_at_one(coeffs in coeffs_strategy(10)) {
        let fd = FactoredDisc::new(AnalyticDisc::new(vec![coeffs], 64).unwrap());
        let at_one = fd.realize().eval(C64::new(1.0, 0.0)).unwrap();
        prop_assert!(at_one[0].norm() < 1e-12);
    }

    #[test]
    fn totally_real_conormal_equivalent_to_invertible_combination(
        mats in proptest::collection::vec(hermitian_strategy(2), 1..=3),
        raw_c in proptest::collection::vec(-1.0..1.0f64, 3),
    ) {
        let d = mats.len();
        let pencil = HermitianPencil::new(mats).unwrap();
        let c: Vec<f64> = raw_c[..d].to_vec();
        let combo = pencil.combination(&c).unwrap();
        let s = complex_singular_values(&combo);
        let (smax, smin) = (s[0], s[s.len() - 1]);
        // Skip draws in the ambiguous band around singularity.
        prop_assume!(smin > 1e-6 * smax.max(1e-12) || smin <= 1e-10 * smax);
        let invertible = smin > 1e-6 * smax.max(1e-12);
        let verdict = check_totally_real_conormal(&pencil, &c).unwrap();
        prop_assert_eq!(verdict, invertible);
    }

    #[test]
    fn quadric_lifts_satisfy_attachment_identity(
        mats in proptest::collection::vec(hermitian_strategy(2), 2),
        v in proptest::collection::vec(complex_strategy(), 2),
        w in proptest::collection::vec(complex_strategy(), 2),
        y in proptest::collection::vec(-1.0..1.0f64, 2),
        c in proptest::collection::vec(-1.0..1.0f64, 2),
    ) {
        let pencil = HermitianPencil::new(mats).unwrap();
        let combo = pencil.combination(&c).unwrap();
        let s = complex_singular_values(&combo);
        prop_assume!(s[s.len() - 1] > 1e-4 * s[0].max(1e-12));
        prop_assume!(w.iter().map(|x| x.norm_sqr()).sum::<f64>() > 1e-4);
        let lift = build_quadric_lift(&pencil, &v, &w, &c, &y, 64).unwrap();
        let grid = BoundaryGrid::new(64).unwrap();
        // Re g_j = conj(h)^T A_j h on the boundary.
        for &zeta in grid.points().iter().step_by(7) {
            let vals = lift.eval_stacked(zeta);
            for j in 0..2 {
                let mut quad = C64::new(0.0, 0.0);
                for k in 0..2 {
                    for m in 0..2 {
                        quad += vals[k].conj() * pencil.matrix(j)[(k, m)] * vals[m];
                    }
                }
                prop_assert!((vals[2 + j].re - quad.re).abs() < 1e-11);
            }
        }
        // h~ reproduces -zeta conj(h)^T A on the grid.
        for &zeta in grid.points().iter().step_by(11) {
            let vals = lift.eval_stacked(zeta);
            for k in 0..2 {
                let mut s = C64::new(0.0, 0.0);
                for m in 0..2 {
                    s += vals[m].conj() * combo[(m, k)];
                }
                let expected = -zeta * s;
                prop_assert!((vals[4 + k] - expected).norm() < 1e-11);
            }
        }
        let def = DefiningFunction::quadric(pencil);
        let report = verify_stationary(&def, &lift, 1e-8).unwrap();
        prop_assert!(report.attachment_sup < 1e-11);
        prop_assert!(report.lift_defect < 1e-11);
    }
}

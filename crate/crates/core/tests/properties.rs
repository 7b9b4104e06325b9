//! Property-based invariants across the public API.

mod common;

use common::*;
use hessform::cones::{cone_membership, ConeRep, Membership};
use hessform::constructions::{
    metzler_hess_3, metzler_hess_4, nonneg_hess_3, verify_certificate, Mode, Outcome,
    SimilarityCertificate,
};
use hessform::heuristics::{random_experiment, Generator};
use hessform::possys::{dt_hess_feasibility_3, dt_iterates};
use hessform::simplex::{simplex_project, triangle_cover_decision, verify_cover, SimplexPoint, Verdict};
use hessform::{Matrix, Vector};
use proptest::prelude::*;
use rand::Rng;

fn matrix_strategy(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |d| Matrix::from_row_slice(n, n, &d))
}

fn metzler_strategy(n: usize) -> impl Strategy<Value = Matrix> {
    matrix_strategy(n, -5.0, 5.0).prop_map(|mut a| {
        let n = a.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a[(i, j)] = a[(i, j)].max(0.0);
                }
            }
        }
        a
    })
}

fn nonneg_vector_strategy(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(0.0..1.0f64, n)
        .prop_map(Vector::from_vec)
        .prop_filter("nonzero", |b| b.sum() > 1e-3)
}

fn assert_sound(a: &Matrix, cert: &SimilarityCertificate) {
    assert!(cert.passes(1e-8), "certificate fails its own checks: {cert:?}");
    assert!(verify_certificate(a, cert, 1e-8).unwrap());
    let gap = spectrum_gap(&oracle_eigenvalues(a), &oracle_eigenvalues(&cert.h));
    assert!(gap <= 1e-6, "spectrum moved by {gap:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metzler_3_certificates_are_sound(a in metzler_strategy(3)) {
        assert_sound(&a, &metzler_hess_3(&a).unwrap());
    }

    #[test]
    fn metzler_4_certificates_are_sound(a in metzler_strategy(4)) {
        assert_sound(&a, &metzler_hess_4(&a).unwrap());
    }

    #[test]
    fn nonneg_3_outcomes_recheck(a in matrix_strategy(3, 0.0, 1.0)) {
        match nonneg_hess_3(&a).unwrap() {
            Outcome::Certificate(c) => assert_sound(&a, &c),
            Outcome::Obstruction(o) => prop_assert!(o.recheck(&a, None)),
        }
    }

    #[test]
    fn tampered_certificates_are_rejected(a in metzler_strategy(3), i in 0..3usize, j in 0..3usize) {
        let mut cert = metzler_hess_3(&a).unwrap();
        cert.h[(i, j)] += 1.0 + a.amax();
        prop_assert!(!verify_certificate(&a, &cert, 1e-8).unwrap());
    }

    #[test]
    fn certificate_json_round_trip(a in metzler_strategy(4)) {
        let cert = metzler_hess_4(&a).unwrap();
        let text = serde_json::to_string(&Outcome::from(cert.clone())).unwrap();
        let back: Outcome = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.certificate(), Some(&cert));
    }

    #[test]
    fn iterates_are_scale_invariant(
        a in matrix_strategy(3, 0.05, 1.0),
        b in nonneg_vector_strategy(3),
        ca in 0.01..100.0f64,
        cb in 0.01..100.0f64,
    ) {
        let x = dt_iterates(&a, &b, 12).unwrap();
        let y = dt_iterates(&(&a * ca), &(&b * cb), 12).unwrap();
        for (p, q) in x.points.iter().zip(&y.points) {
            prop_assert!((p.x - q.x).abs() <= 1e-10 && (p.y - q.y).abs() <= 1e-10);
        }
        prop_assert!((x.limit_point.x - y.limit_point.x).abs() <= 1e-8);
        prop_assert!((x.limit_point.y - y.limit_point.y).abs() <= 1e-8);
    }

    #[test]
    fn projections_stay_in_the_simplex(x in nonneg_vector_strategy(3)) {
        let p = simplex_project(&x).unwrap();
        prop_assert!(p.outside_distance() <= 1e-15);
        let lifted = p.lift();
        prop_assert!((lifted.clone() - &x / x.sum()).amax() <= 1e-15);
        prop_assert!((lifted.sum() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn feasible_covers_verify(
        v0 in (0.0..1.0f64, 0.0..1.0f64),
        pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..8),
    ) {
        let fold = |(x, y): (f64, f64)| if x + y > 1.0 { SimplexPoint::new(1.0 - y, 1.0 - x) } else { SimplexPoint::new(x, y) };
        let v0 = fold(v0);
        let s: Vec<SimplexPoint> = pts.into_iter().map(fold).collect();
        let d = triangle_cover_decision(v0, &s, 1e-9).unwrap();
        if d.verdict != Verdict::Unknown {
            prop_assert!(verify_cover(v0, &s, &d, 1e-9));
        }
    }

    #[test]
    fn positive_combinations_are_in_the_cone(g in matrix_strategy(3, 0.0, 1.0), x in prop::collection::vec(0.1..1.0f64, 3)) {
        prop_assume!(g.column_iter().all(|c| c.norm() > 1e-3));
        let cone = ConeRep::new(g.clone()).unwrap();
        let b = &g * Vector::from_vec(x);
        prop_assert_ne!(cone_membership(&cone, &b, 1e-9).unwrap(), Membership::Outside);
    }

    #[test]
    fn negated_positive_vectors_are_outside(g in matrix_strategy(3, 0.0, 1.0), x in nonneg_vector_strategy(3)) {
        prop_assume!(g.column_iter().all(|c| c.norm() > 1e-3));
        let cone = ConeRep::new(g).unwrap();
        prop_assert_eq!(cone_membership(&cone, &-x, 1e-9).unwrap(), Membership::Outside);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// An infeasible verdict survives 200 random nonnegative completions
    /// `T = (b | p | q)`, none of which may give `T⁻¹AT ≥ 0`.
    #[test]
    fn infeasible_verdicts_are_not_falsified(a in matrix_strategy(3, 0.0, 1.0), b in nonneg_vector_strategy(3), seed in any::<u64>()) {
        let f = dt_hess_feasibility_3(&a, &b, 50).unwrap();
        if f.decision.verdict == Verdict::Infeasible {
            let mut r = rng(seed);
            let tol = 1e-9 * a.amax().max(1.0);
            for _ in 0..200 {
                let p = nonneg_vector(&mut r, 3);
                let q = nonneg_vector(&mut r, 3);
                let t = Matrix::from_columns(&[b.clone(), p, q]);
                if let Some(ti) = t.clone().lu().try_inverse() {
                    let h = ti * &a * t;
                    prop_assert!(h.min() < -tol, "random completion is feasible: {h}");
                }
            }
        }
    }

    #[test]
    fn counterexample_family_stays_infeasible(s in 0.5..2.0f64, seed in any::<u64>()) {
        let a = counterexample() * s;
        let f = dt_hess_feasibility_3(&a, &counterexample_input(), 50).unwrap();
        prop_assert_eq!(f.decision.verdict, Verdict::Infeasible);
        let mut r = rng(seed);
        for _ in 0..200 {
            let t = Matrix::from_columns(&[counterexample_input(), v(&[r.random(), r.random(), r.random()]), v(&[r.random(), r.random(), r.random()])]);
            if let Some(ti) = t.clone().lu().try_inverse() {
                prop_assert!((ti * &a * t).min() < 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn search_reports_are_deterministic(seed in any::<u64>(), n in 3..6usize) {
        let x = random_experiment(n, 2, seed, Mode::Metzler, Generator::DenseUniform).unwrap();
        let y = random_experiment(n, 2, seed, Mode::Metzler, Generator::DenseUniform).unwrap();
        prop_assert_eq!(&x, &y);
        if let Some(c) = &x.best_certificate {
            prop_assert!(c.passes(1e-8));
        }
    }
}

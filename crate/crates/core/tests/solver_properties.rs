use nalgebra::DMatrix;
use proptest::prelude::*;

use selfdual::convex::{ConvexFunction, NormKind};
use selfdual::lagrangian::GapTol;
use selfdual::{minimize_gap, resolvent, Axis, Lagrangian, SolveOptions};

fn psd() -> impl Strategy<Value = DMatrix<f64>> {
    (prop::collection::vec(-1.0..1.0f64, 4), 0.1..1.0f64).prop_map(|(m, e)| {
        let m = DMatrix::from_row_slice(2, 2, &m);
        &m * m.transpose() + DMatrix::identity(2, 2) * e
    })
}

fn skew() -> impl Strategy<Value = DMatrix<f64>> {
    (-2.0..2.0f64).prop_map(|c| DMatrix::from_row_slice(2, 2, &[0.0, c, -c, 0.0]))
}

fn lagrangian() -> impl Strategy<Value = Lagrangian> {
    prop_oneof![
        psd().prop_map(|a| Lagrangian::make_basic(ConvexFunction::quadratic(a, vec![0.0; 2], 0.0).unwrap()).unwrap()),
        (0.2..2.0f64, skew())
            .prop_map(|(a, g)| Lagrangian::make_skew(ConvexFunction::scaled_square(2, a).unwrap(), g).unwrap()),
        (psd(), skew()).prop_map(|(s, k)| Lagrangian::make_nonneg(ConvexFunction::zero(2), s + k).unwrap()),
        (0.2..2.0f64).prop_map(|w| Lagrangian::make_basic(ConvexFunction::huber(2, w).unwrap()).unwrap()),
        (0.5..2.0f64, skew()).prop_map(|(w, g)| {
            Lagrangian::make_skew(ConvexFunction::norm(2, w, NormKind::L1).unwrap(), g).unwrap()
        }),
    ]
}

/// Costates on the nodes of `[-2,2]^2` with step 0.25.
fn costate_node() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0usize..17).prop_map(|i| -2.0 + 0.25 * i as f64), 2)
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certificates_bound_the_gap(l in lagrangian(), p in costate_node()) {
        let r = minimize_gap(&l, &p, &[0.0, 0.0], &opts()).unwrap();
        if r.certified() {
            prop_assert!(r.gap.abs() <= r.tol);
        }
    }

    #[test]
    fn smooth_families_always_certify(a in psd(), g in skew(), p in costate_node()) {
        let l = Lagrangian::make_nonneg(ConvexFunction::zero(2), a + g).unwrap();
        let r = minimize_gap(&l, &p, &[1.0, -1.0], &opts()).unwrap();
        prop_assert!(r.certified(), "{:?}", r);
    }

    #[test]
    fn certified_costate_is_in_the_field(l in lagrangian(), p in costate_node()) {
        let r = minimize_gap(&l, &p, &[0.0, 0.0], &opts()).unwrap();
        if r.certified() {
            let costate = [Axis::new(-2.0, 2.0, 17).unwrap(); 2];
            let d = l.dbar(&r.x_star, &costate, GapTol::Abs(r.tol)).unwrap();
            prop_assert!(d.candidates.iter().any(|c| (0..2).all(|k| (c.p[k] - p[k]).abs() < 1e-12)));
        }
    }

    #[test]
    fn certified_solutions_are_monotone(l in lagrangian(), p in costate_node(), q in costate_node()) {
        let a = minimize_gap(&l, &p, &[0.0, 0.0], &opts()).unwrap();
        let b = minimize_gap(&l, &q, &[0.0, 0.0], &opts()).unwrap();
        if a.certified() && b.certified() {
            let v: f64 = (0..2).map(|k| (a.x_star[k] - b.x_star[k]) * (p[k] - q[k])).sum();
            prop_assert!(v >= -1e-8, "{v}");
        }
    }
}

#[test]
fn quadratic_resolvent_is_nonexpansive() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let a = &m * m.transpose();
        let l = Lagrangian::make_basic(ConvexFunction::quadratic(a, vec![0.0; 2], 0.0).unwrap()).unwrap();
        let p1: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p2: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x1 = resolvent(&l, &p1, &opts()).unwrap().x_star;
        let x2 = resolvent(&l, &p2, &opts()).unwrap().x_star;
        let dx = ((x1[0] - x2[0]).powi(2) + (x1[1] - x2[1]).powi(2)).sqrt();
        let dp = ((p1[0] - p2[0]).powi(2) + (p1[1] - p2[1]).powi(2)).sqrt();
        assert!(dx <= dp + 1e-8, "{dx} > {dp}");
    }
}

use nalgebra::DMatrix;
use proptest::prelude::*;

use selfdual::convex::{ConvexFunction, Interval, NormKind};
use selfdual::lagrangian::GapTol;
use selfdual::{Axis, Lagrangian, PhaseBox};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn phi() -> impl Strategy<Value = ConvexFunction> {
    prop_oneof![
        (0.2..3.0f64).prop_map(|a| ConvexFunction::scaled_square(2, a).unwrap()),
        (prop::collection::vec(-1.0..1.0f64, 4), 0.1..1.0f64).prop_map(|(m, e)| {
            let m = DMatrix::from_row_slice(2, 2, &m);
            ConvexFunction::quadratic(&m * m.transpose() + DMatrix::identity(2, 2) * e, vec![0.3, -0.2], 0.5).unwrap()
        }),
        (0.2..2.0f64).prop_map(|w| ConvexFunction::norm(2, w, NormKind::L1).unwrap()),
        (0.2..2.0f64).prop_map(|d| ConvexFunction::huber(2, d).unwrap()),
        Just(
            ConvexFunction::sum(vec![
                ConvexFunction::half_square(2),
                ConvexFunction::indicator(vec![Interval::new(-1.0, 1.0).unwrap(); 2]).unwrap(),
            ])
            .unwrap()
        ),
    ]
}

fn quadratic_phi() -> impl Strategy<Value = ConvexFunction> {
    prop_oneof![
        Just(ConvexFunction::zero(2)),
        (0.2..3.0f64).prop_map(|a| ConvexFunction::scaled_square(2, a).unwrap()),
    ]
}

fn skew() -> impl Strategy<Value = DMatrix<f64>> {
    (-2.0..2.0f64).prop_map(|c| DMatrix::from_row_slice(2, 2, &[0.0, c, -c, 0.0]))
}

fn nonneg_gamma() -> impl Strategy<Value = DMatrix<f64>> {
    (prop::collection::vec(-1.0..1.0f64, 4), -2.0..2.0f64).prop_map(|(m, c)| {
        let m = DMatrix::from_row_slice(2, 2, &m);
        &m * m.transpose() + DMatrix::from_row_slice(2, 2, &[0.0, c, -c, 0.0])
    })
}

/// Selfdual Lagrangians on R^2 from every closed-form family.
fn selfdual_lagrangian() -> impl Strategy<Value = Lagrangian> {
    prop_oneof![
        phi().prop_map(|f| Lagrangian::make_basic(f).unwrap()),
        (phi(), skew()).prop_map(|(f, g)| Lagrangian::make_skew(f, g).unwrap()),
        // Closed conjugates of ψ = ½⟨Γx,x⟩ + φ exist when φ is quadratic or
        // the symmetric part of Γ is a multiple of the identity.
        (quadratic_phi(), nonneg_gamma()).prop_map(|(f, g)| Lagrangian::make_nonneg(f, g).unwrap()),
        (phi(), 0.0..2.0f64, skew()).prop_map(|(f, s, k)| {
            Lagrangian::make_nonneg(f, DMatrix::identity(2, 2) * s + k).unwrap()
        }),
        (phi(), prop::collection::vec(-1.0..1.0f64, 2))
            .prop_map(|(f, p0)| Lagrangian::make_basic(f).unwrap().translate(p0).unwrap()),
        (phi(), skew(), 0.2..2.0f64).prop_map(|(f, g, a)| {
            Lagrangian::make_skew(f, g)
                .unwrap()
                .inf_conv_lagrangian(ConvexFunction::scaled_square(2, a).unwrap())
                .unwrap()
        }),
    ]
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gap_is_nonnegative(l in selfdual_lagrangian(), x in point(), p in point()) {
        let g = l.gap(&x, &p).unwrap().value();
        prop_assert!(g >= -1e-9, "{g}");
    }

    #[test]
    fn dbar_membership_matches_fenchel_equality(l in selfdual_lagrangian(), x in point(), p in point()) {
        let tol = 1e-9;
        let mut probes = vec![p];
        if let Some(r) = l.field_representative(&x) {
            probes.push(r.to_vec());
        }
        for q in probes {
            let in_dbar = l.gap(&x, &q).unwrap().value() <= tol;
            prop_assert_eq!(in_dbar, l.delta(&x, &q, 2.0 * tol).unwrap());
        }
    }

    #[test]
    fn field_is_monotone(l in selfdual_lagrangian(), x in point(), y in point()) {
        if let (Some(p), Some(q)) = (l.field_representative(&x), l.field_representative(&y)) {
            prop_assert!(l.gap(&x, &p).unwrap().value() <= 1e-9);
            prop_assert!(l.gap(&y, &q).unwrap().value() <= 1e-9);
            let v: f64 = (0..2).map(|k| (x[k] - y[k]) * (p[k] - q[k])).sum();
            prop_assert!(v >= -1e-9, "{v}");
        }
    }

    #[test]
    fn dbar_candidates_are_monotone(l in selfdual_lagrangian(), x in point(), y in point()) {
        let costate = [Axis::symmetric(3.0, 25).unwrap(); 2];
        let a = l.dbar(&x, &costate, GapTol::Default).unwrap();
        let b = l.dbar(&y, &costate, GapTol::Default).unwrap();
        for c in &a.candidates {
            for d in &b.candidates {
                let v: f64 = (0..2).map(|k| (x[k] - y[k]) * (c.p[k] - d.p[k])).sum();
                prop_assert!(v >= -1e-9, "{v}");
            }
        }
    }

    #[test]
    fn translation_and_inf_convolution_stay_selfdual(
        l in selfdual_lagrangian(),
        p0 in prop::collection::vec(-1.0..1.0f64, 2),
        a in 0.2..2.0f64,
    ) {
        let bx = PhaseBox::cube(2, -2.0, 2.0, 5).unwrap();
        let t = l.clone().translate(p0).unwrap();
        prop_assert!(t.selfduality_residual(&bx).unwrap().max_abs < 1e-6);
        let c = l.inf_conv_lagrangian(ConvexFunction::scaled_square(2, a).unwrap()).unwrap();
        prop_assert!(c.selfduality_residual(&bx).unwrap().max_abs < 1e-6);
    }

    #[test]
    fn strictly_convex_basic_field_is_single_valued(
        m in prop::collection::vec(-1.0..1.0f64, 4),
        e in 0.1..1.0f64,
        x in prop::collection::vec(-0.5..0.5f64, 2),
    ) {
        let m = DMatrix::from_row_slice(2, 2, &m);
        let a = &m * m.transpose() + DMatrix::identity(2, 2) * e;
        let l = Lagrangian::make_basic(ConvexFunction::quadratic(a, vec![0.0; 2], 0.0).unwrap()).unwrap();
        let costate = [Axis::symmetric(3.0, 31).unwrap(); 2];
        let d = l.dbar(&x, &costate, GapTol::Abs(1e-9)).unwrap();
        let first = &d.candidates[0].p;
        prop_assert!(d.candidates.iter().all(|c| (0..2).all(|k| (c.p[k] - first[k]).abs() < 1e-12)));
    }

    #[test]
    fn scaled_square_field_is_a_times_identity(a in 0.1..5.0f64, x in point(), y in point()) {
        prop_assume!(dot(&x, &x) + dot(&y, &y) > 0.0 && x != y);
        let l = Lagrangian::make_basic(ConvexFunction::scaled_square(2, a).unwrap()).unwrap();
        let p = l.field_representative(&x).unwrap();
        let q = l.field_representative(&y).unwrap();
        let dp = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let dx = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        prop_assume!(dx > 1e-6);
        prop_assert!((dp / dx - a).abs() < 1e-6);
    }
}

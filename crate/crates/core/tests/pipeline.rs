use smallvec::smallvec;

use selfdual::fitzpatrick::{above_pairing_check, subselfdual_check};
use selfdual::{
    solve_inclusion, Axis, ConvexFunction, GridFunction, GridLagrangian, Lagrangian, MonotoneGraph, PhaseBox,
    SolveOptions, Stage,
};

fn abs_graph(a: Axis) -> MonotoneGraph {
    let mut pts = Vec::new();
    for x in a.nodes() {
        if x == 0.0 {
            for p in a.nodes().into_iter().filter(|p| p.abs() <= 1.0) {
                pts.push((smallvec![0.0], smallvec![p]));
            }
        } else {
            pts.push((smallvec![x], smallvec![x.signum()]));
        }
    }
    MonotoneGraph::new(pts, "abs").unwrap()
}

#[test]
fn identity_graph_inclusion() {
    let a = Axis::symmetric(2.0, 65).unwrap();
    let g = MonotoneGraph::sample(&MonotoneGraph::lattice(&[a]), |x| x.into(), "identity").unwrap();
    let r = solve_inclusion(&g, &[0.5], &[a, a], &SolveOptions::default()).unwrap();
    assert!(r.certified());
    assert!((r.x_star[0] - 0.5).abs() <= 2.0 * a.step());
}

#[test]
fn abs_graph_inclusion_lands_on_the_nonnegative_side() {
    let a = Axis::symmetric(2.0, 33).unwrap();
    let r = solve_inclusion(&abs_graph(a), &[1.0], &[a, a], &SolveOptions::default()).unwrap();
    assert!(r.certified());
    assert!(r.gap <= r.tol);
    assert!(r.x_star[0] >= -2.0 * a.step(), "{:?}", r.x_star);
}

#[test]
fn non_monotone_graph_fails_at_the_first_stage() {
    let g = MonotoneGraph::new(
        vec![(smallvec![-1.0], smallvec![1.0]), (smallvec![1.0], smallvec![-1.0])],
        "negation",
    )
    .unwrap();
    let a = Axis::symmetric(1.0, 9).unwrap();
    let e = solve_inclusion(&g, &[0.0], &[a, a], &SolveOptions::default()).unwrap_err();
    assert_eq!(e.stage(), Some(Stage::Fitzpatrick));
}

#[test]
fn truncated_graph_fails_at_the_symmetrization_stage() {
    let half = Axis::new(0.0, 1.0, 9).unwrap();
    let g = MonotoneGraph::sample(&MonotoneGraph::lattice(&[half]), |x| x.into(), "half").unwrap();
    let a = Axis::symmetric(2.0, 33).unwrap();
    let e = solve_inclusion(&g, &[0.0], &[a, a], &SolveOptions::default()).unwrap_err();
    assert_eq!(e.stage(), Some(Stage::Selfdualize));
}

#[test]
fn corrupted_grid_breaks_sub_selfduality() {
    let a = Axis::symmetric(2.0, 33).unwrap();
    let g = MonotoneGraph::sample(&MonotoneGraph::lattice(&[a]), |x| x.into(), "identity").unwrap();
    let l = g.fitzpatrick_lagrangian(&[a, a]).unwrap();
    let bx = PhaseBox::cube(1, -1.0, 1.0, 33).unwrap();
    assert!(subselfdual_check(&l, &bx, 1e-9).unwrap().ok);
    let grid = l.as_grid().unwrap();
    let mut values = grid.grid().values().to_vec();
    // Lowering a node only raises the conjugate, so raise one on x = p instead.
    let mid = values.len() / 2;
    assert_eq!(grid.node(mid), (smallvec![0.0], smallvec![0.0]));
    values[mid] += 1.0;
    let bad = GridLagrangian::new(1, GridFunction::new(grid.grid().axes().to_vec(), values).unwrap()).unwrap();
    let r = subselfdual_check(&Lagrangian::from_grid(bad), &bx, 1e-9).unwrap();
    assert!(!r.ok);
}

#[test]
fn half_square_margins() {
    let l = Lagrangian::make_basic(ConvexFunction::half_square(1)).unwrap();
    let bx = PhaseBox::cube(1, -2.0, 2.0, 21).unwrap();
    let sub = subselfdual_check(&l, &bx, 1e-9).unwrap();
    assert!(sub.ok && sub.min_margin.abs() < 1e-12);
    let above = above_pairing_check(&l, &bx, 1e-9).unwrap();
    assert!(above.ok);
    let (x, p) = above.worst.unwrap();
    assert!((above.min_margin - 0.5 * (x[0] - p[0]).powi(2)).abs() < 1e-12);
}

#[test]
fn artifacts_round_trip_through_json() {
    let a = Axis::symmetric(1.0, 5).unwrap();
    let g = MonotoneGraph::sample(&MonotoneGraph::lattice(&[a]), |x| x.into(), "identity").unwrap();
    let s = serde_json::to_string(&g).unwrap();
    assert_eq!(serde_json::from_str::<MonotoneGraph>(&s).unwrap(), g);
    let l = g.fitzpatrick_lagrangian(&[a, a]).unwrap();
    let s = serde_json::to_string(&l).unwrap();
    let back: Lagrangian = serde_json::from_str(&s).unwrap();
    assert_eq!(back, l);
    assert_eq!(back.as_grid().unwrap().label(), Some("identity"));
}

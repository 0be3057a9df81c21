use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selfdual::{Axis, ConvexFunction, GridFunction, Lagrangian, MonotoneGraph};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selfdual"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn selfdual")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn write_json<T: serde::Serialize>(dir: &TempDir, name: &str, v: &T) -> PathBuf {
    write(dir, name, &serde_json::to_string(v).unwrap())
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn identity_graph(dir: &TempDir) -> PathBuf {
    let xs = MonotoneGraph::lattice(&[Axis::new(-2.0, 2.0, 65).unwrap()]);
    let g = MonotoneGraph::sample(&xs, |x| x.into(), "identity").unwrap();
    write_json(dir, "identity.json", &g)
}

fn x_star(p: &Path) -> Vec<f64> {
    read_json(p)["x_star"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect()
}

#[test]
fn grid_conjugate_of_half_square() {
    let dir = TempDir::new().unwrap();
    let f = GridFunction::from_fn(vec![Axis::new(-2.0, 2.0, 41).unwrap()], |x| 0.5 * x[0] * x[0]).unwrap();
    let input = write_json(&dir, "half_square.json", &f);
    let out = dir.path().join("conj.json");
    let o = run(&["conjugate", s(&input), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("max |f** - f|"));
    let g: GridFunction = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for flat in 0..g.len() {
        let p = g.node(flat)[0];
        if p.abs() <= 2.0 {
            let want = 0.5 * p * p;
            assert!((g.values()[flat] - want).abs() <= 0.01, "p = {p}: {} vs {want}", g.values()[flat]);
        }
    }
}

#[test]
fn closed_conjugate_of_interval_indicator_is_support() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "ind.json", r#"{"kind":"indicator","dim":1,"box":[[-1,1]]}"#);
    let o = run(&["conjugate", s(&input)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let f: ConvexFunction = serde_json::from_slice(&o.stdout).unwrap();
    for p in [-3.0, -0.5, 0.0, 2.0] {
        assert_eq!(f.evaluate(&[p]).unwrap().value(), f64::abs(p));
    }
}

#[test]
fn singular_quadratic_needs_a_box() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "singular.json",
        r#"{"kind":"quadratic","dim":2,"a":[[1,0],[0,0]],"b":[0,0],"c":0}"#,
    );
    let o = run(&["conjugate", s(&input)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = run(&["conjugate", s(&input), "--box", "-1,1,9;-1,1,9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("grid fallback"));
}

#[test]
fn malformed_json_reports_position() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "broken.json", "{\"kind\": \"quadratic\",\n  \"dim\": }");
    let o = run(&["conjugate", s(&input)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unknown_schema_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "odd.json", r#"{"hello": 1}"#);
    assert_eq!(code(&run(&["check", s(&input)])), 2);
    let input = write(&dir, "bad_kind.json", r#"{"kind":"cubic","dim":1}"#);
    assert_eq!(code(&run(&["conjugate", s(&input)])), 2);
}

#[test]
fn invalid_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let l = Lagrangian::make_basic(ConvexFunction::half_square(1)).unwrap();
    let input = write_json(&dir, "basic.json", &l);
    assert_eq!(code(&run(&["solve", s(&input), "--p", "1", "--tol", "-1"])), 2);
    assert_eq!(code(&run(&["solve", s(&input), "--p", "1", "--tol", "0"])), 2);
    assert_eq!(code(&run(&["solve", s(&input), "--p", "1", "--max-iter", "0"])), 2);
    assert_eq!(code(&run(&["solve", s(&input), "--p", "1,x"])), 2);
    assert_eq!(code(&run(&["solve", s(&input), "--p", "1", "--box", "0,1"])), 2);
    assert_eq!(code(&run(&["solve", "/nonexistent/input.json", "--p", "1"])), 2);
    assert_eq!(code(&run(&["solve", s(&input), "--p", "1,2"])), 2);
}

#[test]
fn closed_form_solve_and_trace() {
    let dir = TempDir::new().unwrap();
    let l = Lagrangian::make_basic(ConvexFunction::half_square(1)).unwrap();
    let input = write_json(&dir, "basic.json", &l);
    let out = dir.path().join("sol.json");
    let o = run(&["solve", s(&input), "--p", "0.5", "--trace", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&out);
    assert_eq!(v["status"], "certified");
    assert!((x_star(&out)[0] - 0.5).abs() < 1e-8);
    assert!(!v["trace"].as_array().unwrap().is_empty());

    let o = run(&["solve", s(&input), "--p", "0.5", "-o", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(read_json(&out)["trace"].as_array().unwrap().is_empty());
}

#[test]
fn unsolvable_inclusion_exits_7() {
    let dir = TempDir::new().unwrap();
    // ∂̄L ≡ {1}, so p = 0 has no solution.
    let phi = ConvexFunction::linear(vec![1.0], 0.0).unwrap();
    let input = write_json(&dir, "linear.json", &Lagrangian::make_basic(phi).unwrap());
    let out = dir.path().join("sol.json");
    let o = run(&["solve", s(&input), "--p", "0", "-o", s(&out)]);
    assert_eq!(code(&o), 7, "{}", stderr(&o));
    assert_ne!(read_json(&out)["status"], "certified");
}

#[test]
fn non_monotone_graph_exits_5() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "bad.json",
        r#"{"dim":1,"points":[[[0.0],[0.0]],[[1.0],[-1.0]]],"label":"decreasing"}"#,
    );
    let o = run(&["fitzpatrick", s(&input), "--box", "-1,1,9"]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("points 0 and 1"), "{}", stderr(&o));
    let o = run(&["solve", s(&input), "--box", "-1,1,9", "--p", "0"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn truncated_graph_fails_selfdualize_stage() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "short.json",
        r#"{"dim":1,"points":[[[-1.0],[-1.0]],[[0.0],[0.0]],[[1.0],[1.0]]],"label":"short"}"#,
    );
    let o = run(&["selfdualize", s(&input), "--box", "-2,2,65"]);
    assert_eq!(code(&o), 6);
    assert!(stderr(&o).contains("at node"), "{}", stderr(&o));
    let o = run(&["solve", s(&input), "--box", "-2,2,65", "--p", "0.5"]);
    assert_eq!(code(&o), 6);
}

#[test]
fn fitzpatrick_selfdualize_check_matrix() {
    let dir = TempDir::new().unwrap();
    let graph = identity_graph(&dir);
    let fitz = dir.path().join("fitz.json");
    let o = run(&["fitzpatrick", s(&graph), "--box", "-2,2,65", "-o", s(&fitz)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let matrix = dir.path().join("matrix.json");
    let o = run(&["check", s(&fitz), "-o", s(&matrix)]);
    assert_eq!(code(&o), 4);
    let v = read_json(&matrix);
    let pass = |name: &str| {
        v["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["check"] == name)
            .unwrap()["pass"]
            .as_bool()
            .unwrap()
    };
    assert!(!pass("selfdual"));
    assert!(pass("sub_selfdual"));
    assert!(pass("above_pairing"));

    let sd = dir.path().join("sd.json");
    let o = run(&["selfdualize", s(&fitz), "-o", s(&sd)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&dir.path().join("sd.report.json"));
    assert_eq!(report["converged"], true);
    assert!(report["residuals"].as_array().unwrap().len() >= 2);
    let o = run(&["check", s(&sd), "-o", s(&matrix)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&matrix)["all_pass"], true);
}

#[test]
fn check_closed_form_and_truncated_box() {
    let dir = TempDir::new().unwrap();
    let l = Lagrangian::make_basic(ConvexFunction::half_square(1)).unwrap();
    let input = write_json(&dir, "basic.json", &l);
    assert_eq!(code(&run(&["check", s(&input), "-o", "/dev/null"])), 0);

    // A graph covering [-1, 1] only: above-pairing fails out on the wide box.
    let xs = MonotoneGraph::lattice(&[Axis::new(-1.0, 1.0, 9).unwrap()]);
    let g = MonotoneGraph::sample(&xs, |x| x.into(), "short").unwrap();
    let graph = write_json(&dir, "short.json", &g);
    let fitz = dir.path().join("fitz.json");
    assert_eq!(code(&run(&["fitzpatrick", s(&graph), "--box", "-2,2,65", "-o", s(&fitz)])), 0);
    let o = run(&["check", s(&fitz), "--box", "-2,2,65;-2,2,65", "-o", "/dev/null"]);
    assert_eq!(code(&o), 4);
    let line = stderr(&o).lines().find(|l| l.starts_with("above_pairing")).unwrap().to_owned();
    assert!(line.contains("FAIL") && line.contains("worst x"), "{line}");
}

#[test]
fn identity_inclusion_through_the_pipeline() {
    let dir = TempDir::new().unwrap();
    let graph = identity_graph(&dir);
    let out = dir.path().join("sol.json");
    let o = run(&[
        "solve",
        s(&graph),
        "--box",
        "-2,2,65",
        "--p",
        "0.5",
        "--keep-intermediates",
        "-o",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((x_star(&out)[0] - 0.5).abs() <= 2.0 * 4.0 / 64.0);
    for name in ["sol.fitzpatrick.json", "sol.selfdual.json", "sol.selfdualize.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn rotation_inclusion_through_the_pipeline() {
    let dir = TempDir::new().unwrap();
    let axis = Axis::new(-2.0, 2.0, 17).unwrap();
    let xs = MonotoneGraph::lattice(&[axis, axis]);
    let g = MonotoneGraph::sample(&xs, |x| [x[1], -x[0]].as_slice().into(), "rotation").unwrap();
    let graph = write_json(&dir, "rotation.json", &g);
    let out = dir.path().join("sol.json");
    let o = run(&["solve", s(&graph), "--box", "-2,2,17;-2,2,17", "--p", "1,0", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let x = x_star(&out);
    let h = 4.0 / 16.0;
    assert!(x[0].abs() <= 2.0 * h && (x[1] - 1.0).abs() <= 2.0 * h, "{x:?}");
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let graph = identity_graph(&dir);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&["solve", s(&graph), "--box", "-2,2,65", "--p", "-0.75", "--trace", "-o", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let l = Lagrangian::make_basic(ConvexFunction::half_square(1)).unwrap();
    let input = write_json(&dir, "basic.json", &l);
    let first = run(&["check", s(&input), "--seed", "7"]);
    let second = run(&["check", s(&input), "--seed", "7"]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn emitted_lagrangian_round_trips() {
    let dir = TempDir::new().unwrap();
    let graph = identity_graph(&dir);
    let fitz = dir.path().join("fitz.json");
    assert_eq!(code(&run(&["fitzpatrick", s(&graph), "--box", "-2,2,65", "-o", s(&fitz)])), 0);
    let text = std::fs::read_to_string(&fitz).unwrap();
    let l: Lagrangian = serde_json::from_str(&text).unwrap();
    let again: Lagrangian = serde_json::from_str(&serde_json::to_string(&l).unwrap()).unwrap();
    assert_eq!(l, again);
    assert_eq!(l.as_grid().unwrap().label(), Some("identity"));
}

#[test]
fn closed_form_selfdualize_needs_a_box() {
    let dir = TempDir::new().unwrap();
    let l = Lagrangian::make_basic(ConvexFunction::half_square(1)).unwrap();
    let input = write_json(&dir, "basic.json", &l);
    assert_eq!(code(&run(&["selfdualize", s(&input)])), 2);
    let out = dir.path().join("sd.json");
    let o = run(&["selfdualize", s(&input), "--box", "-2,2,33", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

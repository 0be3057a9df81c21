//! Monotone graphs and their Fitzpatrick Lagrangians
//! `L_T(x,p) = max_{(y,q) ∈ G} ⟨p,y⟩ + ⟨q, x − y⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::grid::{discrete_conjugate, Axis, GridFunction, GridLagrangian, Shape};
use crate::lagrangian::{Lagrangian, PhaseBox};
use crate::linalg::{dot, Vector};

/// Pairings `⟨x−y, p−q⟩` below `-MONOTONE_TOL` count as violations.
pub const MONOTONE_TOL: f64 = 1e-12;

/// Largest number of cycles `is_cyclically_monotone` will enumerate,
/// measured as `|G|^max_len`.
pub const CYCLE_GUARD: f64 = 1e7;

/// Above this many `nodes × graph points`, tabulation switches to a
/// lattice conjugate when the graph's states lie on a uniform lattice.
const BRUTE_FORCE_WORK: f64 = 2e8;

/// A finite sample `{(x_i, p_i)}` of an operator graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct MonotoneGraph {
    dim: usize,
    points: Vec<(Vector, Vector)>,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    dim: usize,
    points: Vec<(Vec<f64>, Vec<f64>)>,
    #[serde(default)]
    label: String,
}

impl TryFrom<GraphFile> for MonotoneGraph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        let g = MonotoneGraph::new(
            f.points.into_iter().map(|(x, p)| (x.into(), p.into())).collect(),
            f.label,
        )?;
        check_dim(g.dim, f.dim)?;
        Ok(g)
    }
}

impl From<MonotoneGraph> for GraphFile {
    fn from(g: MonotoneGraph) -> Self {
        GraphFile {
            dim: g.dim,
            points: g.points.into_iter().map(|(x, p)| (x.to_vec(), p.to_vec())).collect(),
            label: g.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    /// First violating pair in lexicographic order.
    pub witness: Option<(usize, usize)>,
    /// `min ⟨x_i − x_j, p_i − p_j⟩` over pairs; `+∞` with fewer than two points.
    #[serde(with = "crate::extended::serde_f64")]
    pub min_pairing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyclicReport {
    pub cyclic: bool,
    /// First violating cycle (shortest length, then lexicographic).
    pub witness_cycle: Option<Vec<usize>>,
    #[serde(with = "crate::extended::serde_f64")]
    pub min_cycle_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub ok: bool,
    #[serde(with = "crate::extended::serde_f64")]
    pub min_margin: f64,
    /// `(x, p)` where the margin is smallest.
    pub worst: Option<(Vector, Vector)>,
    pub checked: usize,
}

impl MonotoneGraph {
    pub fn new(points: Vec<(Vector, Vector)>, label: impl Into<String>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("graph must have at least one point"))?;
        let dim = first.0.len();
        if dim == 0 {
            return Err(Error::invalid("graph dimension must be positive"));
        }
        for (x, p) in &points {
            check_dim(dim, x.len())?;
            check_dim(dim, p.len())?;
            if x.iter().chain(p).any(|v| !v.is_finite()) {
                return Err(Error::invalid("graph points must be finite"));
            }
        }
        Ok(MonotoneGraph {
            dim,
            points,
            label: label.into(),
        })
    }

    /// `{(x, f(x)) : x ∈ xs}`.
    pub fn sample(xs: &[Vector], f: impl Fn(&[f64]) -> Vector, label: impl Into<String>) -> Result<Self> {
        Self::new(xs.iter().map(|x| (x.clone(), f(x))).collect(), label)
    }

    /// Every node of a product of axes, as state points.
    pub fn lattice(axes: &[Axis]) -> Vec<Vector> {
        let shape = Shape::new(axes);
        let mut out = Vec::with_capacity(shape.len());
        let mut x = Vector::new();
        for flat in 0..shape.len() {
            shape.coords(axes, flat, &mut x);
            out.push(x.clone());
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[(Vector, Vector)] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn pairing(&self, i: usize, j: usize) -> f64 {
        let (x, p) = &self.points[i];
        let (y, q) = &self.points[j];
        x.iter()
            .zip(y)
            .zip(p.iter().zip(q))
            .map(|((a, b), (c, d))| (a - b) * (c - d))
            .sum()
    }

    /// Checks `⟨x−y, p−q⟩ ≥ 0` over all unordered pairs.
    pub fn is_monotone(&self) -> MonotonicityReport {
        let mut min_pairing = f64::INFINITY;
        let mut witness = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let v = self.pairing(i, j);
                if v < min_pairing {
                    min_pairing = v;
                }
                if witness.is_none() && v < -MONOTONE_TOL {
                    witness = Some((i, j));
                }
            }
        }
        MonotonicityReport {
            monotone: witness.is_none(),
            witness,
            min_pairing,
        }
    }

    /// Sum `Σ_k ⟨p_{i_k}, x_{i_k} − x_{i_{k−1}}⟩` with `x_{i_0} = x_{i_m}`.
    pub fn cycle_sum(&self, cycle: &[usize]) -> f64 {
        let m = cycle.len();
        (0..m)
            .map(|k| {
                let (x, p) = &self.points[cycle[k]];
                let prev = &self.points[cycle[(k + m - 1) % m]].0;
                p.iter().zip(x.iter().zip(prev)).map(|(a, (b, c))| a * (b - c)).sum::<f64>()
            })
            .sum()
    }

    /// Exhaustive search over cycles of distinct points with length
    /// `2..=max_len`, each enumerated once up to rotation.
    pub fn is_cyclically_monotone(&self, max_len: usize) -> Result<CyclicReport> {
        if max_len < 2 {
            return Err(Error::invalid("cycle length bound must be at least 2"));
        }
        let n = self.len();
        let work = (n as f64).powi(max_len as i32);
        if work > CYCLE_GUARD {
            return Err(Error::SizeGuard(format!(
                "{n} points with cycles up to length {max_len} need {work:.2e} evaluations (limit {CYCLE_GUARD:.0e})"
            )));
        }
        let mut report = CyclicReport {
            cyclic: true,
            witness_cycle: None,
            min_cycle_sum: f64::INFINITY,
        };
        let mut cycle = Vec::with_capacity(max_len);
        let mut used = vec![false; n];
        for len in 2..=max_len.min(n) {
            for start in 0..n {
                cycle.clear();
                cycle.push(start);
                used[start] = true;
                self.extend_cycles(len, &mut cycle, &mut used, &mut report);
                used[start] = false;
            }
            if report.witness_cycle.is_some() {
                break;
            }
        }
        Ok(report)
    }

    fn extend_cycles(&self, len: usize, cycle: &mut Vec<usize>, used: &mut [bool], report: &mut CyclicReport) {
        if cycle.len() == len {
            let s = self.cycle_sum(cycle);
            report.min_cycle_sum = report.min_cycle_sum.min(s);
            if s < -MONOTONE_TOL && report.witness_cycle.is_none() {
                report.cyclic = false;
                report.witness_cycle = Some(cycle.clone());
            }
            return;
        }
        // Canonical rotation: the first index is the smallest.
        for next in cycle[0] + 1..self.len() {
            if used[next] {
                continue;
            }
            used[next] = true;
            cycle.push(next);
            self.extend_cycles(len, cycle, used, report);
            cycle.pop();
            used[next] = false;
        }
    }

    /// `L_T(x, p) = max_{(y,q) ∈ G} ⟨p,y⟩ + ⟨q, x − y⟩`.
    pub fn fitzpatrick_eval(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, p.len())?;
        Ok(self
            .points
            .iter()
            .map(|(y, q)| dot(p, y) + dot(q, x) - dot(q, y))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Tabulates `L_T` on the product grid `axes` (state axes first).
    /// Refuses non-monotone graphs with the first violating pair.
    pub fn fitzpatrick_lagrangian(&self, axes: &[Axis]) -> Result<Lagrangian> {
        check_dim(2 * self.dim, axes.len())?;
        let report = self.is_monotone();
        if let Some((i, j)) = report.witness {
            return Err(Error::NotMonotone {
                i,
                j,
                pairing: self.pairing(i, j),
            });
        }
        let n = self.dim;
        let nodes: usize = axes.iter().map(|a| a.count).product();
        let work = nodes as f64 * self.len() as f64;
        let values = match (work > BRUTE_FORCE_WORK).then(|| self.state_lattice()).flatten() {
            Some(lattice) => self.tabulate_by_conjugate(axes, &lattice)?,
            None => {
                let g = GridFunction::from_fn(axes.to_vec(), |z| {
                    self.fitzpatrick_eval(&z[..n], &z[n..]).expect("dimensions checked")
                })?;
                g.into_values()
            }
        };
        let grid = GridLagrangian::new(n, GridFunction::new(axes.to_vec(), values)?)?.with_label(self.label.clone());
        Ok(Lagrangian::from_grid(grid))
    }

    /// Uniform lattice axes containing every graph state, if one exists.
    fn state_lattice(&self) -> Option<Vec<Axis>> {
        (0..self.dim)
            .map(|k| {
                let mut vals: Vec<f64> = self.points.iter().map(|(x, _)| x[k]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                if vals.len() < 2 {
                    return None;
                }
                let (lo, hi) = (vals[0], *vals.last().unwrap());
                let diffs = vals.windows(2).map(|w| w[1] - w[0]);
                let h = diffs.fold(f64::INFINITY, f64::min);
                let count = ((hi - lo) / h).round() as usize + 1;
                let axis = Axis::new(lo, hi, count).ok()?;
                vals.iter()
                    .all(|&v| (axis.node(axis.snap(v).unwrap_or(0)) - v).abs() <= 1e-9 * axis.step())
                    .then_some(axis)
            })
            .collect()
    }

    /// For each state node `x`, `L_T(x, ·)` is the conjugate of
    /// `y_j ↦ ⟨q_j, y_j⟩ − ⟨q_j, x⟩` (minimized over duplicates), so a
    /// lattice conjugate onto the costate axes replaces the brute-force max.
    fn tabulate_by_conjugate(&self, axes: &[Axis], lattice: &[Axis]) -> Result<Vec<f64>> {
        let n = self.dim;
        let state_axes = &axes[..n];
        let costate_axes = &axes[n..];
        let lat_shape = Shape::new(lattice);
        let slots: Vec<usize> = self
            .points
            .iter()
            .map(|(y, _)| {
                let idx: Vec<usize> = (0..n).map(|k| lattice[k].snap(y[k]).expect("on lattice")).collect();
                lat_shape.flat(&idx)
            })
            .collect();
        let cq: Vec<f64> = self.points.iter().map(|(y, q)| dot(q, y)).collect();
        let state_shape = Shape::new(state_axes);
        let ps: usize = costate_axes.iter().map(|a| a.count).product();
        let mut out = vec![0.0; state_shape.len() * ps];
        let mut x = Vector::new();
        let mut h = vec![f64::INFINITY; lat_shape.len()];
        for ix in 0..state_shape.len() {
            state_shape.coords(state_axes, ix, &mut x);
            h.fill(f64::INFINITY);
            for (j, (_, q)) in self.points.iter().enumerate() {
                let v = cq[j] - dot(q, &x);
                if v < h[slots[j]] {
                    h[slots[j]] = v;
                }
            }
            let f = GridFunction::new(lattice.to_vec(), h.clone())?;
            let g = discrete_conjugate(&f, costate_axes)?;
            out[ix * ps..(ix + 1) * ps].copy_from_slice(g.values());
        }
        Ok(out)
    }
}

/// `L*(p,x) − L(x,p) ≥ −tol` over the sample box (grid forms: their nodes
/// inside the box).
pub fn subselfdual_check(l: &Lagrangian, bx: &PhaseBox, tol: f64) -> Result<MarginReport> {
    subselfdual_check_by(l, bx, |_, _| tol)
}

/// [`subselfdual_check`] with a tolerance depending on the point.
pub fn subselfdual_check_by(l: &Lagrangian, bx: &PhaseBox, tol: impl Fn(&[f64], &[f64]) -> f64) -> Result<MarginReport> {
    check_dim(2 * l.dim(), bx.ranges.len())?;
    let mut rep = MarginReport {
        ok: true,
        min_margin: f64::INFINITY,
        worst: None,
        checked: 0,
    };
    let mut visit = |x: &[f64], p: &[f64], lv: f64, cv: f64| {
        let margin = match (lv.is_finite(), cv.is_finite()) {
            (true, true) => cv - lv,
            (false, false) => return,
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
        };
        rep.checked += 1;
        if margin < -tol(x, p) {
            rep.ok = false;
        }
        if margin < rep.min_margin || rep.worst.is_none() {
            rep.min_margin = rep.min_margin.min(margin);
            rep.worst = Some((x.into(), p.into()));
        }
    };
    if let Some(g) = l.as_grid() {
        let c = g.conjugate_transpose()?;
        for flat in 0..g.grid().len() {
            let z = g.grid().node(flat);
            if bx.contains(&z) {
                let n = g.state_dim();
                visit(&z[..n], &z[n..], g.grid().values()[flat], c.grid().values()[flat]);
            }
        }
    } else {
        bx.for_each(|x, p| visit(x, p, l.eval_raw(x, p), l.conj_raw(p, x)))?;
    }
    Ok(rep)
}

/// `L(x,p) − ⟨x,p⟩ ≥ −tol` over the sample box (grid forms: their nodes
/// inside the box).
pub fn above_pairing_check(l: &Lagrangian, bx: &PhaseBox, tol: f64) -> Result<MarginReport> {
    above_pairing_check_by(l, bx, |_, _| tol)
}

/// [`above_pairing_check`] with a tolerance depending on the point.
pub fn above_pairing_check_by(l: &Lagrangian, bx: &PhaseBox, tol: impl Fn(&[f64], &[f64]) -> f64) -> Result<MarginReport> {
    check_dim(2 * l.dim(), bx.ranges.len())?;
    let mut rep = MarginReport {
        ok: true,
        min_margin: f64::INFINITY,
        worst: None,
        checked: 0,
    };
    let mut visit = |x: &[f64], p: &[f64], gap: f64| {
        rep.checked += 1;
        if gap < -tol(x, p) {
            rep.ok = false;
        }
        if gap < rep.min_margin || rep.worst.is_none() {
            rep.min_margin = rep.min_margin.min(gap);
            rep.worst = Some((x.into(), p.into()));
        }
    };
    if let Some(g) = l.as_grid() {
        let n = g.state_dim();
        for flat in 0..g.grid().len() {
            let z = g.grid().node(flat);
            if bx.contains(&z) {
                visit(&z[..n], &z[n..], g.gap_at(flat));
            }
        }
    } else {
        bx.for_each(|x, p| visit(x, p, l.gap_raw(x, p)))?;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    fn identity_graph(lo: f64, hi: f64, count: usize) -> MonotoneGraph {
        let a = Axis::new(lo, hi, count).unwrap();
        MonotoneGraph::sample(&MonotoneGraph::lattice(&[a]), |x| x.into(), "identity").unwrap()
    }

    #[test]
    fn negation_is_not_monotone() {
        let g = MonotoneGraph::new(
            vec![(smallvec![-1.0], smallvec![1.0]), (smallvec![1.0], smallvec![-1.0])],
            "negation",
        )
        .unwrap();
        let r = g.is_monotone();
        assert!(!r.monotone);
        assert_eq!(r.witness, Some((0, 1)));
        assert_eq!(r.min_pairing, -4.0);
    }

    #[test]
    fn singleton_is_vacuously_fine() {
        let g = MonotoneGraph::new(vec![(smallvec![0.0], smallvec![0.0])], "origin").unwrap();
        assert!(g.is_monotone().monotone);
        assert_eq!(g.is_monotone().min_pairing, f64::INFINITY);
        assert!(g.is_cyclically_monotone(3).unwrap().cyclic);
        assert_eq!(g.fitzpatrick_eval(&[3.0], &[-2.0]).unwrap(), 0.0);
    }

    #[test]
    fn rotation_cycle_witness() {
        let pts: Vec<Vector> = vec![smallvec![1.0, 0.0], smallvec![0.0, 1.0], smallvec![-1.0, 0.0], smallvec![0.0, -1.0]];
        let g = MonotoneGraph::sample(&pts, |x| smallvec![x[1], -x[0]], "rotation").unwrap();
        assert!(g.is_monotone().monotone);
        let r = g.is_cyclically_monotone(4).unwrap();
        assert!(!r.cyclic);
        let w = r.witness_cycle.unwrap();
        assert!(g.cycle_sum(&w) < 0.0);
        assert_eq!(g.is_cyclically_monotone(4).unwrap().witness_cycle.unwrap(), w);
    }

    #[test]
    fn size_guard() {
        let g = identity_graph(-1.0, 1.0, 101);
        assert!(matches!(g.is_cyclically_monotone(4), Err(Error::SizeGuard(_))));
    }

    #[test]
    fn identity_fitzpatrick_value() {
        let g = identity_graph(-2.0, 2.0, 401);
        let v = g.fitzpatrick_eval(&[0.5], &[0.3]).unwrap();
        assert!((v - 0.16).abs() < 1e-3);
        for (x, p) in g.points() {
            assert_eq!(g.fitzpatrick_eval(x, p).unwrap(), dot(x, p));
        }
    }

    #[test]
    fn truncated_graph_falls_below_pairing() {
        let g = identity_graph(0.0, 1.0, 11);
        let v = g.fitzpatrick_eval(&[-2.0], &[-2.0]).unwrap();
        assert!(v - 4.0 < 0.0);
    }

    #[test]
    fn lattice_tabulation_matches_brute_force() {
        let a = Axis::new(-1.0, 1.0, 5).unwrap();
        let pts = MonotoneGraph::lattice(&[a, a]);
        let g = MonotoneGraph::sample(&pts, |x| smallvec![x[1], -x[0]], "rotation").unwrap();
        let grid_axis = Axis::new(-1.0, 1.0, 9).unwrap();
        let axes = vec![grid_axis; 4];
        let lattice = g.state_lattice().unwrap();
        let fast = g.tabulate_by_conjugate(&axes, &lattice).unwrap();
        let brute = GridFunction::from_fn(axes.clone(), |z| g.fitzpatrick_eval(&z[..2], &z[2..]).unwrap()).unwrap();
        for (u, v) in fast.iter().zip(brute.values()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn non_monotone_graph_refused() {
        let g = MonotoneGraph::new(
            vec![(smallvec![-1.0], smallvec![1.0]), (smallvec![1.0], smallvec![-1.0])],
            "negation",
        )
        .unwrap();
        let axes = vec![Axis::new(-1.0, 1.0, 3).unwrap(); 2];
        assert!(matches!(g.fitzpatrick_lagrangian(&axes), Err(Error::NotMonotone { i: 0, j: 1, .. })));
    }

    #[test]
    fn json_schema() {
        let g = MonotoneGraph::new(vec![(smallvec![0.5], smallvec![0.5])], "id").unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"dim":1,"points":[[[0.5],[0.5]]],"label":"id"}"#);
        assert_eq!(serde_json::from_str::<MonotoneGraph>(&s).unwrap(), g);
    }
}

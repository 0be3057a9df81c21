//! Residual sweeps and the vector fields `∂̄L` and `δL`.

use serde::{Deserialize, Serialize};

use super::{Lagrangian, Repr};
use crate::error::{check_dim, Error, Result};
use crate::grid::{Axis, Shape};
use crate::linalg::{self, dot, Vector};

/// Largest number of lattice points a sweep will visit.
pub const SWEEP_LIMIT: f64 = 2e8;

/// Closed-form tolerance for `∂̄` membership.
pub const CLOSED_FORM_GAP_TOL: f64 = 1e-9;

/// A rectangular sample region of phase space: `2n` ranges (state axes
/// first) with `samples` lattice points per range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub ranges: Vec<(f64, f64)>,
    pub samples: usize,
}

impl PhaseBox {
    pub fn new(ranges: Vec<(f64, f64)>, samples: usize) -> Result<Self> {
        let b = PhaseBox { ranges, samples };
        b.axes()?;
        Ok(b)
    }

    /// `[lo, hi]^{2n}`.
    pub fn cube(n: usize, lo: f64, hi: f64, samples: usize) -> Result<Self> {
        Self::new(vec![(lo, hi); 2 * n], samples)
    }

    /// State box `[lo_x, hi_x]^n` times costate box `[lo_p, hi_p]^n`.
    pub fn split(n: usize, state: (f64, f64), costate: (f64, f64), samples: usize) -> Result<Self> {
        let mut r = vec![state; n];
        r.extend(std::iter::repeat(costate).take(n));
        Self::new(r, samples)
    }

    pub fn from_axes(axes: &[Axis]) -> Result<Self> {
        let samples = axes.first().map(|a| a.count).unwrap_or(0);
        if axes.iter().any(|a| a.count != samples) {
            return Err(Error::invalid("phase box axes must share a sample count"));
        }
        Self::new(axes.iter().map(|a| (a.min, a.max)).collect(), samples)
    }

    pub fn axes(&self) -> Result<Vec<Axis>> {
        if self.ranges.is_empty() || self.ranges.len() % 2 != 0 {
            return Err(Error::invalid("phase box needs an even, positive number of ranges"));
        }
        self.ranges
            .iter()
            .map(|&(lo, hi)| Axis::new(lo, hi, self.samples))
            .collect()
    }

    pub fn state_dim(&self) -> usize {
        self.ranges.len() / 2
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(&self.ranges).all(|(&t, &(lo, hi))| {
            let s = 1e-12 * (hi - lo);
            t >= lo - s && t <= hi + s
        })
    }

    /// Calls `f(x, p)` at every lattice point.
    pub fn for_each(&self, mut f: impl FnMut(&[f64], &[f64])) -> Result<()> {
        let axes = self.axes()?;
        let n = self.state_dim();
        let total = (self.samples as f64).powi(axes.len() as i32);
        if total > SWEEP_LIMIT {
            return Err(Error::SizeGuard(format!("{total:.2e} sample points exceed {SWEEP_LIMIT:.0e}")));
        }
        let nodes: Vec<Vec<f64>> = axes.iter().map(Axis::nodes).collect();
        let shape = Shape::new(&axes);
        let mut idx = [0usize; 4];
        let mut z = Vector::from_elem(0.0, axes.len());
        for flat in 0..shape.len() {
            shape.index(flat, &mut idx);
            for k in 0..axes.len() {
                z[k] = nodes[k][idx[k]];
            }
            f(&z[..n], &z[n..]);
        }
        Ok(())
    }
}

/// Outcome of a selfduality sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max |L*(p,x) − L(x,p)|` over points where both are finite.
    pub max_abs: f64,
    pub worst_point: Option<(Vector, Vector)>,
    pub compared: usize,
    /// Points where exactly one side is finite.
    pub mismatched: usize,
}

/// Whether a `∂̄` sample comes from a selfdual Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLabel {
    SelfdualField,
    RawGapMinimizers,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub p: Vector,
    pub gap: f64,
}

/// Costate points with small gap `L(x,p) − ⟨x,p⟩` at a fixed `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorFieldSample {
    pub x: Vector,
    /// Sorted by ascending gap.
    pub candidates: Vec<Candidate>,
    /// Global gap minimizer over the searched points.
    pub minimizer: Option<Candidate>,
    pub label: FieldLabel,
}

impl VectorFieldSample {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    /// Hausdorff distance between candidate sets (`+∞` if exactly one is
    /// empty).
    pub fn hausdorff(&self, other: &VectorFieldSample) -> f64 {
        match (self.is_empty(), other.is_empty()) {
            (true, true) => return 0.0,
            (true, false) | (false, true) => return f64::INFINITY,
            _ => {}
        }
        let one_sided = |a: &[Candidate], b: &[Candidate]| {
            a.iter()
                .map(|u| b.iter().map(|v| linalg::dist2(&u.p, &v.p)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        one_sided(&self.candidates, &other.candidates).max(one_sided(&other.candidates, &self.candidates))
    }

    /// Smallest and largest candidate per coordinate.
    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        let first = self.candidates.first()?;
        let mut b: Vec<(f64, f64)> = first.p.iter().map(|&v| (v, v)).collect();
        for c in &self.candidates {
            for (k, &v) in c.p.iter().enumerate() {
                b[k].0 = b[k].0.min(v);
                b[k].1 = b[k].1.max(v);
            }
        }
        Some(b)
    }
}

/// Tolerance for `∂̄` membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapTol {
    /// `1e−9` for closed forms, `3h(1 + ‖x‖ + ‖p‖)` for grid forms.
    Default,
    Abs(f64),
}

impl From<f64> for GapTol {
    fn from(v: f64) -> Self {
        GapTol::Abs(v)
    }
}

impl Lagrangian {
    /// Tolerance used for `∂̄` membership at `(x, p)`.
    pub fn gap_tol(&self, tol: GapTol, x: &[f64], p: &[f64]) -> f64 {
        match tol {
            GapTol::Abs(t) => t,
            GapTol::Default => match self.grid_step() {
                Some(h) => 3.0 * h * (1.0 + linalg::norm2(x) + linalg::norm2(p)),
                None => CLOSED_FORM_GAP_TOL,
            },
        }
    }

    /// `max |L*(p,x) − L(x,p)|` over the sample box. Grid forms are
    /// compared at their own nodes inside the box.
    pub fn selfduality_residual(&self, bx: &PhaseBox) -> Result<ResidualReport> {
        check_dim(2 * self.dim, bx.ranges.len())?;
        let mut rep = ResidualReport {
            max_abs: 0.0,
            worst_point: None,
            compared: 0,
            mismatched: 0,
        };
        if let Repr::Grid(g) = &self.repr {
            let c = g.conjugate_transpose()?;
            for flat in 0..g.grid().len() {
                let (x, p) = g.node(flat);
                let z: Vector = x.iter().chain(&p).copied().collect();
                if !bx.contains(&z) {
                    continue;
                }
                let (l, m) = (g.grid().values()[flat], c.grid().values()[flat]);
                record(&mut rep, l, m, &x, &p);
            }
        } else {
            bx.for_each(|x, p| {
                let l = self.eval_raw(x, p);
                let m = self.conj_raw(p, x);
                record(&mut rep, l, m, x, p);
            })?;
        }
        if rep.compared == 0 {
            return Err(Error::invalid("no sample point where both L and L* are finite"));
        }
        Ok(rep)
    }

    /// Costate points with `L(x,p) − ⟨x,p⟩ ≤ tol`, searched over the
    /// lattice of `costate` (closed forms) or the grid's own costate nodes
    /// inside `costate` (grid forms), plus the exact field element when the
    /// form provides one.
    pub fn dbar(&self, x: &[f64], costate: &[Axis], tol: GapTol) -> Result<VectorFieldSample> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, costate.len())?;
        let mut all: Vec<Candidate> = Vec::new();
        if let Repr::Grid(g) = &self.repr {
            let slice = g.costate_slice(x)?;
            let bx: Vec<(f64, f64)> = costate.iter().map(|a| (a.min, a.max)).collect();
            for (q, v) in g.costate_nodes().into_iter().zip(slice) {
                let inside = q.iter().zip(&bx).all(|(&t, &(lo, hi))| {
                    let s = 1e-12 * (hi - lo);
                    t >= lo - s && t <= hi + s
                });
                if inside && v.is_finite() {
                    all.push(Candidate {
                        gap: v - dot(x, &q),
                        p: q,
                    });
                }
            }
        } else {
            let shape = Shape::new(costate);
            let nodes: Vec<Vec<f64>> = costate.iter().map(Axis::nodes).collect();
            let mut idx = [0usize; 4];
            for flat in 0..shape.len() {
                shape.index(flat, &mut idx);
                let q: Vector = (0..self.dim).map(|k| nodes[k][idx[k]]).collect();
                let gap = self.gap_raw(x, &q);
                if gap.is_finite() {
                    all.push(Candidate { p: q, gap });
                }
            }
        }
        if let Some(p) = self.field_representative(x) {
            let gap = self.gap_raw(x, &p);
            if gap.is_finite() {
                all.push(Candidate { p, gap });
            }
        }
        all.sort_by(|a, b| a.gap.total_cmp(&b.gap));
        let minimizer = all.first().cloned();
        let candidates = all
            .into_iter()
            .filter(|c| c.gap <= self.gap_tol(tol, x, &c.p))
            .collect();
        Ok(VectorFieldSample {
            x: x.into(),
            candidates,
            minimizer,
            label: if self.underlying_grid().is_some() {
                FieldLabel::RawGapMinimizers
            } else {
                FieldLabel::SelfdualField
            },
        })
    }

    /// An element of `∂̄L(x)` computed from the closed form, if available.
    pub fn field_representative(&self, x: &[f64]) -> Option<Vector> {
        match &self.repr {
            Repr::Basic { phi, .. } => phi.subgradient_raw(x).ok()?.representative(),
            Repr::Skew { phi, gamma, .. } | Repr::Nonneg { phi, gamma, .. } => {
                let r = phi.subgradient_raw(x).ok()?.representative()?;
                let gx = linalg::matvec(gamma.gamma(), x);
                Some(gx.iter().zip(&r).map(|(a, b)| a + b).collect())
            }
            Repr::Translated { base, p0 } => {
                let r = base.field_representative(x)?;
                Some(r.iter().zip(p0).map(|(a, b)| a - b).collect())
            }
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => ic.normal.as_ref()?.field_representative(x),
            Repr::Grid(_) => None,
        }
    }

    /// Fenchel equality test `L(x,p) + L*(p,x) ≤ 2⟨x,p⟩ + tol`, i.e.
    /// `(p, x) ∈ ∂L(x, p)`.
    pub fn delta(&self, x: &[f64], p: &[f64], tol: f64) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, p.len())?;
        let l = self.eval_raw(x, p);
        let c = self.conj_raw(p, x);
        Ok(l.is_finite() && c.is_finite() && l + c <= 2.0 * dot(x, p) + tol)
    }
}

fn record(rep: &mut ResidualReport, l: f64, m: f64, x: &[f64], p: &[f64]) {
    match (l.is_finite(), m.is_finite()) {
        (true, true) => {
            rep.compared += 1;
            let d = (l - m).abs();
            if d > rep.max_abs || rep.worst_point.is_none() {
                rep.max_abs = rep.max_abs.max(d);
                rep.worst_point = Some((x.into(), p.into()));
            }
        }
        (false, false) => {}
        _ => rep.mismatched += 1,
    }
}

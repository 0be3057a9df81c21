//! Closed-form convex functions on `R^n`.
//!
//! Every kind evaluates into `R ∪ {+∞}`. Conjugates, subdifferentials and
//! proximal maps are exact for the closed-form kinds; grid-backed functions
//! go through [`crate::grid`].

mod conjugate;
mod prox;
mod subgradient;

pub use conjugate::GridFallback;
pub use subgradient::SubgradientSet;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::extended::{serde_f64, ExtReal};
use crate::grid::GridFunction;
use crate::linalg::{self, dot, serde_matrix, Vector, PSD_FLOOR};

/// Relative slack used when testing membership in closed sets.
pub(crate) const MEMBERSHIP_SLACK: f64 = 1e-12;

#[inline]
pub(crate) fn slack(bound: f64) -> f64 {
    MEMBERSHIP_SLACK * (1.0 + bound.abs())
}

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalRepr", into = "IntervalRepr")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Serialize, Deserialize)]
struct IntervalRepr(
    #[serde(with = "serde_f64")] f64,
    #[serde(with = "serde_f64")] f64,
);

impl TryFrom<IntervalRepr> for Interval {
    type Error = Error;
    fn try_from(r: IntervalRepr) -> Result<Self> {
        Interval::new(r.0, r.1)
    }
}

impl From<Interval> for IntervalRepr {
    fn from(i: Interval) -> Self {
        IntervalRepr(i.lo, i.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("empty or invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub const fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub const fn all() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, t: f64, tol: f64) -> bool {
        t >= self.lo - tol && t <= self.hi + tol
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.max(self.lo).min(self.hi)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// `sup_{t ∈ [lo,hi]} t·x`, with `0·∞ = 0`.
    pub fn support(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.hi * x
        } else if x < 0.0 {
            self.lo * x
        } else {
            0.0
        }
    }
}

/// Norms with closed-form conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    L2,
    L1,
    Linf,
}

impl NormKind {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            NormKind::L2 => linalg::norm2(x),
            NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
            NormKind::Linf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn dual(self) -> NormKind {
        match self {
            NormKind::L2 => NormKind::L2,
            NormKind::L1 => NormKind::Linf,
            NormKind::Linf => NormKind::L1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexKind {
    /// `½⟨Ax,x⟩ + ⟨b,x⟩ + c`.
    Quadratic { a: DMatrix<f64>, b: Vec<f64>, c: f64 },
    /// `weight·‖x‖`.
    Norm { weight: f64, norm: NormKind },
    /// Indicator of `{‖x‖ ≤ radius}`.
    Ball { radius: f64, norm: NormKind },
    /// Indicator of a product of closed intervals.
    Indicator { bounds: Vec<Interval> },
    /// Support function of a box, `Σ sup_{t ∈ box_i} t·x_i`.
    SupportOfBox { bounds: Vec<Interval> },
    /// `⟨slope,x⟩ + offset`.
    Linear { slope: Vec<f64>, offset: f64 },
    /// Separable Huber function with threshold `delta`.
    Huber { delta: f64 },
    /// Moreau envelope `min_u inner(u) + ‖x-u‖²/(2·param)`.
    Envelope { inner: Box<ConvexFunction>, param: f64 },
    /// Multilinear interpolant of grid samples.
    GridBacked(Arc<GridFunction>),
    Sum(Vec<ConvexFunction>),
    /// `inner(map·x + shift)`.
    Precomposed {
        inner: Box<ConvexFunction>,
        shift: Vec<f64>,
        map: DMatrix<f64>,
    },
}

/// A proper closed convex function on `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexSpec", into = "ConvexSpec")]
pub struct ConvexFunction {
    dim: usize,
    kind: ConvexKind,
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be finite")))
    }
}

fn check_positive(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be positive and finite, got {v}")))
    }
}

impl ConvexFunction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ConvexKind {
        &self.kind
    }

    /// `½⟨Ax,x⟩ + ⟨b,x⟩ + c` with `A` symmetric positive semidefinite.
    pub fn quadratic(a: DMatrix<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        linalg::require_square(&a, n)?;
        check_finite(a.as_slice(), "quadratic matrix")?;
        check_finite(&b, "linear term")?;
        check_finite(&[c], "constant")?;
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let asym = (&a - a.transpose()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if asym > 1e-12 * scale {
            return Err(Error::invalid(format!("quadratic matrix is not symmetric (defect {asym:e})")));
        }
        let sym = (&a + a.transpose()) * 0.5;
        let min_eig = linalg::min_eigenvalue(&sym);
        if min_eig < PSD_FLOOR {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(ConvexFunction {
            dim: n,
            kind: ConvexKind::Quadratic { a: sym, b, c },
        })
    }

    /// `(a/2)‖x‖²`.
    pub fn scaled_square(n: usize, a: f64) -> Result<Self> {
        Self::quadratic(DMatrix::identity(n, n) * a, vec![0.0; n], 0.0)
    }

    /// `½‖x‖²`.
    pub fn half_square(n: usize) -> Self {
        Self::scaled_square(n, 1.0).expect("identity is positive definite")
    }

    pub fn norm(n: usize, weight: f64, norm: NormKind) -> Result<Self> {
        Self::require_dim(n)?;
        check_positive(weight, "norm weight")?;
        Ok(ConvexFunction {
            dim: n,
            kind: ConvexKind::Norm { weight, norm },
        })
    }

    pub fn ball(n: usize, radius: f64, norm: NormKind) -> Result<Self> {
        Self::require_dim(n)?;
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::invalid(format!("ball radius must be nonnegative, got {radius}")));
        }
        Ok(ConvexFunction {
            dim: n,
            kind: ConvexKind::Ball { radius, norm },
        })
    }

    pub fn indicator(bounds: Vec<Interval>) -> Result<Self> {
        Self::require_dim(bounds.len())?;
        for b in &bounds {
            Interval::new(b.lo, b.hi)?;
        }
        Ok(ConvexFunction {
            dim: bounds.len(),
            kind: ConvexKind::Indicator { bounds },
        })
    }

    /// Indicator of the single point `x`.
    pub fn indicator_point(x: &[f64]) -> Result<Self> {
        check_finite(x, "point")?;
        Self::indicator(x.iter().map(|&v| Interval::point(v)).collect())
    }

    /// Indicator of `[lo, hi]^n`.
    pub fn indicator_cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::indicator(vec![Interval::new(lo, hi)?; n])
    }

    pub fn support_of_box(bounds: Vec<Interval>) -> Result<Self> {
        Self::require_dim(bounds.len())?;
        for b in &bounds {
            Interval::new(b.lo, b.hi)?;
        }
        Ok(ConvexFunction {
            dim: bounds.len(),
            kind: ConvexKind::SupportOfBox { bounds },
        })
    }

    pub fn linear(slope: Vec<f64>, offset: f64) -> Result<Self> {
        Self::require_dim(slope.len())?;
        check_finite(&slope, "slope")?;
        check_finite(&[offset], "offset")?;
        Ok(ConvexFunction {
            dim: slope.len(),
            kind: ConvexKind::Linear { slope, offset },
        })
    }

    /// The zero function on `R^n`.
    pub fn zero(n: usize) -> Self {
        Self::linear(vec![0.0; n], 0.0).expect("zero function")
    }

    pub fn huber(n: usize, delta: f64) -> Result<Self> {
        Self::require_dim(n)?;
        check_positive(delta, "Huber threshold")?;
        Ok(ConvexFunction {
            dim: n,
            kind: ConvexKind::Huber { delta },
        })
    }

    /// Moreau envelope of `inner` with parameter `param`; `inner` needs a
    /// proximal map.
    pub fn envelope(inner: ConvexFunction, param: f64) -> Result<Self> {
        check_positive(param, "envelope parameter")?;
        if !inner.supports_prox() {
            return Err(Error::UnsupportedProx(
                "Moreau envelope needs an inner function with a proximal map".into(),
            ));
        }
        Ok(ConvexFunction {
            dim: inner.dim,
            kind: ConvexKind::Envelope {
                inner: Box::new(inner),
                param,
            },
        })
    }

    pub fn grid_backed(grid: GridFunction) -> Self {
        ConvexFunction {
            dim: grid.dim(),
            kind: ConvexKind::GridBacked(Arc::new(grid)),
        }
    }

    pub fn sum(terms: Vec<ConvexFunction>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::invalid("sum needs at least one term"))?;
        let n = first.dim;
        for t in &terms {
            check_dim(n, t.dim)?;
        }
        let f = ConvexFunction {
            dim: n,
            kind: ConvexKind::Sum(terms),
        };
        f.check_box_domains()?;
        Ok(f)
    }

    /// `inner(map·x + shift)`; `map` is `inner.dim × n`.
    pub fn precomposed(inner: ConvexFunction, shift: Vec<f64>, map: DMatrix<f64>) -> Result<Self> {
        check_dim(inner.dim, map.nrows())?;
        check_dim(inner.dim, shift.len())?;
        Self::require_dim(map.ncols())?;
        check_finite(&shift, "shift")?;
        check_finite(map.as_slice(), "linear map")?;
        Ok(ConvexFunction {
            dim: map.ncols(),
            kind: ConvexKind::Precomposed {
                inner: Box::new(inner),
                shift,
                map,
            },
        })
    }

    /// `x ↦ self(x + shift)`.
    pub fn shifted(self, shift: Vec<f64>) -> Result<Self> {
        let n = self.dim;
        Self::precomposed(self, shift, DMatrix::identity(n, n))
    }

    fn require_dim(n: usize) -> Result<()> {
        if n == 0 {
            Err(Error::invalid("dimension must be positive"))
        } else {
            Ok(())
        }
    }

    /// Rejects sums of box constraints with empty intersection.
    fn check_box_domains(&self) -> Result<()> {
        let mut acc: Option<Vec<Interval>> = None;
        for t in self.flat_terms() {
            let bounds = match t.box_domain() {
                Some(b) => b,
                None => continue,
            };
            acc = Some(match acc {
                None => bounds,
                Some(prev) => prev
                    .iter()
                    .zip(&bounds)
                    .map(|(a, b)| a.intersect(b))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::Improper("sum of indicators has empty domain".into()))?,
            });
        }
        Ok(())
    }

    /// The box if `self` is the indicator of one.
    pub(crate) fn box_domain(&self) -> Option<Vec<Interval>> {
        match &self.kind {
            ConvexKind::Indicator { bounds } => Some(bounds.clone()),
            ConvexKind::Ball {
                radius,
                norm: NormKind::Linf,
            } => Some(vec![Interval { lo: -radius, hi: *radius }; self.dim]),
            ConvexKind::Ball { radius, .. } if self.dim == 1 => Some(vec![Interval { lo: -radius, hi: *radius }]),
            _ => None,
        }
    }

    /// Terms of nested sums, flattened.
    pub(crate) fn flat_terms(&self) -> Vec<&ConvexFunction> {
        match &self.kind {
            ConvexKind::Sum(ts) => ts.iter().flat_map(|t| t.flat_terms()).collect(),
            _ => vec![self],
        }
    }

    pub fn is_grid_backed(&self) -> bool {
        match &self.kind {
            ConvexKind::GridBacked(_) => true,
            ConvexKind::Sum(ts) => ts.iter().any(Self::is_grid_backed),
            ConvexKind::Envelope { inner, .. } | ConvexKind::Precomposed { inner, .. } => inner.is_grid_backed(),
            _ => false,
        }
    }

    /// `f(x)`, or `+∞` outside the effective domain.
    pub fn evaluate(&self, x: &[f64]) -> Result<ExtReal> {
        check_dim(self.dim, x.len())?;
        ExtReal::new(self.eval_raw(x))
    }

    /// Unchecked evaluation; `+∞` is `f64::INFINITY`.
    pub(crate) fn eval_raw(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ConvexKind::Quadratic { a, b, c } => {
                let n = self.dim;
                let mut q = 0.0;
                for i in 0..n {
                    let mut row = 0.0;
                    for j in 0..n {
                        row += a[(i, j)] * x[j];
                    }
                    q += row * x[i];
                }
                0.5 * q + dot(b, x) + c
            }
            ConvexKind::Norm { weight, norm } => weight * norm.eval(x),
            ConvexKind::Ball { radius, norm } => {
                if norm.eval(x) <= radius + slack(*radius) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexKind::Indicator { bounds } => {
                let inside = bounds
                    .iter()
                    .zip(x)
                    .all(|(b, &t)| t >= b.lo - slack(b.lo) && t <= b.hi + slack(b.hi));
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexKind::SupportOfBox { bounds } => bounds.iter().zip(x).map(|(b, &t)| b.support(t)).sum(),
            ConvexKind::Linear { slope, offset } => dot(slope, x) + offset,
            ConvexKind::Huber { delta } => x.iter().map(|&t| huber_1d(t, *delta)).sum(),
            ConvexKind::Envelope { inner, param } => {
                let u = inner.prox(x, *param).expect("envelope inner has a prox");
                let d2: f64 = x.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
                inner.eval_raw(&u) + d2 / (2.0 * param)
            }
            ConvexKind::GridBacked(g) => g.interpolate_raw(x),
            ConvexKind::Sum(ts) => {
                let mut acc = 0.0;
                for t in ts {
                    acc += t.eval_raw(x);
                    if acc == f64::INFINITY {
                        break;
                    }
                }
                acc
            }
            ConvexKind::Precomposed { inner, shift, map } => {
                let mut y = linalg::matvec(map, x);
                for (v, s) in y.iter_mut().zip(shift) {
                    *v += s;
                }
                inner.eval_raw(&y)
            }
        }
    }

    /// Evaluates on a batch of points.
    pub fn evaluate_many(&self, xs: &[Vector]) -> Result<Vec<ExtReal>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }
}

pub(crate) fn huber_1d(t: f64, delta: f64) -> f64 {
    let a = t.abs();
    if a <= delta {
        0.5 * t * t
    } else {
        delta * a - 0.5 * delta * delta
    }
}

/// JSON form: `{"kind": ..., "dim": n, parameters...}`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ConvexSpec {
    Quadratic {
        dim: usize,
        #[serde(with = "serde_matrix")]
        a: DMatrix<f64>,
        b: Vec<f64>,
        c: f64,
    },
    Norm {
        dim: usize,
        weight: f64,
        #[serde(default)]
        norm: NormKind,
    },
    Ball {
        dim: usize,
        radius: f64,
        #[serde(default)]
        norm: NormKind,
    },
    Indicator {
        dim: usize,
        #[serde(rename = "box")]
        bounds: Vec<Interval>,
    },
    SupportOfBox {
        dim: usize,
        #[serde(rename = "box")]
        bounds: Vec<Interval>,
    },
    Linear {
        dim: usize,
        slope: Vec<f64>,
        offset: f64,
    },
    Huber {
        dim: usize,
        delta: f64,
    },
    Envelope {
        dim: usize,
        inner: Box<ConvexFunction>,
        param: f64,
    },
    Grid {
        dim: usize,
        grid: GridFunction,
    },
    Sum {
        dim: usize,
        terms: Vec<ConvexFunction>,
    },
    Precomposed {
        dim: usize,
        inner: Box<ConvexFunction>,
        shift: Vec<f64>,
        #[serde(with = "serde_matrix")]
        map: DMatrix<f64>,
    },
}

impl TryFrom<ConvexSpec> for ConvexFunction {
    type Error = Error;

    fn try_from(s: ConvexSpec) -> Result<Self> {
        let (dim, f) = match s {
            ConvexSpec::Quadratic { dim, a, b, c } => (dim, Self::quadratic(a, b, c)?),
            ConvexSpec::Norm { dim, weight, norm } => (dim, Self::norm(dim, weight, norm)?),
            ConvexSpec::Ball { dim, radius, norm } => (dim, Self::ball(dim, radius, norm)?),
            ConvexSpec::Indicator { dim, bounds } => (dim, Self::indicator(bounds)?),
            ConvexSpec::SupportOfBox { dim, bounds } => (dim, Self::support_of_box(bounds)?),
            ConvexSpec::Linear { dim, slope, offset } => (dim, Self::linear(slope, offset)?),
            ConvexSpec::Huber { dim, delta } => (dim, Self::huber(dim, delta)?),
            ConvexSpec::Envelope { dim, inner, param } => (dim, Self::envelope(*inner, param)?),
            ConvexSpec::Grid { dim, grid } => (dim, Self::grid_backed(grid)),
            ConvexSpec::Sum { dim, terms } => (dim, Self::sum(terms)?),
            ConvexSpec::Precomposed { dim, inner, shift, map } => (dim, Self::precomposed(*inner, shift, map)?),
        };
        check_dim(f.dim, dim)?;
        Ok(f)
    }
}

impl From<ConvexFunction> for ConvexSpec {
    fn from(f: ConvexFunction) -> Self {
        let dim = f.dim;
        match f.kind {
            ConvexKind::Quadratic { a, b, c } => ConvexSpec::Quadratic { dim, a, b, c },
            ConvexKind::Norm { weight, norm } => ConvexSpec::Norm { dim, weight, norm },
            ConvexKind::Ball { radius, norm } => ConvexSpec::Ball { dim, radius, norm },
            ConvexKind::Indicator { bounds } => ConvexSpec::Indicator { dim, bounds },
            ConvexKind::SupportOfBox { bounds } => ConvexSpec::SupportOfBox { dim, bounds },
            ConvexKind::Linear { slope, offset } => ConvexSpec::Linear { dim, slope, offset },
            ConvexKind::Huber { delta } => ConvexSpec::Huber { dim, delta },
            ConvexKind::Envelope { inner, param } => ConvexSpec::Envelope { dim, inner, param },
            ConvexKind::GridBacked(g) => ConvexSpec::Grid {
                dim,
                grid: Arc::unwrap_or_clone(g),
            },
            ConvexKind::Sum(terms) => ConvexSpec::Sum { dim, terms },
            ConvexKind::Precomposed { inner, shift, map } => ConvexSpec::Precomposed { dim, inner, shift, map },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_evaluations() {
        let q = ConvexFunction::half_square(2);
        assert_eq!(q.evaluate(&[1.0, 1.0]).unwrap().value(), 1.0);
        let ind = ConvexFunction::indicator_cube(1, 0.0, 1.0).unwrap();
        assert!(ind.evaluate(&[2.0]).unwrap().is_infinite());
        let n = ConvexFunction::norm(2, 1.0, NormKind::L2).unwrap();
        assert_eq!(n.evaluate(&[3.0, 4.0]).unwrap().value(), 5.0);
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let q = ConvexFunction::half_square(2);
        assert!(matches!(q.evaluate(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn indefinite_quadratic_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(
            ConvexFunction::quadratic(a, vec![0.0; 2], 0.0),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn empty_domain_sum_rejected() {
        let a = ConvexFunction::indicator_cube(1, 0.0, 1.0).unwrap();
        let b = ConvexFunction::indicator_cube(1, 2.0, 3.0).unwrap();
        assert!(matches!(ConvexFunction::sum(vec![a, b]), Err(Error::Improper(_))));
    }

    #[test]
    fn support_function_handles_unbounded_sides() {
        let f = ConvexFunction::support_of_box(vec![Interval::new(0.0, f64::INFINITY).unwrap()]).unwrap();
        assert_eq!(f.evaluate(&[-2.0]).unwrap().value(), 0.0);
        assert!(f.evaluate(&[1.0]).unwrap().is_infinite());
        assert_eq!(f.evaluate(&[0.0]).unwrap().value(), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let f = ConvexFunction::sum(vec![
            ConvexFunction::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), vec![1.0, 0.0], 0.5)
                .unwrap(),
            ConvexFunction::indicator(vec![Interval::new(f64::NEG_INFINITY, 1.0).unwrap(), Interval::all()])
                .unwrap(),
        ])
        .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"kind\":\"sum\""));
        assert!(s.contains("[\"-INF\",1.0]"));
        let back: ConvexFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn json_dimension_checked() {
        let bad = r#"{"kind":"linear","dim":3,"slope":[1.0,2.0],"offset":0.0}"#;
        assert!(serde_json::from_str::<ConvexFunction>(bad).is_err());
    }
}

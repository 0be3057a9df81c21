//! Extended-real functions sampled on uniform rectangular grids.
//!
//! Values are stored row-major with the last axis fastest; `+∞` is
//! `f64::INFINITY`. Dimensions 1 through 4 are supported: 1 and 2 for
//! functions on `R^n`, 2 and 4 for Lagrangians on `R^n × R^n`.

mod conjugate;
mod convolution;
mod lagrangian;

pub use conjugate::{biconjugate, biconjugate_with, conjugate_line, default_dual_axes, discrete_conjugate};
pub use convolution::{epi_average, inf_convolution, EPI_AVERAGE_WORK_LIMIT};
pub use lagrangian::GridLagrangian;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::extended::{serde_f64, ExtReal, INF_TOKEN};
use crate::linalg::Vector;

pub const MAX_GRID_DIM: usize = 4;

/// One uniform axis: `count` nodes from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let a = Axis { min, max, count };
        a.validate()?;
        Ok(a)
    }

    /// Symmetric axis `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, count: usize) -> Result<Self> {
        Axis::new(-half_width, half_width, count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::invalid("axis bounds must be finite"));
        }
        if self.count < 2 {
            return Err(Error::invalid(format!("axis needs at least 2 nodes, got {}", self.count)));
        }
        if self.max <= self.min {
            return Err(Error::invalid(format!(
                "axis spacing must be positive: [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    /// Nearest node to `t`, ties toward the lower node; `None` when the
    /// nearest lattice point falls outside the axis.
    pub fn snap(&self, t: f64) -> Option<usize> {
        let u = (t - self.min) / self.step();
        let k = (u - 0.5).ceil();
        // Absorb round-off so that exact lattice points never flip a tie.
        let k = if (u - u.round()).abs() < 1e-9 { u.round() } else { k };
        if k < 0.0 || k > (self.count - 1) as f64 {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Cell containing `t` and the fractional position inside it.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let h = self.step();
        let slack = 1e-12 * h;
        if t < self.min - slack || t > self.max + slack {
            return None;
        }
        let u = ((t - self.min) / h).clamp(0.0, (self.count - 1) as f64);
        let i = (u.floor() as usize).min(self.count - 2);
        Some((i, u - i as f64))
    }

    /// Symmetric about the origin with the origin as a node.
    pub fn is_symmetric(&self) -> bool {
        let scale = self.max.abs().max(self.min.abs()).max(1.0);
        (self.min + self.max).abs() <= 1e-12 * scale && self.count % 2 == 1
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * self.step();
        t >= self.min - slack && t <= self.max + slack
    }
}

/// Parses `"min,max,count;min,max,count;..."`.
pub fn parse_axes(spec: &str) -> Result<Vec<Axis>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let fields: Vec<&str> = part.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::invalid(format!("axis \"{part}\" must be min,max,count")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number \"{s}\" in axis \"{part}\"")))
            };
            let count = fields[2]
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad count in axis \"{part}\"")))?;
            Axis::new(num(fields[0])?, num(fields[1])?, count)
        })
        .collect()
}

/// Values of an extended-real function on a product of uniform axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFile", into = "GridFile")]
pub struct GridFunction {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        let g = Self::from_parts(axes, values)?;
        if !g.values.iter().any(|v| v.is_finite()) {
            return Err(Error::Improper("grid function has no finite value".into()));
        }
        Ok(g)
    }

    /// Like [`GridFunction::new`] but allows an all-infinite table.
    pub(crate) fn from_parts(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_GRID_DIM {
            return Err(Error::invalid(format!(
                "grid dimension must be in 1..={MAX_GRID_DIM}, got {}",
                axes.len()
            )));
        }
        for a in &axes {
            a.validate()?;
        }
        let len: usize = axes.iter().map(|a| a.count).product();
        check_dim(len, values.len())?;
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::UndefinedArithmetic("grid values must lie in R ∪ {+inf}"));
        }
        Ok(GridFunction { axes, values })
    }

    /// Tabulates `f` at every node.
    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let shape = Shape::new(&axes);
        let mut values = Vec::with_capacity(shape.len());
        let mut x = Vector::new();
        for flat in 0..shape.len() {
            shape.coords(&axes, flat, &mut x);
            values.push(f(&x));
        }
        GridFunction::new(axes, values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> Shape {
        Shape::new(&self.axes)
    }

    /// Coordinates of node `flat`.
    pub fn node(&self, flat: usize) -> Vector {
        let mut x = Vector::new();
        self.shape().coords(&self.axes, flat, &mut x);
        x
    }

    pub fn get(&self, idx: &[usize]) -> ExtReal {
        ExtReal::new(self.values[self.shape().flat(idx)]).expect("validated grid value")
    }

    /// Value at the node nearest to `x`; `+∞` outside the grid.
    pub fn value_at(&self, x: &[f64]) -> Result<ExtReal> {
        check_dim(self.dim(), x.len())?;
        let mut idx: smallvec::SmallVec<[usize; 4]> = smallvec::SmallVec::new();
        for (a, &t) in self.axes.iter().zip(x) {
            match a.snap(t) {
                Some(i) => idx.push(i),
                None => return Ok(ExtReal::INFINITY),
            }
        }
        Ok(self.get(&idx))
    }

    /// Multilinear interpolant; `+∞` outside the grid or when a corner with
    /// positive weight is infinite. Exact at nodes.
    pub fn interpolate(&self, x: &[f64]) -> Result<ExtReal> {
        check_dim(self.dim(), x.len())?;
        Ok(ExtReal::new(self.interpolate_raw(x)).expect("interpolant"))
    }

    pub(crate) fn interpolate_raw(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut cell = [(0usize, 0.0f64); MAX_GRID_DIM];
        for k in 0..d {
            match self.axes[k].locate(x[k]) {
                Some(c) => cell[k] = c,
                None => return f64::INFINITY,
            }
        }
        let strides = self.shape().strides;
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let (i, t) = cell[k];
                let up = (corner >> k) & 1 == 1;
                let wk = if up { t } else { 1.0 - t };
                if wk == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= wk;
                flat += (i + up as usize) * strides[k];
            }
            if w == 0.0 {
                continue;
            }
            let v = self.values[flat];
            if !v.is_finite() {
                return f64::INFINITY;
            }
            acc += w * v;
        }
        acc
    }

    pub fn finite_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    /// Maximum grid spacing over all axes.
    pub fn max_step(&self) -> f64 {
        self.axes.iter().map(Axis::step).fold(0.0, f64::max)
    }

    /// Largest second difference violation along grid lines, as a
    /// nonnegative number (0 for discretely convex data).
    pub fn convexity_defect(&self) -> f64 {
        let shape = self.shape();
        let mut worst = 0.0f64;
        for k in 0..self.dim() {
            let s = shape.strides[k];
            let c = shape.counts[k];
            for flat in 0..self.len() {
                let i = (flat / s) % c;
                if i == 0 || i + 1 == c {
                    continue;
                }
                let (a, b, d) = (self.values[flat - s], self.values[flat], self.values[flat + s]);
                if a.is_finite() && b.is_finite() && d.is_finite() {
                    worst = worst.max(-(a - 2.0 * b + d));
                }
            }
        }
        worst
    }
}

/// Row-major index arithmetic for a product of axes.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub dims: usize,
    pub counts: [usize; MAX_GRID_DIM],
    pub strides: [usize; MAX_GRID_DIM],
}

impl Shape {
    pub fn new(axes: &[Axis]) -> Self {
        Self::from_counts(&axes.iter().map(|a| a.count).collect::<Vec<_>>())
    }

    pub fn from_counts(counts_in: &[usize]) -> Self {
        let dims = counts_in.len();
        let mut counts = [1; MAX_GRID_DIM];
        let mut strides = [0; MAX_GRID_DIM];
        let mut s = 1;
        for k in (0..dims).rev() {
            counts[k] = counts_in[k];
            strides[k] = s;
            s *= counts_in[k];
        }
        Shape {
            dims,
            counts,
            strides,
        }
    }

    pub fn len(&self) -> usize {
        self.counts[..self.dims].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn index(&self, flat: usize, out: &mut [usize]) {
        for k in 0..self.dims {
            out[k] = (flat / self.strides[k]) % self.counts[k];
        }
    }

    pub fn coords(&self, axes: &[Axis], flat: usize, out: &mut Vector) {
        out.clear();
        for k in 0..self.dims {
            out.push(axes[k].node((flat / self.strides[k]) % self.counts[k]));
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    dim: usize,
    axes: Vec<Axis>,
    #[serde(with = "serde_f64::vec")]
    values: Vec<f64>,
    inf: String,
}

impl TryFrom<GridFile> for GridFunction {
    type Error = Error;

    fn try_from(f: GridFile) -> Result<Self> {
        if f.inf != INF_TOKEN {
            return Err(Error::invalid(format!(
                "unsupported infinity token \"{}\" (expected \"{INF_TOKEN}\")",
                f.inf
            )));
        }
        check_dim(f.dim, f.axes.len())?;
        GridFunction::new(f.axes, f.values)
    }
}

impl From<GridFunction> for GridFile {
    fn from(g: GridFunction) -> Self {
        GridFile {
            dim: g.axes.len(),
            axes: g.axes,
            values: g.values,
            inf: INF_TOKEN.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping_ties_go_down() {
        let a = Axis::new(0.0, 1.0, 11).unwrap();
        assert_eq!(a.snap(0.05), Some(0));
        assert_eq!(a.snap(0.051), Some(1));
        assert_eq!(a.snap(0.3), Some(3));
        assert_eq!(a.snap(-0.06), None);
        assert_eq!(a.snap(1.04), Some(10));
        assert_eq!(a.snap(1.06), None);
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(Axis::new(1.0, 1.0, 3).is_err());
        assert!(Axis::new(0.0, 1.0, 1).is_err());
        assert!(GridFunction::new(vec![Axis::new(0.0, 1.0, 3).unwrap()], vec![0.0; 2]).is_err());
    }

    #[test]
    fn properness_required() {
        let a = Axis::new(0.0, 1.0, 3).unwrap();
        let err = GridFunction::new(vec![a], vec![f64::INFINITY; 3]).unwrap_err();
        assert!(matches!(err, Error::Improper(_)));
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_linear_between() {
        let a = Axis::new(-1.0, 1.0, 5).unwrap();
        let g = GridFunction::from_fn(vec![a, a], |x| x[0] + 2.0 * x[1]).unwrap();
        assert_eq!(g.interpolate(&[0.5, -0.5]).unwrap().value(), -0.5);
        assert!((g.interpolate(&[0.3, 0.1]).unwrap().value() - 0.5).abs() < 1e-12);
        assert!(g.interpolate(&[1.5, 0.0]).unwrap().is_infinite());
    }

    #[test]
    fn json_schema() {
        let a = Axis::new(0.0, 1.0, 2).unwrap();
        let g = GridFunction::new(vec![a], vec![0.5, f64::INFINITY]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(
            s,
            r#"{"dim":1,"axes":[{"min":0.0,"max":1.0,"count":2}],"values":[0.5,"INF"],"inf":"INF"}"#
        );
        let back: GridFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn axis_spec_parsing() {
        let axes = parse_axes("-2,2,65; -1,1,3").unwrap();
        assert_eq!(axes.len(), 2);
        assert_eq!(axes[0].count, 65);
        assert!(parse_axes("0,1").is_err());
    }
}

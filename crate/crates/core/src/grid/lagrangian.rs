//! Lagrangians on `R^n × R^n` tabulated on a grid whose first `n` axes are
//! the state `x` and last `n` axes the costate `p`.

use serde::{Deserialize, Serialize};

use super::{discrete_conjugate, Axis, GridFunction, Shape, MAX_GRID_DIM};
use crate::error::{check_dim, Error, Result};
use crate::extended::ExtReal;
use crate::linalg::{dot, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLagrangian {
    state_dim: usize,
    grid: GridFunction,
    /// Provenance, e.g. the label of the graph a Fitzpatrick grid came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl GridLagrangian {
    pub fn new(state_dim: usize, grid: GridFunction) -> Result<Self> {
        if state_dim == 0 || 2 * state_dim > MAX_GRID_DIM {
            return Err(Error::invalid(format!(
                "grid Lagrangians support state dimension 1 or 2, got {state_dim}"
            )));
        }
        check_dim(2 * state_dim, grid.dim())?;
        Ok(GridLagrangian {
            state_dim,
            grid,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn from_fn(
        state_axes: &[Axis],
        costate_axes: &[Axis],
        mut f: impl FnMut(&[f64], &[f64]) -> f64,
    ) -> Result<Self> {
        check_dim(state_axes.len(), costate_axes.len())?;
        let n = state_axes.len();
        let axes: Vec<Axis> = state_axes.iter().chain(costate_axes).copied().collect();
        let grid = GridFunction::from_fn(axes, |z| f(&z[..n], &z[n..]))?;
        GridLagrangian::new(n, grid)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }

    pub fn into_grid(self) -> GridFunction {
        self.grid
    }

    pub fn state_axes(&self) -> &[Axis] {
        &self.grid.axes()[..self.state_dim]
    }

    pub fn costate_axes(&self) -> &[Axis] {
        &self.grid.axes()[self.state_dim..]
    }

    /// Number of costate nodes (the length of one `p`-slice).
    pub fn costate_len(&self) -> usize {
        self.costate_axes().iter().map(|a| a.count).product()
    }

    pub fn state_len(&self) -> usize {
        self.state_axes().iter().map(|a| a.count).product()
    }

    /// Multilinear interpolant of `L(x, p)`; `+∞` outside the grid.
    pub fn eval(&self, x: &[f64], p: &[f64]) -> Result<ExtReal> {
        check_dim(self.state_dim, x.len())?;
        check_dim(self.state_dim, p.len())?;
        let z: Vector = x.iter().chain(p).copied().collect();
        self.grid.interpolate(&z)
    }

    /// Splits node `flat` into `(x, p)`.
    pub fn node(&self, flat: usize) -> (Vector, Vector) {
        let z = self.grid.node(flat);
        (z[..self.state_dim].into(), z[self.state_dim..].into())
    }

    /// `C(L)(x, p) = max_{(y,q)} <p,y> + <x,q> - L(y,q)` on the same nodes.
    ///
    /// Requires the costate axes to be usable as dual state axes and vice
    /// versa, which holds when the box is the same in every coordinate or
    /// when state and costate axes are simply swapped.
    pub fn conjugate_transpose(&self) -> Result<GridLagrangian> {
        let n = self.state_dim;
        let dual: Vec<Axis> = self
            .costate_axes()
            .iter()
            .chain(self.state_axes())
            .copied()
            .collect();
        let g = discrete_conjugate(&self.grid, &dual)?;
        let xs = self.state_len();
        let ps = self.costate_len();
        let gv = g.values();
        let mut out = vec![0.0; gv.len()];
        // g is laid out as (p, x); the result is laid out as (x, p).
        for ix in 0..xs {
            for ip in 0..ps {
                out[ix * ps + ip] = gv[ip * xs + ix];
            }
        }
        let grid = GridFunction::new(self.grid.axes().to_vec(), out)?;
        Ok(GridLagrangian {
            state_dim: n,
            grid,
            label: self.label.clone(),
        })
    }

    /// Values `L(x, p)` for every costate node `p`, with `x` interpolated
    /// along the state axes (exact when `x` is a node).
    pub fn costate_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim, x.len())?;
        let ps = self.costate_len();
        let sub_axes = self.state_axes().to_vec();
        let shape = Shape::new(&sub_axes);
        let mut cell = [(0usize, 0.0f64); MAX_GRID_DIM];
        for k in 0..self.state_dim {
            match sub_axes[k].locate(x[k]) {
                Some(c) => cell[k] = c,
                None => return Ok(vec![f64::INFINITY; ps]),
            }
        }
        let mut out = vec![0.0f64; ps];
        let mut weights_used = false;
        for corner in 0..(1usize << self.state_dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..self.state_dim {
                let (i, t) = cell[k];
                let up = (corner >> k) & 1 == 1;
                w *= if up { t } else { 1.0 - t };
                flat += (i + up as usize) * shape.strides[k];
            }
            if w == 0.0 {
                continue;
            }
            let row = &self.grid.values()[flat * ps..(flat + 1) * ps];
            for (o, v) in out.iter_mut().zip(row) {
                *o = if v.is_finite() && o.is_finite() {
                    *o + w * v
                } else {
                    f64::INFINITY
                };
            }
            weights_used = true;
        }
        debug_assert!(weights_used);
        Ok(out)
    }

    /// Coordinates of every costate node, in slice order.
    pub fn costate_nodes(&self) -> Vec<Vector> {
        let axes = self.costate_axes().to_vec();
        let shape = Shape::new(&axes);
        let mut out = Vec::with_capacity(shape.len());
        let mut p = Vector::new();
        for flat in 0..shape.len() {
            shape.coords(&axes, flat, &mut p);
            out.push(p.clone());
        }
        out
    }

    /// True when the node lies in the inner half of every axis range.
    pub fn in_inner_half(&self, flat: usize) -> bool {
        let shape = self.grid.shape();
        let mut idx = [0usize; MAX_GRID_DIM];
        shape.index(flat, &mut idx);
        self.grid.axes().iter().enumerate().all(|(k, a)| {
            let c = 0.5 * (a.min + a.max);
            let half = 0.5 * (a.max - a.min);
            (a.node(idx[k]) - c).abs() <= 0.5 * half + 1e-12 * half
        })
    }

    /// `L(x,p) - <x,p>` at node `flat`.
    pub fn gap_at(&self, flat: usize) -> f64 {
        let (x, p) = self.node(flat);
        self.grid.values()[flat] - dot(&x, &p)
    }

    /// `max |C(L) - L|` over nodes (restricted to the inner half when
    /// requested); `+∞` when the finiteness patterns differ there.
    pub fn selfduality_residual(&self, inner_half_only: bool) -> Result<f64> {
        let c = self.conjugate_transpose()?;
        Ok(self.sup_distance(&c, inner_half_only))
    }

    /// `max |self - other|` over nodes, `+∞` on finiteness mismatch.
    pub fn sup_distance(&self, other: &GridLagrangian, inner_half_only: bool) -> f64 {
        let mut worst = 0.0f64;
        for (flat, (a, b)) in self.grid.values().iter().zip(other.grid.values()).enumerate() {
            if inner_half_only && !self.in_inner_half(flat) {
                continue;
            }
            let d = match (a.is_finite(), b.is_finite()) {
                (true, true) => (a - b).abs(),
                (false, false) => 0.0,
                _ => f64::INFINITY,
            };
            worst = worst.max(d);
        }
        worst
    }

    /// Grid spacing used by the grid tolerances.
    pub fn step(&self) -> f64 {
        self.grid.max_step()
    }

    pub fn has_symmetric_odd_axes(&self) -> bool {
        self.grid.axes().iter().all(Axis::is_symmetric)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_transpose_of_basic_quadratic() {
        // L(x,p) = x²/2 + p²/2 is selfdual; the grid version is close.
        let a = Axis::new(-2.0, 2.0, 41).unwrap();
        let l = GridLagrangian::from_fn(&[a], &[a], |x, p| 0.5 * x[0] * x[0] + 0.5 * p[0] * p[0]).unwrap();
        let r = l.selfduality_residual(true).unwrap();
        assert!(r < 0.5 * a.step() * a.step() + 1e-12, "residual {r}");
    }

    #[test]
    fn transpose_layout() {
        // L(x,p) = 0 only at (x,p) = (1,0); C(L)(x,p) = p*1 + x*0 = p.
        let a = Axis::new(-1.0, 1.0, 3).unwrap();
        let l = GridLagrangian::from_fn(&[a], &[a], |x, p| {
            if x[0] == 1.0 && p[0] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .unwrap();
        let c = l.conjugate_transpose().unwrap();
        for flat in 0..9 {
            let (x, p) = c.node(flat);
            assert_eq!(c.grid().values()[flat], p[0], "at x={x:?}");
        }
    }

    #[test]
    fn costate_slice_exact_at_nodes() {
        let a = Axis::new(-1.0, 1.0, 5).unwrap();
        let l = GridLagrangian::from_fn(&[a], &[a], |x, p| x[0] + 2.0 * p[0]).unwrap();
        let s = l.costate_slice(&[0.5]).unwrap();
        assert_eq!(s, vec![-1.5, -0.5, 0.5, 1.5, 2.5]);
        let s = l.costate_slice(&[0.25]).unwrap();
        assert!((s[2] - 0.25).abs() < 1e-15);
    }
}

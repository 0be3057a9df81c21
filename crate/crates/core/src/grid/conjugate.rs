//! Discrete Legendre–Fenchel transform.
//!
//! One-dimensional lines are transformed in linear time: build the lower
//! convex hull of the finite samples, then sweep the increasing dual nodes
//! with a monotone pointer. Multi-dimensional grids are transformed one axis
//! at a time.

use super::{Axis, GridFunction, Shape};
use crate::error::{Error, Result};

/// `out[j] = max_i ss[j]*xs[i] - f[i]` over the finite `f[i]`, or `-∞` when
/// every sample is infinite. `xs` and `ss` must be increasing.
pub fn conjugate_line(xs: &[f64], f: &[f64], ss: &[f64], out: &mut [f64], hull: &mut Vec<usize>) {
    debug_assert_eq!(xs.len(), f.len());
    debug_assert_eq!(ss.len(), out.len());
    hull.clear();
    for i in 0..xs.len() {
        if !f[i].is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (f[i] - f[a]) - (f[b] - f[a]) * (xs[i] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.is_empty() {
        out.fill(f64::NEG_INFINITY);
        return;
    }
    let mut k = 0;
    for (j, &s) in ss.iter().enumerate() {
        let mut cur = s * xs[hull[k]] - f[hull[k]];
        while k + 1 < hull.len() {
            let next = s * xs[hull[k + 1]] - f[hull[k + 1]];
            if next >= cur {
                k += 1;
                cur = next;
            } else {
                break;
            }
        }
        out[j] = cur;
    }
}

/// `f*(s) = max_x <s,x> - f(x)` over the grid nodes, evaluated on `dual`.
pub fn discrete_conjugate(f: &GridFunction, dual: &[Axis]) -> Result<GridFunction> {
    let d = f.dim();
    if dual.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: dual.len(),
        });
    }
    for a in dual {
        a.validate()?;
    }
    if f.finite_count() == 0 {
        return Err(Error::Improper("conjugate of an everywhere-infinite function".into()));
    }
    // w holds the partial supremum of <s,x> - f(x) over the axes done so far.
    let mut counts: Vec<usize> = f.axes().iter().map(|a| a.count).collect();
    let mut w: Vec<f64> = f.values().iter().map(|v| -v).collect();
    let mut line_in = Vec::new();
    let mut line_out = Vec::new();
    let mut hull = Vec::new();
    for k in 0..d {
        let xs = f.axes()[k].nodes();
        let ss = dual[k].nodes();
        let shape_in = Shape::from_counts(&counts);
        let mut counts_out = counts.clone();
        counts_out[k] = dual[k].count;
        let shape_out = Shape::from_counts(&counts_out);
        let outer: usize = counts[..k].iter().product();
        let inner: usize = counts[k + 1..].iter().product();
        let mut next = vec![0.0; shape_out.len()];
        line_in.resize(counts[k], 0.0);
        line_out.resize(dual[k].count, 0.0);
        for o in 0..outer {
            for i in 0..inner {
                let base_in = o * counts[k] * inner + i;
                for t in 0..counts[k] {
                    line_in[t] = -w[base_in + t * shape_in.strides[k]];
                }
                conjugate_line(&xs, &line_in, &ss, &mut line_out, &mut hull);
                let base_out = o * dual[k].count * inner + i;
                for t in 0..dual[k].count {
                    next[base_out + t * shape_out.strides[k]] = line_out[t];
                }
            }
        }
        w = next;
        counts = counts_out;
    }
    GridFunction::new(dual.to_vec(), w)
}

/// Dual axes wide enough to contain every finite slope of `f`: symmetric
/// about 0, spanning the largest difference quotient between consecutive
/// finite samples, with `4(count-1)+1` nodes.
pub fn default_dual_axes(f: &GridFunction) -> Vec<Axis> {
    let shape = f.shape();
    let vals = f.values();
    (0..f.dim())
        .map(|k| {
            let axis = f.axes()[k];
            let h = axis.step();
            let s = shape.strides[k];
            let c = shape.counts[k];
            let mut slope = 0.0f64;
            for start in 0..vals.len() {
                if (start / s) % c != 0 {
                    continue;
                }
                let mut prev: Option<usize> = None;
                for t in 0..c {
                    let v = vals[start + t * s];
                    if !v.is_finite() {
                        continue;
                    }
                    if let Some(p) = prev {
                        let dv = v - vals[start + p * s];
                        slope = slope.max((dv / ((t - p) as f64 * h)).abs());
                    }
                    prev = Some(t);
                }
            }
            let half = if slope > 0.0 { slope * (1.0 + 1e-9) } else { 1.0 };
            Axis {
                min: -half,
                max: half,
                count: 4 * (axis.count - 1) + 1,
            }
        })
        .collect()
}

/// Double conjugate back onto the original nodes, using [`default_dual_axes`].
pub fn biconjugate(f: &GridFunction) -> Result<GridFunction> {
    biconjugate_with(f, &default_dual_axes(f))
}

pub fn biconjugate_with(f: &GridFunction, dual: &[Axis]) -> Result<GridFunction> {
    let g = discrete_conjugate(f, dual)?;
    discrete_conjugate(&g, f.axes())
}

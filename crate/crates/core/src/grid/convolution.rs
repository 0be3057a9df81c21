//! Snapped grid inf-convolution and epi-average.
//!
//! Arguments such as `z - y` are snapped to the nearest node (ties toward
//! the lower node); terms whose argument leaves the grid are skipped.

use rayon::prelude::*;

use super::{Axis, GridFunction, Shape, MAX_GRID_DIM};
use crate::error::{Error, Result};

/// Upper bound on `nodes × nodes` pair evaluations for [`epi_average`].
pub const EPI_AVERAGE_WORK_LIMIT: f64 = 4e9;

const SKIP: usize = usize::MAX;

fn same_axes(a: &[Axis], b: &[Axis]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a != b {
        return Err(Error::invalid("grid functions must share the same axes"));
    }
    Ok(())
}

/// `table[i * c + j]` is the pre-multiplied offset of the node nearest to
/// `node(i) + sign * node(j)`, or `SKIP`.
fn offset_table(axis: &Axis, stride: usize, sign: f64) -> Vec<usize> {
    let c = axis.count;
    let mut t = vec![SKIP; c * c];
    for i in 0..c {
        for j in 0..c {
            if let Some(k) = axis.snap(axis.node(i) + sign * axis.node(j)) {
                t[i * c + j] = k * stride;
            }
        }
    }
    t
}

/// `(f □ g)(z) = min_y f(z - y) + g(y)` over grid nodes `y`.
pub fn inf_convolution(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    same_axes(f.axes(), g.axes())?;
    let shape = f.shape();
    let d = f.dim();
    let minus: Vec<Vec<usize>> = (0..d)
        .map(|k| offset_table(&f.axes()[k], shape.strides[k], -1.0))
        .collect();
    let support: Vec<usize> = (0..g.len()).filter(|&j| g.values()[j].is_finite()).collect();
    let fv = f.values();
    let gv = g.values();
    let values: Vec<f64> = (0..f.len())
        .into_par_iter()
        .map(|z| {
            let mut zi = [0usize; MAX_GRID_DIM];
            let mut yi = [0usize; MAX_GRID_DIM];
            shape.index(z, &mut zi);
            let mut best = f64::INFINITY;
            'y: for &y in &support {
                shape.index(y, &mut yi);
                let mut off = 0;
                for k in 0..d {
                    let o = minus[k][zi[k] * shape.counts[k] + yi[k]];
                    if o == SKIP {
                        continue 'y;
                    }
                    off += o;
                }
                let v = fv[off] + gv[y];
                if v < best {
                    best = v;
                }
            }
            best
        })
        .collect();
    GridFunction::new(f.axes().to_vec(), values)
        .map_err(|_| Error::Improper("inf-convolution is identically +inf on the grid".into()))
}

/// `A(z) = min_w ½M(z - w) + ½N(z + w)` over grid nodes `w`.
pub fn epi_average(m: &GridFunction, n: &GridFunction) -> Result<GridFunction> {
    same_axes(m.axes(), n.axes())?;
    let len = m.len() as f64;
    if len * len > EPI_AVERAGE_WORK_LIMIT {
        return Err(Error::SizeGuard(format!(
            "epi-average over {} nodes needs {:.2e} pair evaluations (limit {:.0e})",
            m.len(),
            len * len,
            EPI_AVERAGE_WORK_LIMIT
        )));
    }
    let shape = m.shape();
    let d = m.dim();
    let tables: Vec<(Vec<usize>, Vec<usize>)> = (0..d)
        .map(|k| {
            let a = &m.axes()[k];
            (
                offset_table(a, shape.strides[k], -1.0),
                offset_table(a, shape.strides[k], 1.0),
            )
        })
        .collect();
    let ctx = EpiCtx {
        shape,
        tables: &tables,
        m: m.values(),
        n: n.values(),
    };
    let values: Vec<f64> = (0..m.len())
        .into_par_iter()
        .map(|z| {
            let mut zi = [0usize; MAX_GRID_DIM];
            shape.index(z, &mut zi);
            let mut best = f64::INFINITY;
            ctx.descend(0, &zi, 0, 0, &mut best);
            best
        })
        .collect();
    GridFunction::new(m.axes().to_vec(), values)
        .map_err(|_| Error::Improper("epi-average is identically +inf on the grid".into()))
}

struct EpiCtx<'a> {
    shape: Shape,
    tables: &'a [(Vec<usize>, Vec<usize>)],
    m: &'a [f64],
    n: &'a [f64],
}

impl EpiCtx<'_> {
    fn descend(&self, k: usize, zi: &[usize], off_m: usize, off_n: usize, best: &mut f64) {
        let c = self.shape.counts[k];
        let row = zi[k] * c;
        let (minus, plus) = &self.tables[k];
        let last = k + 1 == self.shape.dims;
        for w in 0..c {
            let a = minus[row + w];
            let b = plus[row + w];
            if a == SKIP || b == SKIP {
                continue;
            }
            if last {
                let v = 0.5 * self.m[off_m + a] + 0.5 * self.n[off_n + b];
                if v < *best {
                    *best = v;
                }
            } else {
                self.descend(k + 1, zi, off_m + a, off_n + b, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inf_convolution_of_abs_and_half_square_is_huber() {
        let a = Axis::new(-2.0, 2.0, 81).unwrap();
        let f = GridFunction::from_fn(vec![a], |x| x[0].abs()).unwrap();
        let g = GridFunction::from_fn(vec![a], |x| 0.5 * x[0] * x[0]).unwrap();
        let h = inf_convolution(&f, &g).unwrap();
        for i in 0..a.count {
            let z = a.node(i);
            let huber = if z.abs() <= 1.0 { 0.5 * z * z } else { z.abs() - 0.5 };
            assert!((h.values()[i] - huber).abs() < 1e-9, "z={z}");
        }
    }

    #[test]
    fn epi_average_of_equal_convex_functions_is_identity() {
        let a = Axis::new(-1.0, 1.0, 21).unwrap();
        let f = GridFunction::from_fn(vec![a, a], |x| x[0] * x[0] + (x[1] - 0.2).abs()).unwrap();
        let avg = epi_average(&f, &f).unwrap();
        for (u, v) in f.values().iter().zip(avg.values()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn epi_average_is_below_the_average() {
        let a = Axis::new(-1.0, 1.0, 11).unwrap();
        let m = GridFunction::from_fn(vec![a], |x| (x[0] - 0.5).powi(2)).unwrap();
        let n = GridFunction::from_fn(vec![a], |x| (x[0] + 0.5).powi(2)).unwrap();
        let avg = epi_average(&m, &n).unwrap();
        for i in 0..a.count {
            assert!(avg.values()[i] <= 0.5 * (m.values()[i] + n.values()[i]) + 1e-15);
        }
    }

    #[test]
    fn mismatched_axes_are_rejected() {
        let a = Axis::new(-1.0, 1.0, 11).unwrap();
        let b = Axis::new(-1.0, 1.0, 13).unwrap();
        let f = GridFunction::from_fn(vec![a], |x| x[0]).unwrap();
        let g = GridFunction::from_fn(vec![b], |x| x[0]).unwrap();
        assert!(inf_convolution(&f, &g).is_err());
    }
}

//! Proximal maps, gradients and smoothness constants.

use nalgebra::{DMatrix, DVector};

use super::subgradient::project_l1_ball;
use super::{ConvexFunction, ConvexKind, NormKind};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, norm2, Vector};

impl ConvexFunction {
    /// `argmin_u f(u) + ‖u − x‖² / (2·step)`.
    pub fn prox(&self, x: &[f64], step: f64) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid(format!("prox step must be positive, got {step}")));
        }
        self.prox_raw(x, step)
    }

    /// Whether [`ConvexFunction::prox`] succeeds for this function.
    pub fn supports_prox(&self) -> bool {
        match &self.kind {
            ConvexKind::GridBacked(_) => false,
            ConvexKind::Sum(_) => self.split_sum().is_ok_and(|(_, rest)| match rest.as_slice() {
                [] => true,
                [g] => g.supports_prox(),
                _ => self.merged_box().is_some(),
            }),
            ConvexKind::Precomposed { inner, map, .. } => {
                linalg::is_identity_multiple(map).is_some_and(|a| a != 0.0) && inner.supports_prox()
            }
            ConvexKind::Envelope { inner, .. } => inner.supports_prox(),
            _ => true,
        }
    }

    fn prox_raw(&self, x: &[f64], t: f64) -> Result<Vector> {
        let n = self.dim;
        Ok(match &self.kind {
            ConvexKind::Quadratic { a, b, .. } => quad_prox(a, b, x, t)?,
            ConvexKind::Norm { weight, norm } => {
                let lam = weight * t;
                match norm {
                    NormKind::L2 => {
                        let r = norm2(x);
                        if r <= lam {
                            Vector::from_elem(0.0, n)
                        } else {
                            x.iter().map(|v| v * (1.0 - lam / r)).collect()
                        }
                    }
                    NormKind::L1 => x.iter().map(|v| v.signum() * (v.abs() - lam).max(0.0)).collect(),
                    // Moreau: prox_{λ‖·‖∞}(x) = x − Π_{λ·B₁}(x).
                    NormKind::Linf => {
                        let p = project_l1_ball(x, lam);
                        x.iter().zip(&p).map(|(a, b)| a - b).collect()
                    }
                }
            }
            ConvexKind::Ball { radius, norm } => match norm {
                NormKind::L2 => {
                    let r = norm2(x);
                    if r <= *radius {
                        x.into()
                    } else {
                        x.iter().map(|v| v * radius / r).collect()
                    }
                }
                NormKind::Linf => x.iter().map(|v| v.clamp(-radius, *radius)).collect(),
                NormKind::L1 => project_l1_ball(x, *radius),
            },
            ConvexKind::Indicator { bounds } => bounds.iter().zip(x).map(|(b, &v)| b.clamp(v)).collect(),
            // Moreau: prox_{tσ_B}(x) = x − t·Π_B(x/t).
            ConvexKind::SupportOfBox { bounds } => bounds
                .iter()
                .zip(x)
                .map(|(b, &v)| {
                    // Moreau: v − t·Π_B(v/t), branch-wise so the middle is exactly 0.
                    if v > t * b.hi {
                        v - t * b.hi
                    } else if v < t * b.lo {
                        v - t * b.lo
                    } else {
                        0.0
                    }
                })
                .collect(),
            ConvexKind::Linear { slope, .. } => x.iter().zip(slope).map(|(v, s)| v - t * s).collect(),
            ConvexKind::Huber { delta } => x
                .iter()
                .map(|&v| {
                    if v.abs() <= delta * (1.0 + t) {
                        v / (1.0 + t)
                    } else {
                        v - t * delta * v.signum()
                    }
                })
                .collect(),
            ConvexKind::Envelope { inner, param } => {
                let u = inner.prox_raw(x, param + t)?;
                let c = t / (param + t);
                x.iter().zip(&u).map(|(a, b)| a + c * (b - a)).collect()
            }
            ConvexKind::GridBacked(_) => {
                return Err(Error::UnsupportedProx("grid-backed function".into()));
            }
            ConvexKind::Sum(_) => self.sum_prox(x, t)?,
            ConvexKind::Precomposed { inner, shift, map } => {
                let alpha = linalg::is_identity_multiple(map)
                    .filter(|a| *a != 0.0)
                    .ok_or_else(|| Error::UnsupportedProx("precomposition with a non-scalar map".into()))?;
                // f(x) = g(αx + s): prox_{tf}(x) = (prox_{α²t g}(αx + s) − s)/α.
                let y: Vector = x.iter().zip(shift).map(|(v, s)| alpha * v + s).collect();
                let u = inner.prox_raw(&y, alpha * alpha * t)?;
                u.iter().zip(shift).map(|(v, s)| (v - s) / alpha).collect()
            }
        })
    }

    /// Splits a sum into its merged quadratic part `(A, b)` and the rest.
    fn split_sum(&self) -> Result<(Option<(DMatrix<f64>, Vec<f64>)>, Vec<&ConvexFunction>)> {
        let n = self.dim;
        let mut quad: Option<(DMatrix<f64>, Vec<f64>)> = None;
        let mut rest = Vec::new();
        for term in self.flat_terms() {
            let (a, b) = match &term.kind {
                ConvexKind::Quadratic { a, b, .. } => (a.clone(), b.clone()),
                ConvexKind::Linear { slope, .. } => (DMatrix::zeros(n, n), slope.clone()),
                _ => {
                    rest.push(term);
                    continue;
                }
            };
            quad = Some(match quad {
                None => (a, b),
                Some((qa, qb)) => (qa + a, qb.iter().zip(&b).map(|(u, v)| u + v).collect()),
            });
        }
        Ok((quad, rest))
    }

    /// Intersection of the box constraints among the non-quadratic terms,
    /// when every such term is a box indicator.
    fn merged_box(&self) -> Option<ConvexFunction> {
        let (_, rest) = self.split_sum().ok()?;
        let mut acc: Option<Vec<super::Interval>> = None;
        for t in rest {
            let b = t.box_domain()?;
            acc = Some(match acc {
                None => b,
                Some(a) => a.iter().zip(&b).map(|(u, v)| u.intersect(v)).collect::<Option<Vec<_>>>()?,
            });
        }
        ConvexFunction::indicator(acc?).ok()
    }

    fn sum_prox(&self, x: &[f64], t: f64) -> Result<Vector> {
        let (quad, rest) = self.split_sum()?;
        let g_owned;
        let g: Option<&ConvexFunction> = match rest.as_slice() {
            [] => None,
            [g] => Some(*g),
            _ => {
                g_owned = self
                    .merged_box()
                    .ok_or_else(|| Error::UnsupportedProx("sum of several non-quadratic terms".into()))?;
                Some(&g_owned)
            }
        };
        match (quad, g) {
            (Some((a, b)), None) => quad_prox(&a, &b, x, t),
            (None, Some(g)) => g.prox_raw(x, t),
            (Some((a, b)), Some(g)) => {
                let alpha = linalg::is_identity_multiple(&a)
                    .or_else(|| linalg::is_zero(&a).then_some(0.0))
                    .ok_or_else(|| Error::UnsupportedProx("non-scalar quadratic plus a non-quadratic term".into()))?;
                // g(u) + (α/2)‖u‖² + ⟨b,u⟩ + ‖u−x‖²/(2t) = g(u) + ‖u − v‖²/(2t') + const.
                let d = 1.0 + t * alpha;
                let v: Vector = x.iter().zip(&b).map(|(xi, bi)| (xi - t * bi) / d).collect();
                g.prox_raw(&v, t / d)
            }
            (None, None) => unreachable!("sums are nonempty"),
        }
    }

    /// `∇f(x)` when `f` is differentiable everywhere.
    pub fn gradient(&self, x: &[f64]) -> Option<Vector> {
        if x.len() != self.dim {
            return None;
        }
        match &self.kind {
            ConvexKind::Quadratic { a, b, .. } => {
                let g = linalg::matvec(a, x);
                Some(g.iter().zip(b).map(|(u, v)| u + v).collect())
            }
            ConvexKind::Linear { slope, .. } => Some(slope.iter().copied().collect()),
            ConvexKind::Huber { delta } => Some(x.iter().map(|v| v.clamp(-delta, *delta)).collect()),
            ConvexKind::Envelope { inner, param } => {
                let u = inner.prox_raw(x, *param).ok()?;
                Some(x.iter().zip(&u).map(|(a, b)| (a - b) / param).collect())
            }
            ConvexKind::Sum(ts) => {
                let mut acc = Vector::from_elem(0.0, self.dim);
                for t in ts {
                    let g = t.gradient(x)?;
                    for (a, v) in acc.iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                Some(acc)
            }
            ConvexKind::Precomposed { inner, shift, map } => {
                let mut y = linalg::matvec(map, x);
                for (v, s) in y.iter_mut().zip(shift) {
                    *v += s;
                }
                let g = inner.gradient(&y)?;
                Some(linalg::matvec_t(map, &g))
            }
            _ => None,
        }
    }

    /// Lipschitz constant of `∇f` when `f` is smooth.
    pub fn smoothness(&self) -> Option<f64> {
        match &self.kind {
            ConvexKind::Quadratic { a, .. } => Some(linalg::max_eigenvalue(a).max(0.0)),
            ConvexKind::Linear { .. } => Some(0.0),
            ConvexKind::Huber { .. } => Some(1.0),
            ConvexKind::Envelope { param, .. } => Some(1.0 / param),
            ConvexKind::Sum(ts) => ts.iter().map(Self::smoothness).sum(),
            ConvexKind::Precomposed { inner, map, .. } => {
                let s = linalg::spectral_norm(map);
                inner.smoothness().map(|l| l * s * s)
            }
            _ => None,
        }
    }
}

fn quad_prox(a: &DMatrix<f64>, b: &[f64], x: &[f64], t: f64) -> Result<Vector> {
    let n = b.len();
    if let Some(alpha) = linalg::is_identity_multiple(a).or_else(|| linalg::is_zero(a).then_some(0.0)) {
        let d = 1.0 + t * alpha;
        return Ok(x.iter().zip(b).map(|(xi, bi)| (xi - t * bi) / d).collect());
    }
    let m = DMatrix::identity(n, n) + a * t;
    let rhs = DVector::from_iterator(n, x.iter().zip(b).map(|(xi, bi)| xi - t * bi));
    let sol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical {
            detail: "I + tA is not positive definite".into(),
            node: x.to_vec(),
        })?
        .solve(&rhs);
    Ok(sol.iter().copied().collect())
}

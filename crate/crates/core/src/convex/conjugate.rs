//! Closed-form Legendre conjugates, with an optional grid fallback.

use nalgebra::DMatrix;

use super::{ConvexFunction, ConvexKind, Interval, NormKind};
use crate::error::{Error, Result};
use crate::grid::{discrete_conjugate, Axis, GridFunction};
use crate::linalg::{self, dot};

/// Primal sampling axes and dual output axes used when no closed-form
/// conjugate exists.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFallback {
    pub primal: Vec<Axis>,
    pub dual: Vec<Axis>,
}

/// Quadratic-plus-linear part of a sum, merged.
struct QuadPart {
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: f64,
}

impl ConvexFunction {
    /// Closed-form conjugate; errors with `UnsupportedConjugate` when the
    /// kind has none.
    pub fn conjugate(&self) -> Result<ConvexFunction> {
        self.conjugate_with(None)
    }

    /// Closed-form conjugate, or the discrete conjugate on `fallback` when
    /// no closed form applies.
    pub fn conjugate_with(&self, fallback: Option<&GridFallback>) -> Result<ConvexFunction> {
        match self.closed_conjugate() {
            Ok(f) => Ok(f),
            Err(Error::UnsupportedConjugate(msg)) => match fallback {
                Some(fb) => self.grid_conjugate(fb),
                None => match &self.kind {
                    ConvexKind::GridBacked(g) => {
                        let dual = crate::grid::default_dual_axes(g);
                        Ok(ConvexFunction::grid_backed(discrete_conjugate(g, &dual)?))
                    }
                    _ => Err(Error::UnsupportedConjugate(msg)),
                },
            },
            Err(e) => Err(e),
        }
    }

    fn grid_conjugate(&self, fb: &GridFallback) -> Result<ConvexFunction> {
        if fb.primal.len() != self.dim || fb.dual.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: fb.primal.len(),
            });
        }
        let samples = GridFunction::from_fn(fb.primal.clone(), |x| self.eval_raw(x))?;
        Ok(ConvexFunction::grid_backed(discrete_conjugate(&samples, &fb.dual)?))
    }

    fn closed_conjugate(&self) -> Result<ConvexFunction> {
        let n = self.dim;
        match &self.kind {
            ConvexKind::Quadratic { a, b, c } => quadratic_conjugate(a, b, *c),
            ConvexKind::Norm { weight, norm } => {
                if n == 1 || *norm == NormKind::L1 {
                    ConvexFunction::indicator_cube(n, -weight, *weight)
                } else {
                    ConvexFunction::ball(n, *weight, norm.dual())
                }
            }
            ConvexKind::Ball { radius, norm } => ConvexFunction::norm_or_zero(n, *radius, norm.dual()),
            ConvexKind::Indicator { bounds } => {
                if bounds.iter().all(Interval::is_point) {
                    ConvexFunction::linear(bounds.iter().map(|b| b.lo).collect(), 0.0)
                } else {
                    ConvexFunction::support_of_box(bounds.clone())
                }
            }
            ConvexKind::SupportOfBox { bounds } => ConvexFunction::indicator(bounds.clone()),
            ConvexKind::Linear { slope, offset } => {
                let ind = ConvexFunction::indicator_point(slope)?;
                with_constant(ind, -offset)
            }
            ConvexKind::Huber { delta } => ConvexFunction::sum(vec![
                ConvexFunction::half_square(n),
                ConvexFunction::indicator_cube(n, -delta, *delta)?,
            ]),
            ConvexKind::Envelope { inner, param } => {
                ConvexFunction::sum(vec![inner.closed_conjugate()?, ConvexFunction::scaled_square(n, *param)?])
            }
            ConvexKind::GridBacked(_) => Err(Error::UnsupportedConjugate("grid-backed function".into())),
            ConvexKind::Sum(_) => self.sum_conjugate(),
            ConvexKind::Precomposed { inner, shift, map } => {
                if !map.is_square() {
                    return Err(Error::UnsupportedConjugate("non-square precomposition".into()));
                }
                let inv = map
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::UnsupportedConjugate("singular precomposition".into()))?;
                // (g∘(M·+s))*(p) = g*(M⁻ᵀp) − ⟨M⁻¹s, p⟩.
                let g_star = inner.closed_conjugate()?;
                let zero = vec![0.0; n];
                let base = ConvexFunction::precomposed(g_star, zero, inv.transpose())?;
                if shift.iter().all(|v| *v == 0.0) {
                    return Ok(base);
                }
                let v: Vec<f64> = linalg::matvec(&inv, shift).iter().map(|t| -t).collect();
                ConvexFunction::sum(vec![base, ConvexFunction::linear(v, 0.0)?])
            }
        }
    }

    fn norm_or_zero(n: usize, weight: f64, norm: NormKind) -> Result<ConvexFunction> {
        if weight == 0.0 {
            Ok(ConvexFunction::zero(n))
        } else {
            ConvexFunction::norm(n, weight, norm)
        }
    }

    fn sum_conjugate(&self) -> Result<ConvexFunction> {
        let n = self.dim;
        let mut quad: Option<QuadPart> = None;
        let mut rest: Vec<&ConvexFunction> = Vec::new();
        for t in self.flat_terms() {
            let (a, b, c) = match &t.kind {
                ConvexKind::Quadratic { a, b, c } => (a.clone(), b.clone(), *c),
                ConvexKind::Linear { slope, offset } => (DMatrix::zeros(n, n), slope.clone(), *offset),
                _ => {
                    rest.push(t);
                    continue;
                }
            };
            quad = Some(match quad {
                None => QuadPart { a, b, c },
                Some(q) => QuadPart {
                    a: q.a + a,
                    b: q.b.iter().zip(&b).map(|(u, v)| u + v).collect(),
                    c: q.c + c,
                },
            });
        }

        if rest.len() >= 2 {
            let boxes: Option<Vec<Vec<Interval>>> = rest.iter().map(|t| t.box_domain()).collect();
            let Some(boxes) = boxes else {
                return Err(Error::UnsupportedConjugate("sum of several non-quadratic terms".into()));
            };
            let mut acc = boxes[0].clone();
            for b in &boxes[1..] {
                acc = acc
                    .iter()
                    .zip(b)
                    .map(|(u, v)| u.intersect(v))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::Improper("sum of indicators has empty domain".into()))?;
            }
            let ind = ConvexFunction::indicator(acc)?;
            let mut terms = vec![ind];
            if let Some(q) = quad {
                terms.push(q.into_function()?);
            }
            return ConvexFunction::sum(terms)?.closed_conjugate();
        }

        let Some(q) = quad else {
            return rest[0].closed_conjugate();
        };
        let Some(g) = rest.first().copied() else {
            return q.into_function()?.closed_conjugate();
        };

        if linalg::is_zero(&q.a) {
            // (g + ⟨s,·⟩ + c)*(p) = g*(p − s) − c.
            let g_star = g.closed_conjugate()?;
            let f = if q.b.iter().all(|v| *v == 0.0) {
                g_star
            } else {
                g_star.shifted(q.b.iter().map(|v| -v).collect())?
            };
            return with_constant(f, -q.c);
        }

        let Some(a) = linalg::is_identity_multiple(&q.a) else {
            return Err(Error::UnsupportedConjugate(
                "sum of a non-scalar quadratic and a non-quadratic term".into(),
            ));
        };
        if a <= 0.0 {
            return Err(Error::UnsupportedConjugate("degenerate quadratic part".into()));
        }

        // Quadratic plus symmetric cube with a = 1, b = 0: Huber.
        if a == 1.0 && q.b.iter().all(|v| *v == 0.0) {
            if let Some(bounds) = g.box_domain() {
                let d = bounds[0].hi;
                if d > 0.0 && d.is_finite() && bounds.iter().all(|b| b.lo == -d && b.hi == d) {
                    return with_constant(ConvexFunction::huber(n, d)?, -q.c);
                }
            }
        }

        // (g + (a/2)‖·‖² + ⟨b,·⟩ + c)*(p) = env_{a}(g*)(p − b) − c, where
        // env_a(h) is the Moreau envelope of h with parameter a.
        let env = ConvexFunction::envelope(g.closed_conjugate()?, a)?;
        let f = if q.b.iter().all(|v| *v == 0.0) {
            env
        } else {
            env.shifted(q.b.iter().map(|v| -v).collect())?
        };
        with_constant(f, -q.c)
    }
}

impl QuadPart {
    fn into_function(self) -> Result<ConvexFunction> {
        if linalg::is_zero(&self.a) {
            ConvexFunction::linear(self.b, self.c)
        } else {
            ConvexFunction::quadratic(self.a, self.b, self.c)
        }
    }
}

fn quadratic_conjugate(a: &DMatrix<f64>, b: &[f64], c: f64) -> Result<ConvexFunction> {
    if linalg::is_zero(a) {
        let ind = ConvexFunction::indicator_point(b)?;
        return with_constant(ind, -c);
    }
    let n = b.len();
    let max_eig = linalg::max_eigenvalue(a);
    let min_eig = linalg::min_eigenvalue(a);
    if min_eig <= 1e-12 * max_eig.max(1.0) {
        return Err(Error::UnsupportedConjugate(format!(
            "quadratic with singular matrix (minimum eigenvalue {min_eig:e})"
        )));
    }
    let inv = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::UnsupportedConjugate("quadratic matrix not positive definite".into()))?
        .inverse();
    let inv = (&inv + inv.transpose()) * 0.5;
    let ib = linalg::matvec(&inv, b);
    let shift: Vec<f64> = ib.iter().map(|v| 0.0 - v).collect();
    let cst = 0.5 * dot(b, &ib) - c;
    debug_assert_eq!(shift.len(), n);
    ConvexFunction::quadratic(inv, shift, cst)
}

/// `f + k`, folding the constant into `f` where possible.
fn with_constant(f: ConvexFunction, k: f64) -> Result<ConvexFunction> {
    if k == 0.0 {
        return Ok(f);
    }
    let n = f.dim;
    match f.kind {
        ConvexKind::Quadratic { a, b, c } => ConvexFunction::quadratic(a, b, c + k),
        ConvexKind::Linear { slope, offset } => ConvexFunction::linear(slope, offset + k),
        kind => ConvexFunction::sum(vec![ConvexFunction { dim: n, kind }, ConvexFunction::linear(vec![0.0; n], k)?]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(f: &ConvexFunction, g: &ConvexFunction, pts: &[Vec<f64>], tol: f64) {
        for x in pts {
            let (u, v) = (f.eval_raw(x), g.eval_raw(x));
            if u.is_infinite() || v.is_infinite() {
                assert_eq!(u, v, "at {x:?}");
            } else {
                assert!((u - v).abs() <= tol, "at {x:?}: {u} vs {v}");
            }
        }
    }

    fn line(lo: f64, hi: f64, k: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (k - 1) as f64])
            .collect()
    }

    #[test]
    fn half_square_is_self_conjugate() {
        let f = ConvexFunction::half_square(1);
        assert_eq!(f.conjugate().unwrap(), f);
    }

    #[test]
    fn square_conjugate_matches_brute_force() {
        let f = ConvexFunction::scaled_square(1, 2.0).unwrap();
        let g = f.conjugate().unwrap();
        for p in [-3.0, -0.5, 0.0, 1.0, 4.0] {
            let brute = (0..=20000)
                .map(|i| {
                    let x = -10.0 + 1e-3 * i as f64;
                    p * x - x * x
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let v = g.evaluate(&[p]).unwrap().value();
            assert!((v - p * p / 4.0).abs() < 1e-12);
            assert!((v - brute).abs() < 1e-6);
        }
    }

    #[test]
    fn point_indicator_conjugate_is_zero() {
        let f = ConvexFunction::indicator_point(&[0.0]).unwrap();
        assert_eq!(f.conjugate().unwrap(), ConvexFunction::linear(vec![0.0], 0.0).unwrap());
    }

    #[test]
    fn singular_quadratic_unsupported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = ConvexFunction::quadratic(a, vec![0.0; 2], 0.0).unwrap();
        assert!(matches!(f.conjugate(), Err(Error::UnsupportedConjugate(_))));
        let fb = GridFallback {
            primal: vec![Axis::new(-2.0, 2.0, 41).unwrap(); 2],
            dual: vec![Axis::new(-1.0, 1.0, 21).unwrap(); 2],
        };
        let g = f.conjugate_with(Some(&fb)).unwrap();
        assert!(g.is_grid_backed());
        // f*(p) = ½p₁² on {p₂ = 0}; the grid version is finite but grows with |p₂|.
        assert!((g.evaluate(&[0.5, 0.0]).unwrap().value() - 0.125).abs() < 1e-2);
        assert!(g.evaluate(&[0.0, 0.5]).unwrap().value() >= 0.99);
    }

    #[test]
    fn huber_and_its_conjugate_are_involutive() {
        let h = ConvexFunction::huber(1, 1.0).unwrap();
        let hs = h.conjugate().unwrap();
        let pts = line(-3.0, 3.0, 61);
        close(&hs.conjugate().unwrap(), &h, &pts, 1e-12);
        assert!(hs.evaluate(&[1.5]).unwrap().is_infinite());
        assert_eq!(hs.evaluate(&[0.5]).unwrap().value(), 0.125);
    }

    #[test]
    fn quadratic_plus_box_uses_envelope() {
        let f = ConvexFunction::sum(vec![
            ConvexFunction::scaled_square(1, 2.0).unwrap(),
            ConvexFunction::linear(vec![0.5], 0.25).unwrap(),
            ConvexFunction::indicator_cube(1, -1.0, 0.5).unwrap(),
        ])
        .unwrap();
        let g = f.conjugate().unwrap();
        for p in line(-4.0, 4.0, 33) {
            let brute = (0..=15000)
                .map(|i| {
                    let x = -1.0 + 1e-4 * i as f64;
                    p[0] * x - f.eval_raw(&[x])
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((g.eval_raw(&p) - brute).abs() < 1e-6, "p = {p:?}");
        }
    }

    #[test]
    fn norms_and_balls() {
        let l2 = ConvexFunction::norm(2, 2.0, NormKind::L2).unwrap();
        assert_eq!(l2.conjugate().unwrap(), ConvexFunction::ball(2, 2.0, NormKind::L2).unwrap());
        let linf = ConvexFunction::norm(2, 1.0, NormKind::Linf).unwrap();
        let c = linf.conjugate().unwrap();
        assert_eq!(c, ConvexFunction::ball(2, 1.0, NormKind::L1).unwrap());
        assert_eq!(c.conjugate().unwrap(), linf);
        let l1 = ConvexFunction::norm(2, 1.0, NormKind::L1).unwrap();
        assert_eq!(l1.conjugate().unwrap(), ConvexFunction::indicator_cube(2, -1.0, 1.0).unwrap());
    }

    #[test]
    fn precomposed_conjugate() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let f = ConvexFunction::precomposed(ConvexFunction::half_square(2), vec![1.0, -1.0], m).unwrap();
        let g = f.conjugate().unwrap();
        // Fenchel–Young equality at p = ∇f(x).
        for x in [[0.3, -0.2], [1.0, 2.0], [-1.5, 0.5]] {
            let y = [2.0 * x[0] + x[1] + 1.0, x[1] - 1.0];
            let p = [2.0 * y[0], y[0] + y[1]];
            let lhs = f.eval_raw(&x) + g.eval_raw(&p);
            assert!((lhs - dot(&x, &p)).abs() < 1e-9);
        }
    }
}

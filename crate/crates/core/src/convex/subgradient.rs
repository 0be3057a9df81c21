//! Subdifferentials as explicit convex sets.

use nalgebra::DMatrix;

use super::{slack, ConvexFunction, ConvexKind, Interval, NormKind};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, norm2, Vector};

/// A closed convex subset of `R^n` describing `∂f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SubgradientSet {
    Empty,
    /// Product of intervals; a point is a degenerate box.
    Boxed(Vec<Interval>),
    /// `{v : ‖v − center‖ ≤ radius}`.
    Ball {
        center: Vec<f64>,
        radius: f64,
        norm: NormKind,
    },
    /// `{λ·direction : λ ≥ 0}`.
    Ray { direction: Vec<f64> },
    /// `weight · conv{signs[i]·e_i : signs[i] ≠ 0}`.
    Face { weight: f64, signs: Vec<i8> },
    /// Normal cone of the unit ℓ1 ball at a boundary point with the given
    /// sign pattern: `{λv : λ ≥ 0, v_i = s_i if s_i ≠ 0, |v_i| ≤ 1 else}`.
    L1NormalCone { signs: Vec<i8> },
    /// Minkowski sum.
    Sum(Vec<SubgradientSet>),
    /// `{mapᵀ·v : v ∈ inner}`.
    Image {
        map: DMatrix<f64>,
        inner: Box<SubgradientSet>,
    },
}

const SUM_SWEEPS: usize = 400;

impl SubgradientSet {
    pub fn point(v: &[f64]) -> Self {
        SubgradientSet::Boxed(v.iter().map(|&t| Interval::point(t)).collect())
    }

    pub fn is_empty(&self) -> bool {
        match self {
            SubgradientSet::Empty => true,
            SubgradientSet::Sum(ts) => ts.iter().any(Self::is_empty),
            SubgradientSet::Image { inner, .. } => inner.is_empty(),
            _ => false,
        }
    }

    /// The single element, when the set is a point.
    pub fn as_point(&self) -> Option<Vec<f64>> {
        match self {
            SubgradientSet::Boxed(b) if b.iter().all(Interval::is_point) => Some(b.iter().map(|i| i.lo).collect()),
            _ => None,
        }
    }

    /// An element of minimal (or near-minimal) norm.
    pub fn representative(&self) -> Option<Vector> {
        match self {
            SubgradientSet::Empty => None,
            SubgradientSet::Boxed(b) => Some(b.iter().map(|i| i.clamp(0.0)).collect()),
            SubgradientSet::Ball { center, radius, norm } => {
                Some(project_ball(&center.iter().map(|c| -c).collect::<Vector>(), *radius, *norm)
                    .iter()
                    .zip(center)
                    .map(|(d, c)| d + c)
                    .collect())
            }
            SubgradientSet::Ray { direction } => Some(Vector::from_elem(0.0, direction.len())),
            SubgradientSet::L1NormalCone { signs } => Some(Vector::from_elem(0.0, signs.len())),
            SubgradientSet::Face { weight, signs } => {
                let m = signs.iter().filter(|s| **s != 0).count().max(1) as f64;
                Some(signs.iter().map(|&s| weight * s as f64 / m).collect())
            }
            SubgradientSet::Sum(ts) => {
                let mut acc: Option<Vector> = None;
                for t in ts {
                    let r = t.representative()?;
                    acc = Some(match acc {
                        None => r,
                        Some(a) => a.iter().zip(&r).map(|(u, v)| u + v).collect(),
                    });
                }
                acc
            }
            SubgradientSet::Image { map, inner } => inner.representative().map(|v| linalg::matvec_t(map, &v)),
        }
    }

    /// Euclidean projection of `p`; `None` for the empty set.
    pub fn project(&self, p: &[f64]) -> Result<Option<Vector>> {
        Ok(Some(match self {
            SubgradientSet::Empty => return Ok(None),
            SubgradientSet::Boxed(b) => {
                check_dim(b.len(), p.len())?;
                b.iter().zip(p).map(|(i, &t)| i.clamp(t)).collect()
            }
            SubgradientSet::Ball { center, radius, norm } => {
                check_dim(center.len(), p.len())?;
                let d: Vector = p.iter().zip(center).map(|(a, c)| a - c).collect();
                project_ball(&d, *radius, *norm)
                    .iter()
                    .zip(center)
                    .map(|(v, c)| v + c)
                    .collect()
            }
            SubgradientSet::Ray { direction } => {
                check_dim(direction.len(), p.len())?;
                let dd = dot(direction, direction);
                let lam = if dd > 0.0 { (dot(p, direction) / dd).max(0.0) } else { 0.0 };
                direction.iter().map(|d| lam * d).collect()
            }
            SubgradientSet::Face { weight, signs } => {
                check_dim(signs.len(), p.len())?;
                project_face(p, *weight, signs)
            }
            SubgradientSet::L1NormalCone { signs } => {
                check_dim(signs.len(), p.len())?;
                project_l1_cone(p, signs)
            }
            SubgradientSet::Sum(ts) => match project_sum(ts, p)? {
                Some(v) => v,
                None => return Ok(None),
            },
            SubgradientSet::Image { .. } => {
                return Err(Error::UnsupportedConjugate(
                    "projection onto a linear image of a subdifferential".into(),
                ))
            }
        }))
    }

    /// Euclidean distance from `p` to the set (`+∞` when empty).
    pub fn distance(&self, p: &[f64]) -> Result<f64> {
        if let SubgradientSet::Image { map, inner } = self {
            if inner.is_empty() {
                return Ok(f64::INFINITY);
            }
            let inv = map
                .clone()
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::invalid("membership test for a singular linear image"))?;
            let v = linalg::matvec(&inv, p);
            // ‖Mᵀ(v − w)‖ ≤ ‖M‖·‖v − w‖ bounds the distance from above.
            return Ok(linalg::spectral_norm(map) * inner.distance(&v)?);
        }
        Ok(match self.project(p)? {
            None => f64::INFINITY,
            Some(q) => linalg::dist2(p, &q),
        })
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance(p)? <= tol)
    }

    /// One-dimensional sets as an interval.
    pub fn as_interval(&self) -> Option<Interval> {
        match self {
            SubgradientSet::Boxed(b) if b.len() == 1 => Some(b[0]),
            SubgradientSet::Ball { center, radius, .. } if center.len() == 1 => Some(Interval {
                lo: center[0] - radius,
                hi: center[0] + radius,
            }),
            _ => None,
        }
    }

    fn minkowski(sets: Vec<SubgradientSet>) -> SubgradientSet {
        if sets.iter().any(SubgradientSet::is_empty) {
            return SubgradientSet::Empty;
        }
        let mut boxed: Option<Vec<Interval>> = None;
        let mut others = Vec::new();
        for s in sets {
            match s {
                SubgradientSet::Boxed(b) => {
                    boxed = Some(match boxed {
                        None => b,
                        Some(a) => a
                            .iter()
                            .zip(&b)
                            .map(|(u, v)| Interval {
                                lo: u.lo + v.lo,
                                hi: u.hi + v.hi,
                            })
                            .collect(),
                    })
                }
                SubgradientSet::Sum(inner) => others.extend(inner),
                other => others.push(other),
            }
        }
        match (boxed, others.len()) {
            (Some(b), 0) => SubgradientSet::Boxed(b),
            (None, 1) => others.pop().unwrap(),
            (Some(b), 1) if b.iter().all(Interval::is_point) => {
                let v: Vec<f64> = b.iter().map(|i| i.lo).collect();
                translate(others.pop().unwrap(), &v)
            }
            (b, _) => {
                if let Some(b) = b {
                    others.insert(0, SubgradientSet::Boxed(b));
                }
                SubgradientSet::Sum(others)
            }
        }
    }
}

/// `set + v`, kept in closed form when possible.
fn translate(set: SubgradientSet, v: &[f64]) -> SubgradientSet {
    match set {
        SubgradientSet::Ball { center, radius, norm } => SubgradientSet::Ball {
            center: center.iter().zip(v).map(|(c, t)| c + t).collect(),
            radius,
            norm,
        },
        other => SubgradientSet::Sum(vec![SubgradientSet::point(v), other]),
    }
}

fn project_ball(d: &[f64], r: f64, norm: NormKind) -> Vector {
    match norm {
        NormKind::L2 => {
            let n = norm2(d);
            if n <= r {
                d.into()
            } else {
                d.iter().map(|v| v * r / n).collect()
            }
        }
        NormKind::Linf => d.iter().map(|v| v.clamp(-r, r)).collect(),
        NormKind::L1 => project_l1_ball(d, r),
    }
}

/// Projection onto `{‖v‖₁ ≤ r}` by sorting.
pub(crate) fn project_l1_ball(d: &[f64], r: f64) -> Vector {
    if d.iter().map(|v| v.abs()).sum::<f64>() <= r {
        return d.into();
    }
    let mut u: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - r) / (k + 1) as f64;
        if uk > t {
            theta = t;
        }
    }
    d.iter().map(|v| v.signum() * (v.abs() - theta).max(0.0)).collect()
}

/// Projection onto `{u ≥ 0, Σu = w}` along the signed support.
fn project_face(p: &[f64], w: f64, signs: &[i8]) -> Vector {
    let idx: Vec<usize> = (0..p.len()).filter(|&i| signs[i] != 0).collect();
    let y: Vec<f64> = idx.iter().map(|&i| p[i] * signs[i] as f64).collect();
    let mut s = y.clone();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &sk) in s.iter().enumerate() {
        cum += sk;
        let t = (cum - w) / (k + 1) as f64;
        if sk > t {
            theta = t;
        }
    }
    let mut out = Vector::from_elem(0.0, p.len());
    for (j, &i) in idx.iter().enumerate() {
        out[i] = (y[j] - theta).max(0.0) * signs[i] as f64;
    }
    out
}

fn project_l1_cone(p: &[f64], signs: &[i8]) -> Vector {
    // For fixed λ the projection onto λ·B is a clamp; minimize over λ ≥ 0.
    let at = |lam: f64| -> (f64, Vector) {
        let v: Vector = p
            .iter()
            .zip(signs)
            .map(|(&t, &s)| if s != 0 { lam * s as f64 } else { t.clamp(-lam, lam) })
            .collect();
        (linalg::dist2(p, &v), v)
    };
    let hi = 2.0 * p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let (mut a, mut b) = (0.0, hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if at(c).0 <= at(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    at(0.5 * (a + b)).1
}

/// Projection onto a Minkowski sum by block-coordinate descent on the
/// decomposition `p ≈ Σ v_k`.
fn project_sum(ts: &[SubgradientSet], p: &[f64]) -> Result<Option<Vector>> {
    if ts.iter().any(SubgradientSet::is_empty) {
        return Ok(None);
    }
    let mut parts: Vec<Vector> = Vec::with_capacity(ts.len());
    for t in ts {
        match t.representative() {
            Some(r) => parts.push(r),
            None => return Ok(None),
        }
    }
    let n = p.len();
    for _ in 0..SUM_SWEEPS {
        let mut moved = 0.0f64;
        for k in 0..ts.len() {
            let mut target: Vector = p.into();
            for (j, v) in parts.iter().enumerate() {
                if j != k {
                    for i in 0..n {
                        target[i] -= v[i];
                    }
                }
            }
            let q = ts[k].project(&target)?.expect("nonempty");
            moved = moved.max(linalg::dist2(&q, &parts[k]));
            parts[k] = q;
        }
        if moved < 1e-15 {
            break;
        }
    }
    let mut sum = Vector::from_elem(0.0, n);
    for v in &parts {
        for i in 0..n {
            sum[i] += v[i];
        }
    }
    Ok(Some(sum))
}

impl ConvexFunction {
    /// `∂f(x)`; empty outside the effective domain.
    pub fn subgradient_interval(&self, x: &[f64]) -> Result<SubgradientSet> {
        check_dim(self.dim, x.len())?;
        self.subgradient_raw(x)
    }

    pub(crate) fn subgradient_raw(&self, x: &[f64]) -> Result<SubgradientSet> {
        let n = self.dim;
        if self.eval_raw(x) == f64::INFINITY {
            return Ok(SubgradientSet::Empty);
        }
        Ok(match &self.kind {
            ConvexKind::Quadratic { a, b, .. } => {
                let g = linalg::matvec(a, x);
                SubgradientSet::point(&g.iter().zip(b).map(|(u, v)| u + v).collect::<Vec<_>>())
            }
            ConvexKind::Norm { weight, norm } => norm_subgradient(x, *weight, *norm),
            ConvexKind::Ball { radius, norm } => ball_normal_cone(x, *radius, *norm),
            ConvexKind::Indicator { bounds } => SubgradientSet::Boxed(
                bounds
                    .iter()
                    .zip(x)
                    .map(|(b, &t)| {
                        let at_lo = (t - b.lo).abs() <= slack(b.lo);
                        let at_hi = (t - b.hi).abs() <= slack(b.hi);
                        Interval {
                            lo: if at_lo { f64::NEG_INFINITY } else { 0.0 },
                            hi: if at_hi { f64::INFINITY } else { 0.0 },
                        }
                    })
                    .collect(),
            ),
            ConvexKind::SupportOfBox { bounds } => SubgradientSet::Boxed(
                bounds
                    .iter()
                    .zip(x)
                    .map(|(b, &t)| {
                        if t > 0.0 {
                            Interval::point(b.hi)
                        } else if t < 0.0 {
                            Interval::point(b.lo)
                        } else {
                            *b
                        }
                    })
                    .collect(),
            ),
            ConvexKind::Linear { slope, .. } => SubgradientSet::point(slope),
            ConvexKind::Huber { delta } => {
                SubgradientSet::point(&x.iter().map(|t| t.clamp(-delta, *delta)).collect::<Vec<_>>())
            }
            ConvexKind::Envelope { inner, param } => {
                let u = inner.prox(x, *param)?;
                SubgradientSet::point(&x.iter().zip(&u).map(|(a, b)| (a - b) / param).collect::<Vec<_>>())
            }
            ConvexKind::GridBacked(g) => {
                let mut out = Vec::with_capacity(n);
                for k in 0..n {
                    let h = g.axes()[k].step();
                    let mut lo_pt: Vector = x.into();
                    let mut hi_pt: Vector = x.into();
                    lo_pt[k] -= h;
                    hi_pt[k] += h;
                    let f0 = g.interpolate_raw(x);
                    let fl = g.interpolate_raw(&lo_pt);
                    let fh = g.interpolate_raw(&hi_pt);
                    let lo = if fl.is_finite() { (f0 - fl) / h } else { f64::NEG_INFINITY };
                    let hi = if fh.is_finite() { (fh - f0) / h } else { f64::INFINITY };
                    out.push(Interval {
                        lo: lo.min(hi),
                        hi: hi.max(lo),
                    });
                }
                SubgradientSet::Boxed(out)
            }
            ConvexKind::Sum(ts) => {
                let sets = ts.iter().map(|t| t.subgradient_raw(x)).collect::<Result<Vec<_>>>()?;
                SubgradientSet::minkowski(sets)
            }
            ConvexKind::Precomposed { inner, shift, map } => {
                let mut y = linalg::matvec(map, x);
                for (v, s) in y.iter_mut().zip(shift) {
                    *v += s;
                }
                let inner_set = inner.subgradient_raw(&y)?;
                if let Some(v) = inner_set.as_point() {
                    SubgradientSet::point(&linalg::matvec_t(map, &v))
                } else if let (Some(alpha), SubgradientSet::Boxed(b)) =
                    (linalg::is_identity_multiple(map), &inner_set)
                {
                    SubgradientSet::Boxed(b.iter().map(|i| scale_interval(*i, alpha)).collect())
                } else {
                    SubgradientSet::Image {
                        map: map.clone(),
                        inner: Box::new(inner_set),
                    }
                }
            }
        })
    }
}

fn scale_interval(i: Interval, a: f64) -> Interval {
    let (u, v) = (i.lo * a, i.hi * a);
    let fix = |t: f64| if t.is_nan() { 0.0 } else { t };
    Interval {
        lo: fix(u.min(v)),
        hi: fix(u.max(v)),
    }
}

fn norm_subgradient(x: &[f64], w: f64, norm: NormKind) -> SubgradientSet {
    let n = x.len();
    match norm {
        NormKind::L2 => {
            let r = norm2(x);
            if r == 0.0 {
                SubgradientSet::Ball {
                    center: vec![0.0; n],
                    radius: w,
                    norm: NormKind::L2,
                }
            } else {
                SubgradientSet::point(&x.iter().map(|v| w * v / r).collect::<Vec<_>>())
            }
        }
        NormKind::L1 => SubgradientSet::Boxed(
            x.iter()
                .map(|&t| {
                    if t > 0.0 {
                        Interval::point(w)
                    } else if t < 0.0 {
                        Interval::point(-w)
                    } else {
                        Interval { lo: -w, hi: w }
                    }
                })
                .collect(),
        ),
        NormKind::Linf => {
            let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m == 0.0 {
                SubgradientSet::Ball {
                    center: vec![0.0; n],
                    radius: w,
                    norm: NormKind::L1,
                }
            } else {
                let signs = x
                    .iter()
                    .map(|&t| if t.abs() >= m * (1.0 - 1e-12) { t.signum() as i8 } else { 0 })
                    .collect();
                SubgradientSet::Face { weight: w, signs }
            }
        }
    }
}

fn ball_normal_cone(x: &[f64], r: f64, norm: NormKind) -> SubgradientSet {
    let n = x.len();
    match norm {
        NormKind::Linf => SubgradientSet::Boxed(
            x.iter()
                .map(|&t| Interval {
                    lo: if t <= -r + slack(r) { f64::NEG_INFINITY } else { 0.0 },
                    hi: if t >= r - slack(r) { f64::INFINITY } else { 0.0 },
                })
                .collect(),
        ),
        NormKind::L2 => {
            let m = norm2(x);
            if m < r - slack(r) {
                SubgradientSet::point(&vec![0.0; n])
            } else if r == 0.0 {
                SubgradientSet::Boxed(vec![Interval::all(); n])
            } else {
                SubgradientSet::Ray {
                    direction: x.iter().map(|v| v / m).collect(),
                }
            }
        }
        NormKind::L1 => {
            let m: f64 = x.iter().map(|v| v.abs()).sum();
            if m < r - slack(r) {
                SubgradientSet::point(&vec![0.0; n])
            } else if r == 0.0 {
                SubgradientSet::Boxed(vec![Interval::all(); n])
            } else {
                SubgradientSet::L1NormalCone {
                    signs: x.iter().map(|&t| if t == 0.0 { 0 } else { t.signum() as i8 }).collect(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        let abs = ConvexFunction::norm(1, 1.0, NormKind::L2).unwrap();
        assert_eq!(abs.subgradient_interval(&[0.0]).unwrap().as_interval(), Some(Interval { lo: -1.0, hi: 1.0 }));
        let q = ConvexFunction::half_square(1);
        assert_eq!(q.subgradient_interval(&[3.0]).unwrap().as_point(), Some(vec![3.0]));
        let ind = ConvexFunction::indicator_cube(1, 0.0, 1.0).unwrap();
        assert_eq!(
            ind.subgradient_interval(&[1.0]).unwrap().as_interval(),
            Some(Interval { lo: 0.0, hi: f64::INFINITY })
        );
        assert!(ind.subgradient_interval(&[2.0]).unwrap().is_empty());
    }

    #[test]
    fn l1_ball_projection() {
        let v = project_l1_ball(&[3.0, -1.0, 0.5], 2.0);
        assert!((v.iter().map(|t| t.abs()).sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((v[0] - 2.0).abs() < 1e-12 && v[1] == 0.0 && v[2] == 0.0);
    }

    #[test]
    fn linf_face_membership() {
        let f = ConvexFunction::norm(2, 1.0, NormKind::Linf).unwrap();
        let s = f.subgradient_interval(&[1.0, 1.0]).unwrap();
        assert!(s.contains(&[0.3, 0.7], 1e-12).unwrap());
        assert!(!s.contains(&[0.3, 0.3], 1e-6).unwrap());
        assert!(!s.contains(&[-0.3, 1.3], 1e-6).unwrap());
    }

    #[test]
    fn sum_membership() {
        // |x| + ι_{[0,1]} at 0: [−1,1] + (−∞,0] = (−∞,1].
        let f = ConvexFunction::sum(vec![
            ConvexFunction::norm(1, 1.0, NormKind::L1).unwrap(),
            ConvexFunction::indicator_cube(1, 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let s = f.subgradient_interval(&[0.0]).unwrap();
        assert!(s.contains(&[-5.0], 1e-12).unwrap());
        assert!(s.contains(&[1.0], 1e-12).unwrap());
        assert!(!s.contains(&[1.1], 1e-6).unwrap());
    }

    #[test]
    fn l1_ball_normal_cone() {
        let f = ConvexFunction::ball(2, 1.0, NormKind::L1).unwrap();
        let s = f.subgradient_interval(&[1.0, 0.0]).unwrap();
        assert!(s.contains(&[2.0, 1.0], 1e-9).unwrap());
        assert!(s.contains(&[2.0, -2.0], 1e-9).unwrap());
        assert!(!s.contains(&[1.0, 2.0], 1e-3).unwrap());
    }
}

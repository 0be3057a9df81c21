//! Lagrangians on phase space `R^n × R^n`.
//!
//! Closed forms keep their conjugates in closed form, so `L*(p, x)` is
//! exact; grid forms use node-restricted suprema.

mod field;
mod io;

pub use field::{Candidate, FieldLabel, GapTol, PhaseBox, ResidualReport, VectorFieldSample};

use nalgebra::DMatrix;

use crate::convex::ConvexFunction;
use crate::error::{check_dim, Error, Result};
use crate::extended::ExtReal;
use crate::grid::GridLagrangian;
use crate::linalg::{self, dot, SkewDecomposition, Vector, PSD_FLOOR, SKEW_TOL};

/// Which constructor produced a Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Basic,
    Skew,
    Nonneg,
    Translated,
    InfConvolved,
    Resolvent,
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    dim: usize,
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// `φ(x) + φ*(p)`.
    Basic { phi: ConvexFunction, phi_star: ConvexFunction },
    /// `φ(x) + φ*(p − Γx)` with `Γ` skew.
    Skew {
        phi: ConvexFunction,
        phi_star: ConvexFunction,
        gamma: SkewDecomposition,
    },
    /// `ψ(x) + ψ*(p − Γ^as x)` with `ψ = ½⟨Γx,x⟩ + φ`.
    Nonneg {
        phi: ConvexFunction,
        gamma: SkewDecomposition,
        psi: ConvexFunction,
        psi_star: ConvexFunction,
    },
    /// `L(x, p0 + q) − ⟨x, p0⟩`.
    Translated { base: Box<Lagrangian>, p0: Vec<f64> },
    /// `inf_r L(x, p − r) + φ(x) + φ*(r)`.
    InfConvolved(InfConv),
    /// Inf-convolution with `φ = ½‖·‖²`.
    Resolvent { base: Box<Lagrangian>, inner: InfConv },
    Grid(GridLagrangian),
}

#[derive(Debug, Clone, PartialEq)]
struct InfConv {
    base: Box<Lagrangian>,
    phi: ConvexFunction,
    phi_star: ConvexFunction,
    /// Equivalent closed form, when the base admits one.
    normal: Option<Box<Lagrangian>>,
}

impl Lagrangian {
    /// `L(x,p) = φ(x) + φ*(p)`.
    pub fn make_basic(phi: ConvexFunction) -> Result<Self> {
        let phi_star = phi.conjugate()?;
        Ok(Lagrangian {
            dim: phi.dim(),
            repr: Repr::Basic { phi, phi_star },
        })
    }

    /// `L(x,p) = φ(x) + φ*(p − Γx)` for skew-symmetric `Γ`.
    pub fn make_skew(phi: ConvexFunction, gamma: DMatrix<f64>) -> Result<Self> {
        let gamma = SkewDecomposition::new(gamma)?;
        check_dim(phi.dim(), gamma.dim())?;
        let defect = (gamma.gamma() + gamma.gamma().transpose())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if defect >= SKEW_TOL {
            return Err(Error::invalid(format!(
                "Γ is not skew-symmetric (‖Γ+Γᵀ‖∞ = {defect:e}); use make_nonneg"
            )));
        }
        let phi_star = phi.conjugate()?;
        Ok(Lagrangian {
            dim: phi.dim(),
            repr: Repr::Skew { phi, phi_star, gamma },
        })
    }

    /// `M(x,p) = ψ(x) + ψ*(p − Γ^as x)` with `ψ(x) = ½⟨Γx,x⟩ + φ(x)`, for
    /// `Γ` with positive semidefinite symmetric part.
    pub fn make_nonneg(phi: ConvexFunction, gamma: DMatrix<f64>) -> Result<Self> {
        let gamma = SkewDecomposition::new(gamma)?;
        let n = phi.dim();
        check_dim(n, gamma.dim())?;
        let min_eig = gamma.min_sym_eigenvalue();
        if min_eig < PSD_FLOOR {
            return Err(Error::invalid(format!(
                "symmetric part of Γ is indefinite (minimum eigenvalue {min_eig:e})"
            )));
        }
        let psi = if linalg::is_zero(gamma.sym()) {
            phi.clone()
        } else {
            let q = ConvexFunction::quadratic(gamma.sym().clone(), vec![0.0; n], 0.0)?;
            ConvexFunction::sum(vec![q, phi.clone()])?
        };
        let psi_star = psi.conjugate()?;
        Ok(Lagrangian {
            dim: n,
            repr: Repr::Nonneg {
                phi,
                gamma,
                psi,
                psi_star,
            },
        })
    }

    /// `M(x,q) = L(x, p0 + q) − ⟨x, p0⟩`.
    pub fn translate(self, p0: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, p0.len())?;
        if p0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Lagrangian {
            dim: self.dim,
            repr: Repr::Translated {
                base: Box::new(self),
                p0,
            },
        })
    }

    /// `M(x,p) = inf_r L(x, p − r) + φ(x) + φ*(r)` for `φ` finite on the
    /// working box.
    pub fn inf_conv_lagrangian(self, phi: ConvexFunction) -> Result<Self> {
        let dim = self.dim;
        let inner = InfConv::new(self, phi)?;
        Ok(Lagrangian {
            dim,
            repr: Repr::InfConvolved(inner),
        })
    }

    /// `M(x,p) = inf_r L(x, p − r) + ½‖x‖² + ½‖r‖²`.
    pub fn resolvent(self) -> Result<Self> {
        let dim = self.dim;
        let inner = InfConv::new(self.clone(), ConvexFunction::half_square(dim))?;
        Ok(Lagrangian {
            dim,
            repr: Repr::Resolvent {
                base: Box::new(self),
                inner,
            },
        })
    }

    pub fn from_grid(grid: GridLagrangian) -> Self {
        Lagrangian {
            dim: grid.state_dim(),
            repr: Repr::Grid(grid),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> FormKind {
        match &self.repr {
            Repr::Basic { .. } => FormKind::Basic,
            Repr::Skew { .. } => FormKind::Skew,
            Repr::Nonneg { .. } => FormKind::Nonneg,
            Repr::Translated { .. } => FormKind::Translated,
            Repr::InfConvolved(_) => FormKind::InfConvolved,
            Repr::Resolvent { .. } => FormKind::Resolvent,
            Repr::Grid(_) => FormKind::Grid,
        }
    }

    /// The grid table, for grid forms.
    pub fn as_grid(&self) -> Option<&GridLagrangian> {
        match &self.repr {
            Repr::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// The grid underneath a chain of translations and inf-convolutions.
    pub fn underlying_grid(&self) -> Option<&GridLagrangian> {
        match &self.repr {
            Repr::Grid(g) => Some(g),
            Repr::Translated { base, .. } => base.underlying_grid(),
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => ic.base.underlying_grid(),
            _ => None,
        }
    }

    /// True when no grid is involved anywhere.
    pub fn is_closed_form(&self) -> bool {
        self.underlying_grid().is_none() && !self.uses_grid_functions()
    }

    fn uses_grid_functions(&self) -> bool {
        match &self.repr {
            Repr::Basic { phi, phi_star } | Repr::Skew { phi, phi_star, .. } => {
                phi.is_grid_backed() || phi_star.is_grid_backed()
            }
            Repr::Nonneg { psi, psi_star, .. } => psi.is_grid_backed() || psi_star.is_grid_backed(),
            Repr::Translated { base, .. } => base.uses_grid_functions(),
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => {
                ic.base.uses_grid_functions() || ic.phi.is_grid_backed()
            }
            Repr::Grid(_) => true,
        }
    }

    /// For `make_skew`/`make_nonneg`: the matrix `Γ`.
    pub fn gamma(&self) -> Option<&SkewDecomposition> {
        match &self.repr {
            Repr::Skew { gamma, .. } | Repr::Nonneg { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    /// The convex function handed to the constructor (`φ`).
    pub fn phi(&self) -> Option<&ConvexFunction> {
        match &self.repr {
            Repr::Basic { phi, .. } | Repr::Skew { phi, .. } | Repr::Nonneg { phi, .. } => Some(phi),
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => Some(&ic.phi),
            _ => None,
        }
    }

    /// Base Lagrangian of derived forms.
    pub fn base(&self) -> Option<&Lagrangian> {
        match &self.repr {
            Repr::Translated { base, .. } | Repr::Resolvent { base, .. } => Some(base),
            Repr::InfConvolved(ic) => Some(&ic.base),
            _ => None,
        }
    }

    /// Splits closed forms `L(x,p) = ψ(x) + ψ*(p − Ax)` into `(ψ, ψ*, A)`
    /// (with `A = None` for zero), following translations and
    /// inf-convolutions through their closed normalization. Translations
    /// are returned separately as the accumulated `p0`.
    pub(crate) fn smooth_split(&self) -> Option<(&ConvexFunction, &ConvexFunction, Option<&DMatrix<f64>>, Vector)> {
        match &self.repr {
            Repr::Basic { phi, phi_star } => Some((phi, phi_star, None, Vector::from_elem(0.0, self.dim))),
            Repr::Skew { phi, phi_star, gamma } => {
                let a = (!linalg::is_zero(gamma.gamma())).then_some(gamma.gamma());
                Some((phi, phi_star, a, Vector::from_elem(0.0, self.dim)))
            }
            Repr::Nonneg { psi, psi_star, gamma, .. } => {
                let a = (!linalg::is_zero(gamma.antisym())).then_some(gamma.antisym());
                Some((psi, psi_star, a, Vector::from_elem(0.0, self.dim)))
            }
            Repr::Translated { base, p0 } => {
                let (f, fs, a, shift) = base.smooth_split()?;
                Some((f, fs, a, shift.iter().zip(p0).map(|(s, p)| s + p).collect()))
            }
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => ic.normal.as_ref()?.smooth_split(),
            Repr::Grid(_) => None,
        }
    }

    /// `L(x, p)`.
    pub fn eval(&self, x: &[f64], p: &[f64]) -> Result<ExtReal> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, p.len())?;
        ExtReal::new(self.eval_raw(x, p))
    }

    pub(crate) fn eval_raw(&self, x: &[f64], p: &[f64]) -> f64 {
        match &self.repr {
            Repr::Basic { phi, phi_star } => add(phi.eval_raw(x), || phi_star.eval_raw(p)),
            Repr::Skew { phi, phi_star, gamma } => add(phi.eval_raw(x), || {
                phi_star.eval_raw(&minus_matvec(p, gamma.gamma(), x))
            }),
            Repr::Nonneg {
                psi, psi_star, gamma, ..
            } => add(psi.eval_raw(x), || psi_star.eval_raw(&minus_matvec(p, gamma.antisym(), x))),
            Repr::Translated { base, p0 } => {
                let q: Vector = p.iter().zip(p0).map(|(a, b)| a + b).collect();
                let v = base.eval_raw(x, &q);
                if v.is_finite() {
                    v - dot(x, p0)
                } else {
                    v
                }
            }
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => ic.eval_raw(x, p),
            Repr::Grid(g) => {
                let z: Vector = x.iter().chain(p).copied().collect();
                g.grid().interpolate_raw(&z)
            }
        }
    }

    /// `L*(p, x) = sup_{(y,q)} ⟨p,y⟩ + ⟨x,q⟩ − L(y,q)`.
    pub fn conjugate_both(&self, p: &[f64], x: &[f64]) -> Result<ExtReal> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, p.len())?;
        let v = self.conj_raw(p, x);
        if v == f64::NEG_INFINITY {
            return Err(Error::Improper("conjugate of an everywhere-infinite Lagrangian".into()));
        }
        ExtReal::new(v)
    }

    /// `L*(a, b)` with `a` paired against the state and `b` against the costate.
    pub(crate) fn conj_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.repr {
            Repr::Basic { phi, phi_star } => add(phi_star.eval_raw(a), || phi.eval_raw(b)),
            Repr::Skew { phi, phi_star, gamma } => add(phi.eval_raw(b), || {
                phi_star.eval_raw(&plus_matvec_t(a, gamma.gamma(), b))
            }),
            Repr::Nonneg {
                psi, psi_star, gamma, ..
            } => add(psi.eval_raw(b), || psi_star.eval_raw(&plus_matvec_t(a, gamma.antisym(), b))),
            Repr::Translated { base, p0 } => {
                let a2: Vector = a.iter().zip(p0).map(|(u, v)| u + v).collect();
                let v = base.conj_raw(&a2, b);
                if v.is_finite() {
                    v - dot(b, p0)
                } else {
                    v
                }
            }
            Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => ic.conj_raw(a, b),
            Repr::Grid(g) => grid_conj(g, a, b, |_| 0.0),
        }
    }

    /// `L(x,p) − ⟨x,p⟩` (`+∞` outside the domain).
    pub fn gap(&self, x: &[f64], p: &[f64]) -> Result<ExtReal> {
        let v = self.eval(x, p)?;
        Ok(v.minus(dot(x, p)))
    }

    pub(crate) fn gap_raw(&self, x: &[f64], p: &[f64]) -> f64 {
        let v = self.eval_raw(x, p);
        if v.is_finite() {
            v - dot(x, p)
        } else {
            v
        }
    }

    /// Grid spacing of the underlying grid, if any.
    pub fn grid_step(&self) -> Option<f64> {
        self.underlying_grid().map(GridLagrangian::step)
    }
}

fn add(a: f64, b: impl FnOnce() -> f64) -> f64 {
    if a == f64::INFINITY {
        a
    } else {
        a + b()
    }
}

/// `p − M·x`.
fn minus_matvec(p: &[f64], m: &DMatrix<f64>, x: &[f64]) -> Vector {
    let mx = linalg::matvec(m, x);
    p.iter().zip(&mx).map(|(a, b)| a - b).collect()
}

/// `a + Mᵀ·b`.
fn plus_matvec_t(a: &[f64], m: &DMatrix<f64>, b: &[f64]) -> Vector {
    let mb = linalg::matvec_t(m, b);
    a.iter().zip(&mb).map(|(u, v)| u + v).collect()
}

/// `max over nodes (y,s) of ⟨a,y⟩ + ⟨b,s⟩ − L(y,s) − extra(y)`.
fn grid_conj(g: &GridLagrangian, a: &[f64], b: &[f64], extra: impl Fn(&[f64]) -> f64) -> f64 {
    let n = g.state_dim();
    let grid = g.grid();
    let shape = grid.shape();
    let axes = grid.axes();
    let ps = g.costate_len();
    let mut best = f64::NEG_INFINITY;
    let mut z = Vector::new();
    let costate: Vec<Vector> = g.costate_nodes();
    let bq: Vec<f64> = costate.iter().map(|s| dot(b, s)).collect();
    for ix in 0..g.state_len() {
        shape.coords(axes, ix * ps, &mut z);
        let y = &z[..n];
        let e = extra(y);
        if !e.is_finite() {
            continue;
        }
        let ay = dot(a, y) - e;
        let row = &grid.values()[ix * ps..(ix + 1) * ps];
        for (j, v) in row.iter().enumerate() {
            if v.is_finite() {
                let c = ay + bq[j] - v;
                if c > best {
                    best = c;
                }
            }
        }
    }
    best
}

impl InfConv {
    fn new(base: Lagrangian, phi: ConvexFunction) -> Result<Self> {
        check_dim(base.dim, phi.dim())?;
        let phi_star = phi.conjugate()?;
        let normal = normalize_inf_conv(&base, &phi)?.map(Box::new);
        Ok(InfConv {
            base: Box::new(base),
            phi,
            phi_star,
            normal,
        })
    }

    fn eval_raw(&self, x: &[f64], p: &[f64]) -> f64 {
        if let Some(m) = &self.normal {
            return m.eval_raw(x, p);
        }
        let fx = self.phi.eval_raw(x);
        if fx == f64::INFINITY {
            return fx;
        }
        // Minimize over r = p − q with q ranging over the base's costate
        // nodes, where the base is exact in q.
        match self.base.underlying_grid() {
            Some(g) => {
                let mut best = f64::INFINITY;
                for q in g.costate_nodes() {
                    let l = self.base.eval_raw(x, &q);
                    if !l.is_finite() {
                        continue;
                    }
                    let r: Vector = p.iter().zip(&q).map(|(a, b)| a - b).collect();
                    let v = l + self.phi_star.eval_raw(&r);
                    if v < best {
                        best = v;
                    }
                }
                fx + best
            }
            None => f64::INFINITY,
        }
    }

    fn conj_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        if let Some(m) = &self.normal {
            return m.conj_raw(a, b);
        }
        // M*(a,b) = φ(b) + sup_{(y,s)} ⟨a,y⟩ + ⟨b,s⟩ − L(y,s) − φ(y).
        let fb = self.phi.eval_raw(b);
        if fb == f64::INFINITY {
            return fb;
        }
        match &self.base.repr {
            Repr::Grid(g) => fb + grid_conj(g, a, b, |y| self.phi.eval_raw(y)),
            _ => f64::INFINITY,
        }
    }
}

/// Closed form of `inf_r L(x, p − r) + φ(x) + φ*(r)` when one exists.
fn normalize_inf_conv(base: &Lagrangian, phi: &ConvexFunction) -> Result<Option<Lagrangian>> {
    let plus = |f: &ConvexFunction| ConvexFunction::sum(vec![f.clone(), phi.clone()]);
    let out = match &base.repr {
        Repr::Basic { phi: psi, .. } => Some(Lagrangian::make_basic(plus(psi)?)?),
        Repr::Skew { phi: psi, gamma, .. } => Some(Lagrangian::make_skew(plus(psi)?, gamma.gamma().clone())?),
        Repr::Nonneg { phi: psi, gamma, .. } => Some(Lagrangian::make_nonneg(plus(psi)?, gamma.gamma().clone())?),
        Repr::Translated { base: inner, p0 } => {
            let ic = Lagrangian::inf_conv_lagrangian((**inner).clone(), phi.clone())?;
            if ic.underlying_grid().is_some() {
                None
            } else {
                Some(ic.translate(p0.clone())?)
            }
        }
        Repr::InfConvolved(ic) | Repr::Resolvent { inner: ic, .. } => {
            if ic.normal.is_some() {
                Some(Lagrangian::inf_conv_lagrangian((*ic.base).clone(), plus(&ic.phi)?)?)
            } else {
                None
            }
        }
        Repr::Grid(_) => None,
    };
    Ok(out)
}

//! Symmetrization of a sub-selfdual Lagrangian into a selfdual one.
//!
//! Starting from `M₀ = L` and `N₀ = C(L)` (the conjugate, transposed), the
//! pair is driven together by
//!
//! ```text
//! M' = epi-average(M, N),   N' = ½(M + N)
//! ```
//!
//! while keeping `M₀ ≤ M ≤ M' ≤ N' ≤ N ≤ N₀`. On a grid the epi-average of
//! `M` and `N` coincides with `C(N')` away from the boundary, and the
//! conjugate is what 4-d grids use: the pairwise epi-average is quadratic in
//! the node count.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitzpatrick::{above_pairing_check_by, subselfdual_check_by};
use crate::grid::{epi_average, Axis, GridFunction, GridLagrangian};
use crate::lagrangian::{GapTol, Lagrangian, PhaseBox};
use crate::linalg::norm2;

/// Slack on the order relations checked every iteration, on top of `3h`.
pub const SANDWICH_TOL: f64 = 1e-9;

/// Largest number of probe points per state axis used for `dbar_agreement`.
const PROBES_PER_AXIS: usize = 9;

/// How `M'` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpiRoute {
    /// Pairwise epi-average on the grid.
    Direct,
    /// `M' = C(N')`, with `M₀` replaced by `C(N₀)`.
    Conjugate,
    /// `Direct` for 1-d states, `Conjugate` otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone)]
pub struct SymmetrizationState {
    pub m: GridLagrangian,
    pub n: GridLagrangian,
    pub m0: Arc<GridLagrangian>,
    pub n0: Arc<GridLagrangian>,
    pub iteration: usize,
    /// `max |N − M|` over nodes.
    pub residual: f64,
    /// `max |C(M) − N|` over inner-half nodes.
    pub conjugacy_defect: f64,
    pub history: Vec<f64>,
    route: EpiRoute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfdualizeReport {
    pub converged: bool,
    pub iterations: usize,
    pub route: EpiRoute,
    /// Residual after each iteration, starting with the initial pair.
    #[serde(with = "crate::extended::serde_f64::vec")]
    pub residuals: Vec<f64>,
    #[serde(with = "crate::extended::serde_f64")]
    pub final_residual: f64,
    #[serde(with = "crate::extended::serde_f64")]
    pub conjugacy_defect: f64,
    /// `max |C(N) − N|` over inner-half nodes.
    #[serde(with = "crate::extended::serde_f64")]
    pub selfduality_residual_of_output: f64,
    /// Largest distance between the zero-gap sets of `M₀` and `N` over the
    /// probe states (minimizer distance where a set is empty).
    #[serde(with = "crate::extended::serde_f64")]
    pub dbar_agreement: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SelfdualizeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub route: EpiRoute,
}

impl Default for SelfdualizeOptions {
    fn default() -> Self {
        SelfdualizeOptions {
            tol: 1e-4,
            max_iter: 50,
            route: EpiRoute::Auto,
        }
    }
}

fn sandwich_tol(h: f64) -> f64 {
    SANDWICH_TOL + 3.0 * h
}

/// Tabulates `l` (or takes its grid), checks `L*(p,x) ≥ L(x,p) ≥ ⟨x,p⟩` at
/// every node and builds `(M₀, N₀)`.
pub fn init_pair(l: &Lagrangian, axes: Option<&[Axis]>, route: EpiRoute) -> Result<SymmetrizationState> {
    let m0 = tabulate(l, axes)?;
    if !m0.has_symmetric_odd_axes() {
        return Err(Error::invalid(
            "symmetrization needs axes symmetric about 0 with an odd node count",
        ));
    }
    let n = m0.state_dim();
    let h = m0.step();
    let route = match route {
        EpiRoute::Auto if n == 1 => EpiRoute::Direct,
        EpiRoute::Auto => EpiRoute::Conjugate,
        r => r,
    };
    let lm0 = Lagrangian::from_grid(m0.clone());
    let bx = PhaseBox::from_axes(m0.grid().axes())?;
    let tol = |x: &[f64], p: &[f64]| SANDWICH_TOL + 3.0 * h * (1.0 + norm2(x) + norm2(p));
    let sub = subselfdual_check_by(&lm0, &bx, tol)?;
    if !sub.ok {
        return Err(hypothesis("L*(p,x) >= L(x,p)", sub.min_margin, sub.worst));
    }
    let above = above_pairing_check_by(&lm0, &bx, tol)?;
    if !above.ok {
        return Err(hypothesis("L(x,p) >= <x,p>", above.min_margin, above.worst));
    }
    let n0 = m0.conjugate_transpose()?;
    let m0 = match route {
        EpiRoute::Conjugate => n0.conjugate_transpose()?,
        _ => m0,
    };
    let residual = m0.sup_distance(&n0, false);
    let conjugacy_defect = n0.sup_distance(&m0.conjugate_transpose()?, true);
    Ok(SymmetrizationState {
        m: m0.clone(),
        n: n0.clone(),
        m0: Arc::new(m0),
        n0: Arc::new(n0),
        iteration: 0,
        residual,
        conjugacy_defect,
        history: vec![residual],
        route,
    })
}

fn hypothesis(what: &str, margin: f64, worst: Option<(crate::Vector, crate::Vector)>) -> Error {
    Error::Hypothesis {
        detail: format!("{what} fails with margin {margin:e}"),
        node: worst.map(|(x, p)| x.iter().chain(&p).copied().collect()),
    }
}

fn tabulate(l: &Lagrangian, axes: Option<&[Axis]>) -> Result<GridLagrangian> {
    if let Some(g) = l.as_grid() {
        if let Some(a) = axes {
            if a != g.grid().axes() {
                return Err(Error::invalid("axes differ from the grid Lagrangian's own axes"));
            }
        }
        return Ok(g.clone());
    }
    let axes = axes.ok_or_else(|| Error::invalid("closed-form Lagrangians need axes to be tabulated on"))?;
    let n = l.dim();
    crate::error::check_dim(2 * n, axes.len())?;
    GridLagrangian::from_fn(&axes[..n], &axes[n..], |x, p| l.eval_raw(x, p))
}

impl SymmetrizationState {
    pub fn route(&self) -> EpiRoute {
        self.route
    }

    /// One symmetrization step. Fails with the worst node when the sandwich
    /// `M₀ ≤ M ≤ M' ≤ N' ≤ N ≤ N₀` breaks by more than `1e−9 + 3h`.
    pub fn step(&self) -> Result<SymmetrizationState> {
        let axes = self.m.grid().axes().to_vec();
        let sd = self.m.state_dim();
        let mv = self.m.grid().values();
        let nv = self.n.grid().values();
        let avg: Vec<f64> = mv.iter().zip(nv).map(|(a, b)| 0.5 * (a + b)).collect();
        let n_next = GridLagrangian::new(sd, GridFunction::new(axes.clone(), avg)?)?;
        let m_next = match self.route {
            EpiRoute::Conjugate => n_next.conjugate_transpose()?,
            _ => GridLagrangian::new(sd, epi_average(self.m.grid(), self.n.grid())?)?,
        };
        let tol = sandwich_tol(self.m.step());
        let chain = [
            self.m0.grid().values(),
            mv,
            m_next.grid().values(),
            n_next.grid().values(),
            nv,
            self.n0.grid().values(),
        ];
        for flat in 0..mv.len() {
            for w in chain.windows(2) {
                let (lo, hi) = (w[0][flat], w[1][flat]);
                if lo == f64::INFINITY && hi == f64::INFINITY {
                    continue;
                }
                if lo > hi + tol {
                    return Err(Error::Numerical {
                        detail: format!(
                            "sandwich violated at iteration {} by {:e}",
                            self.iteration + 1,
                            lo - hi
                        ),
                        node: self.m.grid().node(flat).to_vec(),
                    });
                }
            }
        }
        let residual = m_next.sup_distance(&n_next, false);
        let conjugacy_defect = n_next.sup_distance(&m_next.conjugate_transpose()?, true);
        let mut history = self.history.clone();
        history.push(residual);
        Ok(SymmetrizationState {
            m: m_next,
            n: n_next,
            m0: Arc::clone(&self.m0),
            n0: Arc::clone(&self.n0),
            iteration: self.iteration + 1,
            residual,
            conjugacy_defect,
            history,
            route: self.route,
        })
    }
}

/// Runs [`SymmetrizationState::step`] until the residual is at most `tol`
/// or `max_iter` steps were taken, and returns the final `N`.
pub fn selfdualize(l: &Lagrangian, axes: Option<&[Axis]>, tol: f64, max_iter: usize) -> Result<(Lagrangian, SelfdualizeReport)> {
    selfdualize_with(
        l,
        axes,
        &SelfdualizeOptions {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

pub fn selfdualize_with(
    l: &Lagrangian,
    axes: Option<&[Axis]>,
    opts: &SelfdualizeOptions,
) -> Result<(Lagrangian, SelfdualizeReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut state = init_pair(l, axes, opts.route)?;
    while state.residual > opts.tol && state.iteration < opts.max_iter {
        state = state.step()?;
    }
    let mut out = state.n.clone();
    if let Some(label) = l.as_grid().and_then(GridLagrangian::label) {
        out = out.with_label(label);
    }
    let report = SelfdualizeReport {
        converged: state.residual <= opts.tol,
        iterations: state.iteration,
        route: state.route,
        residuals: state.history.clone(),
        final_residual: state.residual,
        conjugacy_defect: state.conjugacy_defect,
        selfduality_residual_of_output: out.selfduality_residual(true)?,
        dbar_agreement: dbar_agreement(&state.m0, &out)?,
    };
    Ok((Lagrangian::from_grid(out), report))
}

/// Inner-half state nodes, at most [`PROBES_PER_AXIS`] per axis.
pub fn probe_states(g: &GridLagrangian) -> Vec<crate::Vector> {
    let per_axis: Vec<Vec<f64>> = g
        .state_axes()
        .iter()
        .map(|a| {
            let inner: Vec<f64> = a
                .nodes()
                .into_iter()
                .filter(|t| t.abs() <= 0.25 * (a.max - a.min) + 1e-12)
                .collect();
            let k = inner.len().min(PROBES_PER_AXIS);
            if k <= 1 {
                return inner.into_iter().take(1).collect();
            }
            (0..k).map(|i| inner[i * (inner.len() - 1) / (k - 1)]).collect()
        })
        .collect();
    let mut out = vec![crate::Vector::new()];
    for vals in per_axis {
        out = out
            .into_iter()
            .flat_map(|x| {
                vals.iter().map(move |&v| {
                    let mut y = x.clone();
                    y.push(v);
                    y
                })
            })
            .collect();
    }
    out
}

fn dbar_agreement(m0: &GridLagrangian, n: &GridLagrangian) -> Result<f64> {
    let a = Lagrangian::from_grid(m0.clone());
    let b = Lagrangian::from_grid(n.clone());
    let costate = m0.costate_axes().to_vec();
    let mut worst = 0.0f64;
    for x in probe_states(m0) {
        let da = a.dbar(&x, &costate, GapTol::Abs(SANDWICH_TOL))?;
        let db = b.dbar(&x, &costate, GapTol::Abs(SANDWICH_TOL))?;
        let d = if da.is_empty() || db.is_empty() {
            match (&da.minimizer, &db.minimizer) {
                (Some(u), Some(v)) => crate::linalg::dist2(&u.p, &v.p),
                _ => f64::INFINITY,
            }
        } else {
            da.hausdorff(&db)
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

//! Variational solution of `p ∈ ∂̄L(x)` by minimizing the gap
//! `I_p(x) = L(x,p) − ⟨x,p⟩`, whose infimum is exactly zero for selfdual
//! `L`. A value at or below the tolerance therefore certifies a solution.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result, Stage};
use crate::fitzpatrick::MonotoneGraph;
use crate::grid::{Axis, GridLagrangian};
use crate::lagrangian::Lagrangian;
use crate::linalg::{self, norm2, Vector};
use crate::selfdualize::{selfdualize_with, SelfdualizeOptions, SelfdualizeReport};

/// Certification tolerance for closed forms.
pub const CLOSED_FORM_TOL: f64 = 1e-8;

/// Golden-section evaluations per coordinate in grid refinement.
const GOLDEN_STEPS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Certified,
    Stalled,
    /// No point with a finite gap was found.
    InfeasibleEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ProxGradient,
    Subgradient,
    GridSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub x_star: Vector,
    #[serde(with = "crate::extended::serde_f64")]
    pub gap: f64,
    pub tol: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    /// `(iteration, objective)`.
    #[serde(serialize_with = "serialize_trace")]
    pub trace: Vec<(usize, f64)>,
    pub status: SolveStatus,
}

fn serialize_trace<S: serde::Serializer>(trace: &[(usize, f64)], s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Point(usize, #[serde(with = "crate::extended::serde_f64")] f64);
    s.collect_seq(trace.iter().map(|&(k, v)| Point(k, v)))
}

impl SolveReport {
    pub fn certified(&self) -> bool {
        self.status == SolveStatus::Certified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventReport {
    pub x_star: Vector,
    /// The element of `J(x̄)` split off; `J` is the identity.
    pub r_star: Vector,
    /// `L(x̄, p − r̄) − ⟨x̄, p − r̄⟩`, zero when `p − r̄ ∈ ∂̄L(x̄)`.
    #[serde(with = "crate::extended::serde_f64")]
    pub defect: f64,
    pub solve: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MintyFailure {
    pub index: usize,
    pub p: Vector,
    #[serde(with = "crate::extended::serde_f64")]
    pub gap: f64,
    #[serde(with = "crate::extended::serde_f64")]
    pub defect: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MintyReport {
    pub solvable_fraction: f64,
    pub failures: Vec<MintyFailure>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Certification tolerance; `None` picks `1e−8` for closed forms and
    /// `3h(1 + ‖p‖)` on grids.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Used by [`solve_inclusion`].
    pub selfdualize: SelfdualizeOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: None,
            max_iter: 10_000,
            selfdualize: SelfdualizeOptions::default(),
        }
    }
}

impl SolveOptions {
    fn tol_for(&self, l: &Lagrangian, p: &[f64]) -> f64 {
        self.tol.unwrap_or_else(|| match l.grid_step() {
            Some(h) => 3.0 * h * (1.0 + norm2(p)),
            None => CLOSED_FORM_TOL,
        })
    }
}

/// Minimizes `I_p(x) = L(x,p) − ⟨x,p⟩` starting from `x0`.
///
/// Closed forms `ψ(x) + ψ*(P − Ax) − ⟨x,P⟩` use proximal gradient steps on
/// `ψ` when `ψ*` is smooth (or `A = 0`), and Polyak subgradient steps
/// otherwise. Grid-backed forms are searched exhaustively over the state
/// nodes and refined by coordinate golden-section search.
pub fn minimize_gap(l: &Lagrangian, p: &[f64], x0: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    check_dim(l.dim(), p.len())?;
    check_dim(l.dim(), x0.len())?;
    if opts.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let tol = opts.tol_for(l, p);
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut rep = if let Some(g) = l.underlying_grid() {
        grid_search(l, g, p, tol, opts.max_iter)
    } else {
        match l.smooth_split() {
            Some((psi, psi_star, a, p0)) => {
                let big_p: Vector = p.iter().zip(&p0).map(|(u, v)| u + v).collect();
                let smooth = a.is_none() || psi_star.smoothness().is_some();
                if smooth && psi.supports_prox() {
                    prox_gradient(l, psi, psi_star, a, &big_p, p, x0, tol, opts.max_iter)?
                } else {
                    subgradient(l, psi, psi_star, a, &big_p, p, x0, tol, opts.max_iter)?
                }
            }
            None => return Err(Error::invalid("Lagrangian form has no solver path")),
        }
    };
    if rep.gap < -rep.tol {
        return Err(Error::Hypothesis {
            detail: format!("gap {:e} below the pairing: L is not selfdual on this region", rep.gap),
            node: Some(rep.x_star.to_vec()),
        });
    }
    rep.status = if !rep.gap.is_finite() {
        SolveStatus::InfeasibleEvidence
    } else if rep.gap <= rep.tol {
        SolveStatus::Certified
    } else {
        SolveStatus::Stalled
    };
    Ok(rep)
}

fn report(x: Vector, gap: f64, tol: f64, iterations: usize, method: SolveMethod, trace: Vec<(usize, f64)>) -> SolveReport {
    SolveReport {
        x_star: x,
        gap,
        tol,
        iterations,
        method,
        trace,
        status: SolveStatus::Stalled,
    }
}

fn stationary(a: &[f64], b: &[f64]) -> bool {
    linalg::dist2(a, b) <= 1e-13 * (1.0 + norm2(a))
}

#[allow(clippy::too_many_arguments)]
fn prox_gradient(
    l: &Lagrangian,
    psi: &crate::ConvexFunction,
    psi_star: &crate::ConvexFunction,
    a: Option<&nalgebra::DMatrix<f64>>,
    big_p: &[f64],
    p: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    // Smooth part f(x) = ψ*(P − Ax) − ⟨x,P⟩, gradient −Aᵀ∇ψ*(P − Ax) − P.
    let lip = match a {
        Some(a) => psi_star.smoothness().unwrap_or(0.0) * linalg::spectral_norm(a).powi(2),
        None => 0.0,
    };
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let mut x: Vector = psi.prox(x0, step)?;
    let mut gap = l.gap_raw(&x, p);
    let mut trace = vec![(0, gap)];
    let mut iterations = 0;
    for k in 1..=max_iter {
        let mut grad: Vector = big_p.iter().map(|v| -v).collect();
        if let Some(a) = a {
            let y: Vector = big_p.iter().zip(linalg::matvec(a, &x)).map(|(u, v)| u - v).collect();
            let g = psi_star
                .gradient(&y)
                .ok_or_else(|| Error::invalid("conjugate is not differentiable along the iterates"))?;
            for (gi, v) in grad.iter_mut().zip(linalg::matvec_t(a, &g)) {
                *gi -= v;
            }
        }
        let fwd: Vector = x.iter().zip(&grad).map(|(u, v)| u - step * v).collect();
        let next = psi.prox(&fwd, step)?;
        let next_gap = l.gap_raw(&next, p);
        iterations = k;
        let done = stationary(&x, &next);
        x = next;
        gap = next_gap;
        trace.push((k, gap));
        if done {
            break;
        }
    }
    Ok(report(x, gap, tol, iterations, SolveMethod::ProxGradient, trace))
}

/// Element of `∂I_p(x) = ∂ψ(x) − Aᵀ∂ψ*(P − Ax) − P`, if both parts are
/// nonempty.
fn gap_subgradient(
    psi: &crate::ConvexFunction,
    psi_star: &crate::ConvexFunction,
    a: Option<&nalgebra::DMatrix<f64>>,
    big_p: &[f64],
    x: &[f64],
) -> Result<Option<Vector>> {
    let Some(mut g) = psi.subgradient_interval(x)?.representative() else {
        return Ok(None);
    };
    for (gi, v) in g.iter_mut().zip(big_p) {
        *gi -= v;
    }
    if let Some(a) = a {
        let y: Vector = big_p.iter().zip(linalg::matvec(a, x)).map(|(u, v)| u - v).collect();
        let Some(s) = psi_star.subgradient_interval(&y)?.representative() else {
            return Ok(None);
        };
        for (gi, v) in g.iter_mut().zip(linalg::matvec_t(a, &s)) {
            *gi -= v;
        }
    }
    Ok(Some(g))
}

#[allow(clippy::too_many_arguments)]
fn subgradient(
    l: &Lagrangian,
    psi: &crate::ConvexFunction,
    psi_star: &crate::ConvexFunction,
    a: Option<&nalgebra::DMatrix<f64>>,
    big_p: &[f64],
    p: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let domain = psi.box_domain();
    let project = |x: &mut Vector| {
        if let Some(b) = &domain {
            for (xi, iv) in x.iter_mut().zip(b) {
                *xi = iv.clamp(*xi);
            }
        }
    };
    let c = 1.0 + norm2(p);
    let mut x: Vector = x0.into();
    project(&mut x);
    let mut gap = l.gap_raw(&x, p);
    let (mut best_x, mut best) = (x.clone(), gap);
    let mut trace = vec![(0, gap)];
    let mut iterations = 0;
    for k in 1..=max_iter {
        iterations = k;
        if best <= 1e-3 * tol {
            break;
        }
        let Some(g) = gap_subgradient(psi, psi_star, a, big_p, &x)? else {
            break;
        };
        let gn = norm2(&g);
        if gn == 0.0 {
            break;
        }
        // Polyak step towards the known optimal value 0; the diminishing
        // schedule takes over when the gap is not finite.
        let t = if gap.is_finite() {
            gap / (gn * gn)
        } else {
            c / (k as f64).sqrt() / gn
        };
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= t * gi;
        }
        project(&mut x);
        gap = l.gap_raw(&x, p);
        trace.push((k, gap));
        if gap < best {
            best = gap;
            best_x = x.clone();
        }
    }
    Ok(report(best_x, best, tol, iterations, SolveMethod::Subgradient, trace))
}

fn grid_search(l: &Lagrangian, g: &GridLagrangian, p: &[f64], tol: f64, max_iter: usize) -> SolveReport {
    let axes: Vec<Axis> = g.state_axes().to_vec();
    let nodes = crate::fitzpatrick::MonotoneGraph::lattice(&axes);
    let gaps: Vec<f64> = nodes.iter().map(|x| l.gap_raw(x, p)).collect();
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for (i, &v) in gaps.iter().enumerate() {
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut x = nodes[best_i].clone();
    let mut trace = vec![(0, best)];
    let mut iterations = 0;
    if best.is_finite() {
        for sweep in 1..=max_iter.min(50) {
            iterations = sweep;
            let before = best;
            for (k, axis) in axes.iter().enumerate() {
                let h = axis.step();
                let lo = (x[k] - h).max(axis.min);
                let hi = (x[k] + h).min(axis.max);
                let mut y = x.clone();
                let (t, v) = golden(lo, hi, |t| {
                    y[k] = t;
                    l.gap_raw(&y, p)
                });
                if v < best {
                    best = v;
                    x[k] = t;
                }
            }
            trace.push((sweep, best));
            if before - best <= 1e-15 * (1.0 + before.abs()) {
                break;
            }
        }
    }
    report(x, best, tol, iterations, SolveMethod::GridSearch, trace)
}

/// Golden-section minimization on `[lo, hi]`, returning the best point seen.
fn golden(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..GOLDEN_STEPS {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Solves `p ∈ ∂̄L(x) + x` through the selfdual Lagrangian
/// `M(x,p) = inf_r L(x, p − r) + ½‖x‖² + ½‖r‖²`.
pub fn resolvent(l: &Lagrangian, p: &[f64], opts: &SolveOptions) -> Result<ResolventReport> {
    check_dim(l.dim(), p.len())?;
    let m = l.clone().resolvent()?;
    let x0 = Vector::from_elem(0.0, l.dim());
    let solve = minimize_gap(&m, p, &x0, opts)?;
    let x = solve.x_star.clone();
    let q: Vector = p.iter().zip(&x).map(|(a, b)| a - b).collect();
    Ok(ResolventReport {
        defect: l.gap_raw(&x, &q),
        r_star: x.clone(),
        x_star: x,
        solve,
    })
}

/// Runs [`resolvent`] at every sample; all certified is evidence that
/// `∂̄L + J` is onto, hence that `∂̄L` is maximal.
pub fn minty_probe(l: &Lagrangian, p_samples: &[Vector], opts: &SolveOptions) -> Result<MintyReport> {
    let results: Vec<Result<ResolventReport>> = p_samples.par_iter().map(|p| resolvent(l, p, opts)).collect();
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        let r = r?;
        if !r.solve.certified() {
            failures.push(MintyFailure {
                index,
                p: p_samples[index].clone(),
                gap: r.solve.gap,
                defect: r.defect,
                status: r.solve.status,
            });
        }
    }
    let n = p_samples.len().max(1) as f64;
    Ok(MintyReport {
        solvable_fraction: (p_samples.len() - failures.len()) as f64 / n,
        failures,
    })
}

/// Everything produced by [`solve_inclusion_full`].
#[derive(Debug, Clone)]
pub struct InclusionArtifacts {
    pub fitzpatrick: Lagrangian,
    pub selfdual: Lagrangian,
    pub selfdualize: SelfdualizeReport,
    pub solve: SolveReport,
}

/// Graph → Fitzpatrick Lagrangian → selfdual Lagrangian → gap minimizer.
pub fn solve_inclusion(g: &MonotoneGraph, p: &[f64], axes: &[Axis], opts: &SolveOptions) -> Result<SolveReport> {
    solve_inclusion_full(g, p, axes, opts).map(|a| a.solve)
}

pub fn solve_inclusion_full(
    g: &MonotoneGraph,
    p: &[f64],
    axes: &[Axis],
    opts: &SolveOptions,
) -> Result<InclusionArtifacts> {
    check_dim(g.dim(), p.len())?;
    let fitz = g.fitzpatrick_lagrangian(axes).map_err(|e| e.at_stage(Stage::Fitzpatrick))?;
    let (selfdual, sd_report) =
        selfdualize_with(&fitz, None, &opts.selfdualize).map_err(|e| e.at_stage(Stage::Selfdualize))?;
    let x0 = Vector::from_elem(0.0, g.dim());
    let solve = minimize_gap(&selfdual, p, &x0, opts).map_err(|e| e.at_stage(Stage::Solve))?;
    Ok(InclusionArtifacts {
        fitzpatrick: fitz,
        selfdual,
        selfdualize: sd_report,
        solve,
    })
}

//! Selfdual Lagrangians: convex functions with closed-form conjugates, grid
//! Legendre transforms, Fitzpatrick functions of monotone graphs, the
//! symmetrization iteration that turns them into selfdual Lagrangians, and
//! a variational solver for the inclusions they represent.

pub mod convex;
pub mod error;
pub mod extended;
pub mod fitzpatrick;
pub mod grid;
pub mod lagrangian;
pub mod linalg;
pub mod selfdualize;
pub mod solver;

pub use convex::{ConvexFunction, ConvexKind, Interval, NormKind, SubgradientSet};
pub use error::{Error, Result, Stage};
pub use extended::ExtReal;
pub use fitzpatrick::MonotoneGraph;
pub use grid::{Axis, GridFunction, GridLagrangian};
pub use lagrangian::{Lagrangian, PhaseBox};
pub use linalg::{SkewDecomposition, Vector};
pub use selfdualize::{selfdualize, EpiRoute, SelfdualizeOptions, SelfdualizeReport};
pub use solver::{minimize_gap, minty_probe, resolvent, solve_inclusion, SolveOptions, SolveReport, SolveStatus};

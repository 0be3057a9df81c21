//! JSON form: `{"form": "basic"|"skew"|"nonneg"|"translated"|"infconv"|
//! "resolvent"|"grid", "dim": n, ...}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Lagrangian, Repr};
use crate::convex::ConvexFunction;
use crate::error::{check_dim, Error, Result};
use crate::grid::{GridFunction, GridLagrangian};
use crate::linalg::serde_matrix;

#[derive(Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
enum LagrangianSpec {
    Basic {
        dim: usize,
        phi: ConvexFunction,
    },
    Skew {
        dim: usize,
        phi: ConvexFunction,
        #[serde(with = "serde_matrix")]
        gamma: DMatrix<f64>,
    },
    Nonneg {
        dim: usize,
        phi: ConvexFunction,
        #[serde(with = "serde_matrix")]
        gamma: DMatrix<f64>,
    },
    Translated {
        dim: usize,
        base: Box<Lagrangian>,
        p0: Vec<f64>,
    },
    #[serde(rename = "infconv")]
    InfConv {
        dim: usize,
        base: Box<Lagrangian>,
        phi: ConvexFunction,
    },
    Resolvent {
        dim: usize,
        base: Box<Lagrangian>,
    },
    Grid {
        dim: usize,
        grid: GridFunction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl TryFrom<LagrangianSpec> for Lagrangian {
    type Error = Error;

    fn try_from(s: LagrangianSpec) -> Result<Self> {
        let (dim, l) = match s {
            LagrangianSpec::Basic { dim, phi } => (dim, Lagrangian::make_basic(phi)?),
            LagrangianSpec::Skew { dim, phi, gamma } => (dim, Lagrangian::make_skew(phi, gamma)?),
            LagrangianSpec::Nonneg { dim, phi, gamma } => (dim, Lagrangian::make_nonneg(phi, gamma)?),
            LagrangianSpec::Translated { dim, base, p0 } => (dim, base.translate(p0)?),
            LagrangianSpec::InfConv { dim, base, phi } => (dim, base.inf_conv_lagrangian(phi)?),
            LagrangianSpec::Resolvent { dim, base } => (dim, base.resolvent()?),
            LagrangianSpec::Grid { dim, grid, label } => {
                if grid.dim() % 2 != 0 {
                    return Err(Error::invalid("grid Lagrangian needs an even number of axes"));
                }
                let mut g = GridLagrangian::new(grid.dim() / 2, grid)?;
                if let Some(label) = label {
                    g = g.with_label(label);
                }
                (dim, Lagrangian::from_grid(g))
            }
        };
        check_dim(l.dim(), dim)?;
        Ok(l)
    }
}

impl From<&Lagrangian> for LagrangianSpec {
    fn from(l: &Lagrangian) -> Self {
        let dim = l.dim;
        match &l.repr {
            Repr::Basic { phi, .. } => LagrangianSpec::Basic { dim, phi: phi.clone() },
            Repr::Skew { phi, gamma, .. } => LagrangianSpec::Skew {
                dim,
                phi: phi.clone(),
                gamma: gamma.gamma().clone(),
            },
            Repr::Nonneg { phi, gamma, .. } => LagrangianSpec::Nonneg {
                dim,
                phi: phi.clone(),
                gamma: gamma.gamma().clone(),
            },
            Repr::Translated { base, p0 } => LagrangianSpec::Translated {
                dim,
                base: base.clone(),
                p0: p0.clone(),
            },
            Repr::InfConvolved(ic) => LagrangianSpec::InfConv {
                dim,
                base: ic.base.clone(),
                phi: ic.phi.clone(),
            },
            Repr::Resolvent { base, .. } => LagrangianSpec::Resolvent { dim, base: base.clone() },
            Repr::Grid(g) => LagrangianSpec::Grid {
                dim,
                grid: g.grid().clone(),
                label: g.label().map(str::to_string),
            },
        }
    }
}

impl Serialize for Lagrangian {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LagrangianSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Lagrangian {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = LagrangianSpec::deserialize(d)?;
        Lagrangian::try_from(spec).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_nested_forms() {
        let l = Lagrangian::make_skew(
            ConvexFunction::half_square(2),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        )
        .unwrap()
        .translate(vec![1.0, 2.0])
        .unwrap()
        .resolvent()
        .unwrap();
        let s = serde_json::to_string(&l).unwrap();
        assert!(s.starts_with("{\"form\":\"resolvent\""));
        let back: Lagrangian = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn grid_form_embeds_grid_schema() {
        let a = crate::grid::Axis::new(-1.0, 1.0, 3).unwrap();
        let g = GridLagrangian::from_fn(&[a], &[a], |x, p| x[0] * x[0] + p[0] * p[0]).unwrap();
        let l = Lagrangian::from_grid(g);
        let s = serde_json::to_string(&l).unwrap();
        assert!(s.contains("\"form\":\"grid\""));
        assert!(s.contains("\"grid\":{\"dim\":2"));
        let back: Lagrangian = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
    }
}

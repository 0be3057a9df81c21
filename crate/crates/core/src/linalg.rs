//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{check_dim, Error, Result};

/// Stack-allocated vector for phase-space coordinates (n ≤ 4 stays inline).
pub type Vector = SmallVec<[f64; 4]>;

/// Minimum-eigenvalue floor for positive semidefiniteness.
pub const PSD_FLOOR: f64 = -1e-10;
/// Tolerance on `‖Γ + Γᵀ‖∞` for a matrix to count as skew-symmetric.
pub const SKEW_TOL: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `m · x` without heap allocation for small dimensions.
#[inline]
pub fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vector {
    debug_assert_eq!(m.ncols(), x.len());
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// `mᵀ · x`.
#[inline]
pub fn matvec_t(m: &DMatrix<f64>, x: &[f64]) -> Vector {
    debug_assert_eq!(m.nrows(), x.len());
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * x[i]).sum())
        .collect()
}

pub fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| *v == 0.0)
}

pub fn is_identity_multiple(m: &DMatrix<f64>) -> Option<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let a = m[(0, 0)];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let want = if i == j { a } else { 0.0 };
            if m[(i, j)] != want {
                return None;
            }
        }
    }
    Some(a)
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    max_eigenvalue(&(m.transpose() * m)).max(0.0).sqrt()
}

pub fn require_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    check_dim(n, m.nrows())?;
    check_dim(n, m.ncols())
}

/// Splitting `Γ = Γˢʸᵐ + Γᵃˢ` into symmetric and antisymmetric parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewDecomposition {
    gamma: DMatrix<f64>,
    sym: DMatrix<f64>,
    antisym: DMatrix<f64>,
}

impl SkewDecomposition {
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        if !gamma.is_square() {
            return Err(Error::invalid("operator matrix must be square"));
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("operator matrix has non-finite entries"));
        }
        let t = gamma.transpose();
        let sym = (&gamma + &t) * 0.5;
        let antisym = (&gamma - &t) * 0.5;
        Ok(Self {
            gamma,
            sym,
            antisym,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn sym(&self) -> &DMatrix<f64> {
        &self.sym
    }

    pub fn antisym(&self) -> &DMatrix<f64> {
        &self.antisym
    }

    /// `‖Γ + Γᵀ‖∞` as an entrywise max.
    pub fn skew_defect(&self) -> f64 {
        self.sym.iter().fold(0.0f64, |m, v| m.max(2.0 * v.abs()))
    }

    pub fn min_sym_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.sym)
    }
}

/// Row-major nested-array serde for matrices.
pub mod serde_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decomposition_parts() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let d = SkewDecomposition::new(g.clone()).unwrap();
        assert_eq!(d.sym() + d.antisym(), g);
        assert_eq!(d.antisym().transpose(), -d.antisym());
        assert_eq!(d.sym().transpose(), *d.sym());
        assert_eq!(*d.sym(), DMatrix::identity(2, 2));
    }

    #[test]
    fn antisymmetric_part_is_orthogonal_to_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-2.0..2.0));
        let d = SkewDecomposition::new(g).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ax = matvec(d.antisym(), &x);
            assert!(dot(&ax, &x).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -0.1]);
        assert!((min_eigenvalue(&m) + 0.1).abs() < 1e-12);
        assert!((spectral_norm(&m) - 2.0).abs() < 1e-12);
    }
}

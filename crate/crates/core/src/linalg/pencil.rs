use nalgebra::{DMatrix, DVector};

use super::{same_dim, SymFactor, SymMatrix};
use crate::error::{Error, Result};

/// Simultaneous diagonalization of a pencil `(B, A)` with `A` positive definite.
///
/// Holds `W` and `λ` with `W^T A W = Id` and `W^T B W = diag(λ)`, so that
/// `(A + γ B)^{-1} = W diag(1 / (1 + γ λ)) W^T` for every `γ` with
/// `1 + γ λ_j > 0`. One decomposition then serves an entire scalar search.
#[derive(Debug, Clone)]
pub struct Pencil {
    values: DVector<f64>,
    basis: DMatrix<f64>,
}

impl Pencil {
    pub fn new(b: &SymMatrix, a: &SymMatrix) -> Result<Self> {
        same_dim("pencil", a.dim(), b.dim())?;
        let l = match SymFactor::new(a, "pencil target")? {
            SymFactor::Cholesky(ch) => ch.l(),
            SymFactor::Eigen(sp) => {
                // A = (V Λ^{1/2}) (V Λ^{1/2})^T.
                let mut v = sp.vectors.clone();
                for (j, mut col) in v.column_iter_mut().enumerate() {
                    col *= sp.values[j].sqrt();
                }
                v
            }
        };
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or(Error::Factorization {
                what: "pencil target",
                min_eigenvalue: 0.0,
            })?;
        let c = &l_inv * b.as_matrix() * l_inv.transpose();
        let sp = SymMatrix::from_symmetrized(c)?.spectral();
        let basis = l_inv.transpose() * &sp.vectors;
        Ok(Self {
            values: sp.values,
            basis,
        })
    }

    /// Generalized eigenvalues `λ`, ascending.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// The basis `W`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `W^T x`.
    pub fn coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(x)
    }

    /// `W^T C W`.
    pub fn congruence(&self, c: &SymMatrix) -> DMatrix<f64> {
        self.basis.tr_mul(&(c.as_matrix() * &self.basis))
    }

    /// `x^T (shift·A + scale·B)^{-1} x`.
    pub fn inv_quad_form(&self, x: &DVector<f64>, shift: f64, scale: f64) -> f64 {
        let y = self.coords(x);
        y.iter()
            .zip(self.values.iter())
            .map(|(yi, l)| yi * yi / (shift + scale * l))
            .sum()
    }

    /// `(shift·A + scale·B)^{-1}`.
    pub fn inverse(&self, shift: f64, scale: f64) -> SymMatrix {
        let mut w = self.basis.clone();
        for (j, mut col) in w.column_iter_mut().enumerate() {
            col /= shift + scale * self.values[j];
        }
        let inv = w * self.basis.transpose();
        let t = inv.transpose();
        SymMatrix((inv + t) * 0.5)
    }
}

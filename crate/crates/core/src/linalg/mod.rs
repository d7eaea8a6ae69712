//! Dense symmetric linear algebra.
//!
//! Everything here works on [`SymMatrix`], a thin validated wrapper around a
//! square `nalgebra` matrix. Operations are pure: inputs are borrowed and
//! results are freshly allocated, so values can be shared freely across
//! worker threads.
//!
//! Inversion goes through [`SymFactor`], which tries a Cholesky
//! factorization first and falls back to a symmetric eigendecomposition when
//! the matrix is too close to singular for Cholesky to succeed.

mod io;
mod pencil;

pub use io::{
    read_matrix_csv, read_sym_binary, write_matrix_csv, write_sym_binary, BINARY_MAGIC,
    BINARY_VERSION,
};
pub use pencil::Pencil;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Absolute tolerance on `|a_ij - a_ji|` accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after checking that it is square, non-empty and symmetric
    /// within [`SYMMETRY_TOL`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let asym = max_asymmetry(&m);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        Ok(Self(m))
    }

    /// Wraps `(m + m^T) / 2`. Use this for products such as `X^T D^2 X`
    /// whose two triangles may differ in the last bits.
    pub fn from_symmetrized(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn scaled_identity(p: usize, scale: f64) -> Self {
        Self(DMatrix::identity(p, p) * scale)
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::Shape("matrix has no rows".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::Shape(format!(
                "row of length {} in a {p}-row matrix",
                bad.len()
            )));
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        same_dim("matrix sum", self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        same_dim("matrix difference", self.dim(), other.dim())?;
        Ok(Self(&self.0 - &other.0))
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn spectral(&self) -> Spectral {
        Spectral::of(&self.0)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut vals: Vec<f64> = self.0.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        DVector::from_vec(vals)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == DMatrix::identity(self.dim(), self.dim())
    }

    /// A matrix `L` with `L L^T = self`. Cholesky when it succeeds,
    /// otherwise `V diag(sqrt(max(λ, 0)))` from the eigendecomposition, which
    /// also covers singular PSD matrices.
    pub fn root(&self) -> DMatrix<f64> {
        if let Some(ch) = Cholesky::new(self.0.clone()) {
            return ch.l();
        }
        let sp = self.spectral();
        let mut v = sp.vectors.clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col *= sp.values[j].max(0.0).sqrt();
        }
        v
    }
}

/// Ascending symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectral {
    fn of(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let p = m.nrows();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DMatrix::zeros(p, p);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `M = S + A` with `A ⪰ t_floor · Id`, `t_floor > 0`.
#[derive(Debug, Clone)]
pub struct ShrinkagePlan {
    target: SymMatrix,
    t_floor: f64,
}

impl ShrinkagePlan {
    /// Slack allowed between `λ_min(A)` and the declared floor.
    pub const FLOOR_SLACK: f64 = 1e-10;

    pub fn new(target: SymMatrix, t_floor: f64) -> Result<Self> {
        if !(t_floor > 0.0) || !t_floor.is_finite() {
            return Err(Error::invalid(format!("t_floor must be positive, got {t_floor}")));
        }
        let min = target.min_eigenvalue();
        if min < t_floor - Self::FLOOR_SLACK {
            return Err(Error::invalid(format!(
                "shrinkage target has min eigenvalue {min} below t_floor {t_floor}"
            )));
        }
        Ok(Self { target, t_floor })
    }

    /// Uses the smallest eigenvalue of `target` as the floor.
    pub fn from_target(target: SymMatrix) -> Result<Self> {
        let min = target.min_eigenvalue();
        Self::new(target, min)
    }

    pub fn scaled_identity(p: usize, lambda: f64) -> Result<Self> {
        Self::new(SymMatrix::scaled_identity(p, lambda), lambda)
    }

    pub fn target(&self) -> &SymMatrix {
        &self.target
    }

    pub fn t_floor(&self) -> f64 {
        self.t_floor
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// The plan for `t · A`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.target.scale(t), self.t_floor * t)
    }
}

/// Factorization of a symmetric positive definite matrix used for solves.
#[derive(Debug, Clone)]
pub enum SymFactor {
    Cholesky(Cholesky<f64, Dyn>),
    Eigen(Spectral),
}

impl SymFactor {
    /// Factors `m`; `what` names the matrix in error messages.
    pub fn new(m: &SymMatrix, what: &'static str) -> Result<Self> {
        if let Some(ch) = Cholesky::new(m.as_matrix().clone()) {
            return Ok(SymFactor::Cholesky(ch));
        }
        let sp = m.spectral();
        let floor = sp.max_abs() * m.dim() as f64 * f64::EPSILON;
        if !(sp.min() > floor) {
            return Err(Error::Factorization {
                what,
                min_eigenvalue: sp.min(),
            });
        }
        Ok(SymFactor::Eigen(sp))
    }

    pub fn dim(&self) -> usize {
        match self {
            SymFactor::Cholesky(ch) => ch.l_dirty().nrows(),
            SymFactor::Eigen(sp) => sp.values.len(),
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SymFactor::Cholesky(ch) => ch.solve(b),
            SymFactor::Eigen(sp) => {
                let mut c = sp.vectors.tr_mul(b);
                for (ci, l) in c.iter_mut().zip(sp.values.iter()) {
                    *ci /= l;
                }
                &sp.vectors * c
            }
        }
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SymFactor::Cholesky(ch) => ch.solve(b),
            SymFactor::Eigen(sp) => {
                let mut c = sp.vectors.tr_mul(b);
                for (i, mut row) in c.row_iter_mut().enumerate() {
                    row /= sp.values[i];
                }
                &sp.vectors * c
            }
        }
    }

    /// `x^T M^{-1} x`.
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.solve(x))
    }

    pub fn inverse(&self) -> SymMatrix {
        let inv = match self {
            SymFactor::Cholesky(ch) => ch.inverse(),
            SymFactor::Eigen(sp) => {
                let mut scaled = sp.vectors.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col /= sp.values[j];
                }
                scaled * sp.vectors.transpose()
            }
        };
        let t = inv.transpose();
        SymMatrix((inv + t) * 0.5)
    }
}

/// True iff the smallest eigenvalue of `m` is at least `-tol`.
///
/// A successful Cholesky factorization of `m + tol·Id` settles the positive
/// case without an eigendecomposition.
pub fn check_psd(m: &SymMatrix, tol: f64) -> bool {
    let shifted = m.as_matrix() + DMatrix::identity(m.dim(), m.dim()) * tol.max(0.0);
    if tol > 0.0 && Cholesky::new(shifted).is_some() {
        return true;
    }
    m.min_eigenvalue() >= -tol
}

/// `(S + A)^{-1}` for a PSD `s` and the shrinkage target in `plan`.
pub fn regularized_inverse(s: &SymMatrix, plan: &ShrinkagePlan) -> Result<SymMatrix> {
    same_dim("shrinkage target", s.dim(), plan.dim())?;
    let m = s.add(plan.target())?;
    match SymFactor::new(&m, "S + A") {
        Ok(f) => Ok(f.inverse()),
        Err(Error::Factorization { what, .. }) => Err(Error::Factorization {
            what,
            min_eigenvalue: s.min_eigenvalue(),
        }),
        Err(e) => Err(e),
    }
}

/// Sherman-Morrison: given `M^{-1}`, returns `(M + c·u u^T)^{-1}`.
///
/// Negative `c` gives a downdate; the update is rejected when
/// `1 + c·u^T M^{-1} u` is within `1e-12` of zero.
pub fn rank1_downdate(m_inv: &SymMatrix, u: &DVector<f64>, c: f64) -> Result<SymMatrix> {
    same_dim("rank-1 vector", m_inv.dim(), u.len())?;
    if c == 0.0 {
        return Ok(m_inv.clone());
    }
    let w = m_inv.as_matrix() * u;
    let denom = 1.0 + c * u.dot(&w);
    if denom.abs() <= 1e-12 {
        return Err(Error::Singular {
            what: "rank-1 update",
            denominator: denom,
        });
    }
    let out = m_inv.as_matrix() - (&w * w.transpose()) * (c / denom);
    SymMatrix::from_symmetrized(out)
}

/// Largest absolute eigenvalue.
pub fn operator_norm(m: &SymMatrix) -> f64 {
    m.as_matrix()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `A ⪯ B` up to `tol`: the smallest eigenvalue of `B - A` is `≥ -tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    let diff = b.sub(a)?;
    Ok(diff.min_eigenvalue() >= -tol)
}

pub(crate) fn same_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Shape("matrix dimension must be at least 1".into()));
    }
    Ok(())
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..p {
        for i in (j + 1)..p {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(SymMatrix::new(m), Err(Error::Shape(_))));
        assert!(matches!(SymMatrix::from_rows(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn psd_checks() {
        assert!(check_psd(&SymMatrix::identity(3), 0.0));
        assert!(!check_psd(&SymMatrix::from_diagonal(&[1.0, -0.5]), 1e-8));
        for seed in 0..5 {
            let g = gaussian_matrix(5, 5, seed);
            let gram = SymMatrix::from_symmetrized(g.transpose() * &g).unwrap();
            // Oracle: eigendecomposition.
            assert!(gram.spectral().min() > -1e-10);
            assert!(check_psd(&gram, 1e-10));
        }
    }

    #[test]
    fn regularized_inverse_closed_forms() {
        let plan = ShrinkagePlan::scaled_identity(4, 2.0).unwrap();
        let inv = regularized_inverse(&SymMatrix::zeros(4), &plan).unwrap();
        assert_relative_eq!(inv.as_matrix(), &(DMatrix::identity(4, 4) * 0.5), epsilon = 1e-15);

        let plan = ShrinkagePlan::scaled_identity(2, 1.0).unwrap();
        let inv = regularized_inverse(&SymMatrix::from_diagonal(&[1.0, 3.0]), &plan).unwrap();
        assert_relative_eq!(inv.get(0, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(inv.get(1, 1), 0.25, epsilon = 1e-15);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn regularized_inverse_matches_lu_oracle() {
        let s = random_psd(10, 7);
        let plan = ShrinkagePlan::scaled_identity(10, 0.3).unwrap();
        let inv = regularized_inverse(&s, &plan).unwrap();
        let m = s.as_matrix() + DMatrix::identity(10, 10) * 0.3;
        let lu_inv = m.clone().lu().try_inverse().unwrap();
        let rel = (inv.as_matrix() - &lu_inv).norm() / lu_inv.norm();
        assert!(rel < 1e-9, "relative error {rel}");
        let resid = &m * inv.as_matrix() - DMatrix::identity(10, 10);
        assert!(operator_norm(&SymMatrix::from_symmetrized(resid).unwrap()) < 1e-8);
    }

    #[test]
    fn regularized_inverse_reports_indefinite_input() {
        let s = SymMatrix::from_diagonal(&[-3.0, 1.0]);
        let plan = ShrinkagePlan::scaled_identity(2, 1.0).unwrap();
        match regularized_inverse(&s, &plan) {
            Err(Error::Factorization { min_eigenvalue, .. }) => {
                assert_relative_eq!(min_eigenvalue, -3.0, epsilon = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank1_update_cases() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let out = rank1_downdate(&SymMatrix::identity(2), &e1, 1.0).unwrap();
        assert_relative_eq!(out.as_matrix(), SymMatrix::from_diagonal(&[0.5, 1.0]).as_matrix());
        let out = rank1_downdate(&SymMatrix::identity(2), &e1, 0.0).unwrap();
        assert_eq!(out, SymMatrix::identity(2));
        let err = rank1_downdate(&SymMatrix::identity(2), &e1, -1.0);
        assert!(matches!(err, Err(Error::Singular { .. })));

        let m = random_psd(5, 3).add(&SymMatrix::identity(5)).unwrap();
        let u = DVector::from_column_slice(gaussian_matrix(5, 1, 9).as_slice());
        let m_inv = SymFactor::new(&m, "M").unwrap().inverse();
        let updated = rank1_downdate(&m_inv, &u, 0.7).unwrap();
        let direct = (m.as_matrix() + &u * u.transpose() * 0.7).try_inverse().unwrap();
        assert!((updated.as_matrix() - direct).amax() < 1e-10);
    }

    #[test]
    fn operator_norm_cases() {
        assert_relative_eq!(operator_norm(&SymMatrix::from_diagonal(&[3.0, -5.0])), 5.0);
        assert_relative_eq!(operator_norm(&SymMatrix::identity(6)), 1.0);
        let m = random_symmetric(8, 11);
        let oracle = m.spectral().max_abs();
        assert_relative_eq!(operator_norm(&m), oracle, max_relative = 1e-10);
    }

    #[test]
    fn loewner_cases() {
        let id = SymMatrix::identity(2);
        assert!(loewner_leq(&id, &id.scale(2.0), 0.0).unwrap());
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let b = SymMatrix::from_diagonal(&[2.0, 1.0]);
        assert!(!loewner_leq(&a, &b, 1e-12).unwrap());
        assert!(!loewner_leq(&b, &a, 1e-12).unwrap());
        assert!(loewner_leq(&id, &SymMatrix::identity(3), 0.0).is_err());
    }

    #[test]
    fn squared_resolvent_is_dominated_by_scaled_target_inverse() {
        // (A0 + S0)^{-2} ⪯ t^{-1} A0^{-1} whenever A0 ⪰ t Id and S0 ⪰ 0.
        for seed in 0..10 {
            let t = 0.2 + 0.1 * seed as f64;
            let a0 = random_psd(6, 100 + seed).add(&SymMatrix::scaled_identity(6, t)).unwrap();
            let s0 = random_psd(6, 200 + seed);
            let inv = SymFactor::new(&a0.add(&s0).unwrap(), "A0+S0").unwrap().inverse();
            let sq = SymMatrix::from_symmetrized(inv.as_matrix() * inv.as_matrix()).unwrap();
            let bound = SymFactor::new(&a0, "A0").unwrap().inverse().scale(1.0 / t);
            assert!(loewner_leq(&sq, &bound, 1e-10).unwrap());
        }
    }

    #[test]
    fn eigen_fallback_solves_near_singular() {
        let m = SymMatrix::from_diagonal(&[0.0, 1.0]);
        assert!(SymFactor::new(&m, "M").is_err());
        let m = SymMatrix::from_rows(&[vec![1.0, 1.0 - 1e-9], vec![1.0 - 1e-9, 1.0]]).unwrap();
        let f = SymFactor::new(&m, "M").unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let y = f.solve(&x);
        let back = m.as_matrix() * y;
        assert!((back - x).amax() < 1e-6);
    }

    fn gram_from(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let x = gaussian_matrix(n, p, seed);
        let r = DVector::from_iterator(n, (0..n).map(|i| 0.5 + (i % 3) as f64 * 0.5));
        (x, r)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn regularized_inverse_is_below_target_inverse(seed in 0u64..10_000, p in 1usize..12, lam in 0.05f64..3.0) {
            let s = random_psd(p, seed);
            let plan = ShrinkagePlan::scaled_identity(p, lam).unwrap();
            let inv = regularized_inverse(&s, &plan).unwrap();
            let a_inv = SymMatrix::scaled_identity(p, 1.0 / lam);
            prop_assert!(loewner_leq(&inv, &a_inv, 1e-8).unwrap());
            prop_assert!(operator_norm(&inv) <= 1.0 / plan.t_floor() + 1e-8);
        }

        #[test]
        fn rank1_chain_reproduces_regularized_inverse(seed in 0u64..10_000, n in 1usize..50, p in 1usize..50, lam in 0.1f64..2.0) {
            let (x, r) = gram_from(seed, n, p);
            let plan = ShrinkagePlan::scaled_identity(p, lam).unwrap();
            let mut inv = SymMatrix::scaled_identity(p, 1.0 / lam);
            for i in 0..n {
                let row = x.row(i).transpose();
                inv = rank1_downdate(&inv, &row, r[i] * r[i] / n as f64).unwrap();
            }
            let mut s = DMatrix::zeros(p, p);
            for i in 0..n {
                let row = x.row(i).transpose();
                s += &row * row.transpose() * (r[i] * r[i] / n as f64);
            }
            let direct = regularized_inverse(&SymMatrix::from_symmetrized(s).unwrap(), &plan).unwrap();
            let rel = (inv.as_matrix() - direct.as_matrix()).norm() / direct.as_matrix().norm();
            prop_assert!(rel < 1e-7, "relative error {}", rel);
        }
    }
}

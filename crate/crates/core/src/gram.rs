//! Regularized Gram matrix `Λ = λI + Σ φφᵀ` with a maintained inverse and
//! log-determinant.
//!
//! Each update costs O(d²): the inverse follows the Sherman–Morrison identity
//! and the log-determinant follows the matrix determinant lemma
//! `log det(Λ + φφᵀ) = log det Λ + log(1 + φᵀΛ⁻¹φ)`. The accumulated sum `mat`
//! is kept exactly as entered; every `refresh_interval` updates (or whenever
//! the cheap drift probe trips) the inverse and log-determinant are
//! recomputed from a Cholesky factorization of `mat`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::{dot, norm2, Cholesky, Matrix};
use crate::scalar::Scalar;

pub const DEFAULT_REFRESH_INTERVAL: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramState<T> {
    dim: usize,
    ridge: T,
    mat: Matrix<T>,
    inv: Matrix<T>,
    log_det: T,
    n_updates: usize,
    refresh_interval: usize,
    since_refresh: usize,
}

impl<T: Scalar> GramState<T> {
    /// `Λ = λI` with no observations.
    pub fn new(dim: usize, ridge: T) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("gram dimension must be at least 1"));
        }
        if !(ridge > T::zero()) || !ridge.is_finite() {
            return Err(invalid(format!("ridge must be positive and finite, got {ridge}")));
        }
        Ok(Self {
            dim,
            ridge,
            mat: Matrix::scaled_identity(dim, ridge),
            inv: Matrix::scaled_identity(dim, ridge.recip()),
            log_det: T::from_usize_lossy(dim) * ridge.ln(),
            n_updates: 0,
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
            since_refresh: 0,
        })
    }

    /// Sets how many rank-1 updates may pass between direct refreshes.
    pub fn with_refresh_interval(mut self, every: usize) -> Self {
        self.refresh_interval = every.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.mat
    }

    pub fn inverse(&self) -> &Matrix<T> {
        &self.inv
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn n_updates(&self) -> usize {
        self.n_updates
    }

    /// Adds `φφᵀ`. Rejects features with `‖φ‖₂ > 1` beyond the scalar's slack.
    pub fn update(&mut self, phi: &[T]) -> Result<()> {
        ensure_len("feature", phi.len(), self.dim)?;
        let norm = norm2(phi);
        if !(norm <= T::one() + T::lit(T::FEATURE_NORM_TOL)) {
            return Err(Error::InvalidFeature {
                norm: norm.to_f64_lossy(),
            });
        }

        let u = self.inv.matvec(phi);
        let q = dot(phi, &u).max(T::zero());
        let denom = T::one() + q;
        self.inv.add_outer(&u, &u, -denom.recip());
        self.mat.add_outer(phi, phi, T::one());
        self.log_det += q.ln_1p();
        self.n_updates += 1;
        self.since_refresh += 1;

        if self.since_refresh >= self.refresh_interval {
            return self.refresh();
        }
        // Drift probe along the update direction: Λ'(Λ'⁻¹φ) should reproduce φ.
        if q > T::zero() {
            let v: Vec<T> = u.iter().map(|&x| x / denom).collect();
            let back = self.mat.matvec(&v);
            let drift = back
                .iter()
                .zip(phi)
                .fold(T::zero(), |m, (&b, &p)| m.max((b - p).abs()));
            if drift > T::lit(T::INVERSE_DRIFT_TOL) {
                return self.refresh();
            }
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant from a Cholesky factor of the
    /// accumulated sum, retrying once with `1e-12·I` jitter.
    pub fn refresh(&mut self) -> Result<()> {
        let chol = match Cholesky::new(&self.mat) {
            Some(c) => c,
            None => {
                let mut jittered = self.mat.clone();
                for i in 0..self.dim {
                    jittered[(i, i)] += T::lit(1e-12);
                }
                Cholesky::new(&jittered).ok_or_else(|| {
                    Error::NumericalFailure(format!(
                        "gram matrix lost positive definiteness after {} updates",
                        self.n_updates
                    ))
                })?
            }
        };
        self.inv = chol.inverse();
        self.log_det = chol.log_det();
        self.since_refresh = 0;
        Ok(())
    }

    /// `φᵀΛ⁻¹φ`, clamped into its exact range `[0, ‖φ‖²/λ]`.
    pub fn quad_form(&self, phi: &[T]) -> Result<T> {
        ensure_len("feature", phi.len(), self.dim)?;
        Ok(quad_form_with(&self.inv, phi, self.ridge))
    }

    /// Solves `Λx = b` using the maintained inverse plus one refinement step.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        ensure_len("right-hand side", b.len(), self.dim)?;
        let mut x = self.inv.matvec(b);
        let ax = self.mat.matvec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let dx = self.inv.matvec(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        Ok(x)
    }

    /// Max-entry deviation of `Λ·Λ⁻¹` from the identity (O(d³); diagnostic use).
    pub fn identity_deviation(&self) -> T {
        let prod = self.mat.matmul(&self.inv);
        prod.max_abs_diff(&Matrix::identity(self.dim))
    }
}

/// `φᵀ M φ` for a frozen Gram inverse `M`, clamped to `[0, ‖φ‖²/λ]`.
pub(crate) fn quad_form_with<T: Scalar>(inv: &Matrix<T>, phi: &[T], ridge: T) -> T {
    let q = inv.quad_form(phi);
    q.max(T::zero()).min(dot(phi, phi) / ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn init_identity() {
        let g = GramState::new(2, 1.0).unwrap();
        assert_eq!(g.matrix(), &Matrix::identity(2));
        assert_eq!(g.log_det(), 0.0);
        assert_eq!(g.n_updates(), 0);
    }

    #[test]
    fn init_scaled() {
        let g = GramState::new(3, 2.0).unwrap();
        assert_relative_eq!(g.log_det(), 3.0 * 2f64.ln(), epsilon = 1e-15);
        let g = GramState::new(1, 0.5).unwrap();
        assert_eq!(g.inverse()[(0, 0)], 2.0);
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(matches!(GramState::new(0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(GramState::new(2, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(GramState::new(2, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn one_hot_update() {
        let mut g = GramState::new(2, 1.0).unwrap();
        g.update(&[1.0, 0.0]).unwrap();
        assert_eq!(g.matrix().to_rows(), vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert_relative_eq!(g.inverse()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(g.inverse()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.log_det(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(g.quad_form(&[1.0, 0.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_update_leaves_matrix() {
        let mut g = GramState::new(2, 1.0).unwrap();
        g.update(&[0.0, 0.0]).unwrap();
        assert_eq!(g.matrix(), &Matrix::identity(2));
        assert_eq!(g.log_det(), 0.0);
        assert_eq!(g.n_updates(), 1);
    }

    #[test]
    fn rejects_long_features() {
        let mut g = GramState::new(2, 1.0).unwrap();
        assert!(matches!(g.update(&[1.0, 0.1]), Err(Error::InvalidFeature { .. })));
        // within the slack
        g.update(&[1.0 + 5e-10, 0.0]).unwrap();
        assert!(matches!(g.update(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quad_form_unit_vector_on_identity() {
        let g = GramState::new(2, 1.0).unwrap();
        assert_relative_eq!(g.quad_form(&[0.6, 0.8]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(g.quad_form(&[1.0]).is_err());
    }

    #[test]
    fn diagonal_solve() {
        let mut g = GramState::new(2, 1.0).unwrap();
        g.update(&[1.0, 0.0]).unwrap();
        let x = g.solve(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-15);
        let g = GramState::new(3, 0.7).unwrap();
        assert_eq!(g.solve(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(g.solve(&[0.0; 2]).is_err());
    }

    #[test]
    fn refresh_interval_triggers() {
        let mut g = GramState::new(2, 1.0).unwrap().with_refresh_interval(3);
        for _ in 0..3 {
            g.update(&[0.6, 0.8]).unwrap();
        }
        assert_eq!(g.since_refresh, 0);
        assert!(g.identity_deviation() < 1e-14);
    }

    #[test]
    fn single_precision_works() {
        let mut g = GramState::<f32>::new(2, 1.0).unwrap();
        g.update(&[1.0, 0.0]).unwrap();
        assert!((g.quad_form(&[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-6);
    }
}

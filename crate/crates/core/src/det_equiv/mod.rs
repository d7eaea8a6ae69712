//! Empirical quadratic forms in `(S + A)^{-1}` and their deterministic
//! equivalents.
//!
//! The equivalent of `v^T (S + A)^{-1} v` is `v^T (γ̄ Σ + A)^{-1} v`, where
//! `(ᾱ, γ̄)` solve a coupled scalar system. Sandwiches
//! `v^T (S + A)^{-1} B (S + A)^{-1} v` add a second scalar `ξ̄` solving a
//! linear equation built from the same solution.

mod fixed_point;
mod forms;
mod pooled;

pub use fixed_point::{
    det_equiv_mean_form, det_equiv_quadform, det_equiv_sandwich, fixed_point_residual,
    gamma_of_alpha, solve_alpha_gamma, solve_xi, xi_terms, DetEquivSolution, XiTerms,
};
pub use forms::{empirical_forms, normalize, FormValues, Resolvent};
pub use pooled::{
    centered_mean_form, default_p_tilde, pooled_gram, pooled_mean_forms, weighted_mean,
    MeanFormSet, PooledMeanForms,
};

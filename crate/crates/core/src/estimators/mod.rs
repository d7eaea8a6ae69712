//! Data-driven estimators and their statistical applications.

mod elliptical;
mod lda;
mod population;
mod portfolio;
mod rda;
mod ridge;

pub use elliptical::{
    elliptical_misclassification, elliptical_threshold, radial_scale_estimate, Quadrature,
    RadialDensity,
};
pub use lda::{gaussian_rule_error, lda_corrections, lda_misclassification, LdaCorrections, LdaStats};
pub use population::{
    estimate_alpha, estimate_gamma, estimate_population_quadform, estimate_ri2_alpha, solve_t0,
    GammaEvaluator, PopulationQuadformEstimate, T0Solution,
};
pub use portfolio::{plugin_portfolio, portfolio_risks, PluginPortfolio, PortfolioProblem, PortfolioRisks};
pub use rda::{rda_direction, rda_sweep, RdaRow};
pub use ridge::{ridge_risk, RidgeProblem, RidgeRisk};

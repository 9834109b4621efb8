//! Laplace-approximation inference for latent Gaussian models.

mod grid;
mod laplace;
mod model;
mod optimize;
mod posterior;

pub use grid::{explore_hypergrid, explore_objective, GridSpec, HyperGrid};
pub use laplace::{conditional, gaussian_conditional, laplace_log_marginal, newton_mode, newton_mode_from, Conditional, NewtonOptions};
pub use model::{
    default_log_kappa_bounds, logistic, nonstationary_fields, softplus, Component, Family, HyperSpec, LatentModel, VAGUE_VARIANCE,
};
pub use optimize::{fd_hessian, nelder_mead_max, Maximum, NelderMeadOptions};
pub use posterior::{
    latent_marginals, latent_marginals_with, mixture_quantile, normal_cdf, sample_latent, LatentPosterior, LinearCombination,
    MarginalSummary, LEVEL,
};

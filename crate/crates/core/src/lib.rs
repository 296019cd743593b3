//! Spectral fractional powers of Neumann elliptic operators in one dimension,
//! Bayesian inference of the order `s` and the diffusion coefficient, and
//! stability diagnostics for the resulting posteriors.
//!
//! The forward problem is `L_A^s p = f` with `L_A = −(a p′)′` on an interval,
//! discretized with P1 finite elements. Two solvers are provided: a truncated
//! eigen-expansion ([`spectral`]) and a degenerate extension problem on a
//! half-strip ([`extension`]).

pub mod bayes;
pub mod error;
pub mod experiment;
pub mod extension;
pub mod forward;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod prior;
pub mod spectral;

pub use bayes::{
    pcn_mcmc, posterior_grid_1d, potential, Chain, ForwardModel, JointModel, McmcConfig, OrderOnlyModel, OrderProposal,
    PosteriorDensity1D, PosteriorSummary,
};
pub use error::{Error, Result};
pub use extension::{solve_extension, ExtensionField, ExtensionGrid};
pub use forward::{
    analytic_solution, analytic_source, forward_g, observe_average, observe_pointwise, synth_data, DataVector,
    ObservationSetup, Solver,
};
pub use mesh::{assemble, build_mesh, AssembledOperator, Coefficient, CoefficientFile, Mesh1D};
pub use metrics::{
    eigen_perturbation_check, forward_lipschitz_probe, hellinger_1d, holder_interpolation_check, op_norm_diff,
    wellposedness_sweep, HellingerReport, PerturbationReport,
};
pub use prior::{CoefficientPrior, OrderPrior, ParamPoint, Prior, PriorConfig};
pub use spectral::{eigendecompose, fractional_apply, fractional_solve, hs_seminorm, EigenSystem, Field};

//! Halo-MNL customer choice model.
//!
//! An MNL whose item utilities shift with the absence of other items:
//! `v_j = mu_j + sum over absent i of alpha_ij`, with the no-purchase
//! option fixed at utility 0. The crate covers schedule identifiability,
//! closed-form and numerical maximum likelihood, demand simulation and
//! model comparison, plus the `halo-mnl` command-line tool built on top.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod identifiability;
pub mod io;
pub mod model;
mod optim;
pub mod probability;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{
    fit_closed_form_c1, fit_closed_form_c2_triangular, fit_halo, fit_mnl, fit_numerical,
    HaloMethod, Initialization, OptimizerConfig,
};
pub use identifiability::{classify_schedule, Classification, IdentifiabilityReport};
pub use model::{
    validate_dataset, AvailabilityMatrix, ChoiceDistribution, FitMethod, FitResult, ParamIndex,
    ParameterMask, ParameterSet, TransactionDataset,
};
pub use probability::{choice_probabilities, log_likelihood, log_likelihood_gradient};
pub use simulation::{simulate_halo, simulate_mmnl, MixtureSpec, SimulationPlan};

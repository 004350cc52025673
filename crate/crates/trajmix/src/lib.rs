//! Nonlinear mixed-effects trajectory models for Gaussian longitudinal data.
//!
//! The crate fits three structural families by SAEM maximum likelihood:
//! a four-parameter sigmoidal mixed model and two random-changepoint
//! piecewise mixed models (abrupt and smooth polynomial transition). It
//! ships data-driven starting values, covariate effects on every structural
//! parameter, two marginal-likelihood computations, annotated text reports,
//! marginal-trajectory contrasts, and a simulation harness for accuracy and
//! runtime studies.
//!
//! Entry points:
//! - [`data::load_dataset`] / [`data::inspect`] — ingestion and summaries.
//! - [`initials::initials_smm`] / [`initials::initials_pmm`] — automatic
//!   starting values.
//! - [`saem::fit`] — maximum-likelihood estimation of a [`model::ModelSpec`].
//! - [`report`] — text report and marginal trajectories.
//! - [`sim`] — synthetic cohorts, accuracy metrics, benchmarks.
//!
//! See the crate examples for one runnable program per capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod initials;
pub mod model;
pub mod report;
pub mod saem;
pub mod sim;
pub mod stats;
pub mod svg;

pub use data::{inspect, load_dataset, write_dataset, InspectionSummary, LongitudinalDataset};
pub use error::{Error, ErrorClass, Result};
pub use initials::{fit_simple_lmm, initials_pmm, initials_smm, StartValues};
pub use model::{
    lambda_constraint, pmma_value, pmms_value, predict_params, smm_value, solve_transition,
    ModelKind, ModelSpec, ParamPredictorSpec, RandomEffectsCov, SubjectParams, TransitionPoly,
};
pub use report::{marginal_contrast, marginal_trajectory, render_report, MarginalTrajectory};
pub use saem::{
    convergence_trace, extract_psi, fit, loglik_importance, loglik_linearization, wald_pvalue,
    FitState, FittedModel, SaemConfig, SeMethod, SubjectEstimate, Trace,
};
pub use sim::{
    make_datacog, mse_curve, parse_scenarios, percent_bias, run_benchmark, simulate_dataset,
    InitialsMode, SimResult, SimScenario,
};


//! Doubly robust instrumental-variable estimation of controlled direct
//! effects under unmeasured mediator-outcome confounding.
//!
//! The pipeline is: build a [`Dataset`], describe the effect model with an
//! [`EffectModelSpec`] and a congruent [`InstrumentBasis`], fit the two
//! nuisance models, then either [`estimate_xi`] for a fixed model or
//! [`select`] among [`CandidateModel`]s with the quasi-likelihood criterion.

pub mod baselines;
pub mod data;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod nuisance;
pub mod selection;
pub mod simulation;

pub use baselines::{ordinary_smm_fit, ordinary_smm_select, two_stage_least_squares, BaselineFit, BaselineMethod};
pub use data::{ColumnRoles, Dataset, IngestReport, RawTable};
pub use error::{CdeError, Result};
pub use estimator::{
    cde_at, effect_report, estimate_xi, proportion_eliminated, sandwich_cov, total_effect, EffectReport, FittedCde,
    Interval, LevelEffect,
};
pub use model::{
    allele_score, build_design, selection_matrix, AlleleScoreSpec, CandidateModel, DesignMatrices, EffectModelSpec,
    InstrumentBasis,
};
pub use nuisance::{
    fit_baseline_outcome, fit_propensity_constant, fit_propensity_logistic, BaselineOutcomeFit, BaselineSubset,
    PhiSpec, PropensityFit, PropensityKind,
};
pub use selection::{
    fit_submodel, penalty_trace, qgic, quasi_likelihood, quasi_likelihood_gradient, select, CandidateEvaluation,
    CriterionConfig, Penalty, SelectionResult,
};
pub use simulation::{generate, metrics, run_scenario, selection_summary, Criterion, DgmParams, Method, ScenarioConfig, ScenarioResult, SimDraw};

//! Variable importance for conditional average treatment effect (CATE) models.
//!
//! Two estimators are provided: conditional permutation importance, which
//! perturbs one covariate within its conditional distribution given the
//! others, and leave-one-covariate-out (LOCO), which refits the CATE model
//! without the covariate. Both score the loss in a held-out risk (the
//! pseudo-outcome risk or the R-risk) of a cross-fitted DR-learner.

pub mod cate;
pub mod dgp;
pub mod error;
pub mod importance;
pub mod inference;
pub mod learners;
pub mod linalg;
pub mod risks;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use cate::{fit_dr_learner, pehe, predict_cate, pseudo_outcome, DrFit, NuisanceSpecs};
pub use dgp::{Dataset, DgpKind, DgpSpec};
pub use importance::{loco, permucate, Method};
pub use inference::{run_crossfit_importance, CrossfitPlan, DataSource, ImportanceOptions, ImportanceTable};
pub use linalg::DesignMatrix;
pub use risks::RiskKind;

//! Supervised learners behind one fit/predict surface.
//!
//! Regressors: cross-validated ridge, gradient-boosted trees (squared loss)
//! and a stacked ensemble. Classifiers: cross-validated logistic regression,
//! gradient-boosted trees (logistic loss) and a stacked ensemble. All fits are
//! pure functions of `(inputs, spec, seed)`.

mod gbt;
mod logistic;
mod poly;
mod ridge;
mod stacked;

pub use gbt::{fit_gbt, GbtLoss, GbtModel};
pub use logistic::{fit_logistic_cv, fit_logistic_fixed, LogisticModel};
pub use poly::{expand_polynomial, PolynomialMap};
pub use ridge::{fit_ridge_cv, RidgeModel};
pub use stacked::{fit_stacked, fit_stacked_classifier, nnls, StackedClassifier, StackedRegressor};

pub(crate) use ridge::GramCv;

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// Propensity clipping bound: every predicted probability lies in
/// `[PROPENSITY_CLIP, 1 - PROPENSITY_CLIP]`.
pub const PROPENSITY_CLIP: f64 = 0.01;

pub(crate) fn clip_probability(p: f64) -> f64 {
    p.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    RidgeCv,
    LogisticCv,
    GbtRegress,
    GbtClassify,
    Stacked,
}

impl LearnerKind {
    pub fn is_classifier(self) -> bool {
        matches!(self, LearnerKind::LogisticCv | LearnerKind::GbtClassify)
    }
}

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Ten log-spaced penalties in `[1e-3, 1e3]`.
pub fn default_penalty_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// Candidate penalties for the linear kinds, strictly positive and ascending.
    pub penalty_grid: Vec<f64>,
    pub cv_folds: usize,
    pub gbt_learning_rate: f64,
    pub gbt_max_leaves: usize,
    pub gbt_n_rounds: usize,
    pub gbt_min_samples_leaf: usize,
    /// Level-0 learners of a stacked ensemble.
    pub base: Vec<LearnerSpec>,
}

impl LearnerSpec {
    fn with_kind(kind: LearnerKind) -> Self {
        Self {
            kind,
            penalty_grid: default_penalty_grid(),
            cv_folds: 5,
            gbt_learning_rate: 0.1,
            gbt_max_leaves: 10,
            gbt_n_rounds: 100,
            gbt_min_samples_leaf: 20,
            base: Vec::new(),
        }
    }

    pub fn ridge_cv() -> Self {
        Self::with_kind(LearnerKind::RidgeCv)
    }

    pub fn logistic_cv() -> Self {
        Self::with_kind(LearnerKind::LogisticCv)
    }

    pub fn gbt_regress() -> Self {
        Self::with_kind(LearnerKind::GbtRegress)
    }

    pub fn gbt_classify() -> Self {
        Self::with_kind(LearnerKind::GbtClassify)
    }

    pub fn stacked(base: Vec<LearnerSpec>) -> Self {
        Self {
            base,
            ..Self::with_kind(LearnerKind::Stacked)
        }
    }

    /// Replaces the penalty grid by a single value, bypassing cross-validation.
    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty_grid = vec![penalty];
        self
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.gbt_n_rounds = rounds;
        self
    }

    /// True when the learner (or every stacked base) predicts probabilities.
    pub fn is_classifier(&self) -> bool {
        match self.kind {
            LearnerKind::Stacked => self.base.iter().all(LearnerSpec::is_classifier),
            k => k.is_classifier(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        match self.kind {
            LearnerKind::RidgeCv | LearnerKind::LogisticCv => {
                if self.penalty_grid.is_empty() {
                    return bad("penalty grid is empty");
                }
                if self.penalty_grid.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
                    return bad("penalties must be finite and strictly positive");
                }
                if self.penalty_grid.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("penalty grid must be sorted strictly ascending");
                }
                if self.cv_folds < 2 {
                    return bad("cv_folds must be at least 2");
                }
            }
            LearnerKind::GbtRegress | LearnerKind::GbtClassify => {
                if self.gbt_max_leaves < 2 {
                    return bad("gbt_max_leaves must be at least 2");
                }
                if self.gbt_n_rounds < 1 {
                    return bad("gbt_n_rounds must be at least 1");
                }
                if !(self.gbt_learning_rate > 0.0) || !self.gbt_learning_rate.is_finite() {
                    return bad("gbt_learning_rate must be positive");
                }
                if self.gbt_min_samples_leaf < 1 {
                    return bad("gbt_min_samples_leaf must be at least 1");
                }
            }
            LearnerKind::Stacked => {
                if self.base.len() < 2 {
                    return bad("stacking needs at least two base learners");
                }
                let cls = self.base[0].is_classifier();
                if self.base.iter().any(|b| b.is_classifier() != cls) {
                    return bad("stacked base learners mix classifiers and regressors");
                }
                for b in &self.base {
                    b.validate()?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) enum RegressorModel {
    Ridge(RidgeModel),
    Gbt(GbtModel),
    Stacked(StackedRegressor),
}

/// A fitted regression model. Immutable, `Send + Sync`.
#[derive(Debug, Clone)]
pub struct FittedRegressor {
    spec: LearnerSpec,
    n_features: usize,
    model: RegressorModel,
}

impl FittedRegressor {
    pub(crate) fn new(spec: LearnerSpec, n_features: usize, model: RegressorModel) -> Self {
        Self {
            spec,
            n_features,
            model,
        }
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        x.expect_cols(self.n_features)?;
        Ok(match &self.model {
            RegressorModel::Ridge(m) => m.predict_unchecked(x),
            RegressorModel::Gbt(m) => m.predict_raw(x),
            RegressorModel::Stacked(m) => m.predict_unchecked(x)?,
        })
    }

    /// Linear coefficients; present only for ridge models.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            RegressorModel::Ridge(m) => Some(&m.coef),
            _ => None,
        }
    }

    pub fn intercept(&self) -> Option<f64> {
        match &self.model {
            RegressorModel::Ridge(m) => Some(m.intercept),
            _ => None,
        }
    }

    pub fn selected_penalty(&self) -> Option<f64> {
        match &self.model {
            RegressorModel::Ridge(m) => Some(m.penalty),
            _ => None,
        }
    }

    pub fn as_ridge(&self) -> Option<&RidgeModel> {
        match &self.model {
            RegressorModel::Ridge(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_gbt(&self) -> Option<&GbtModel> {
        match &self.model {
            RegressorModel::Gbt(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_stacked(&self) -> Option<&StackedRegressor> {
        match &self.model {
            RegressorModel::Stacked(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum ClassifierModel {
    Logistic(LogisticModel),
    Gbt(GbtModel),
    Stacked(StackedClassifier),
}

/// A fitted binary classifier whose probabilities are clipped to
/// `[PROPENSITY_CLIP, 1 - PROPENSITY_CLIP]`.
#[derive(Debug, Clone)]
pub struct FittedClassifier {
    spec: LearnerSpec,
    n_features: usize,
    model: ClassifierModel,
}

impl FittedClassifier {
    pub(crate) fn new(spec: LearnerSpec, n_features: usize, model: ClassifierModel) -> Self {
        Self {
            spec,
            n_features,
            model,
        }
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Probabilities before clipping.
    pub fn predict_proba_unclipped(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        x.expect_cols(self.n_features)?;
        Ok(match &self.model {
            ClassifierModel::Logistic(m) => m.predict_unchecked(x),
            ClassifierModel::Gbt(m) => m
                .predict_raw(x)
                .into_iter()
                .map(crate::stats::expit)
                .collect(),
            ClassifierModel::Stacked(m) => m.predict_unchecked(x)?,
        })
    }

    pub fn predict_proba(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        Ok(self
            .predict_proba_unclipped(x)?
            .into_iter()
            .map(clip_probability)
            .collect())
    }

    pub fn as_logistic(&self) -> Option<&LogisticModel> {
        match &self.model {
            ClassifierModel::Logistic(m) => Some(m),
            _ => None,
        }
    }
}

/// Predictions of `model` on `x`.
pub fn predict_regressor(model: &FittedRegressor, x: &DesignMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Clipped class-1 probabilities of `model` on `x`.
pub fn predict_proba(model: &FittedClassifier, x: &DesignMatrix) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

/// Fits any regression-capable spec.
pub fn fit_regressor(
    x: &DesignMatrix,
    y: &[f64],
    spec: &LearnerSpec,
    seed: u64,
) -> Result<FittedRegressor> {
    match spec.kind {
        LearnerKind::RidgeCv => fit_ridge_cv(x, y, spec, seed),
        LearnerKind::GbtRegress => {
            let m = fit_gbt(x, y, spec, GbtLoss::Squared, seed)?;
            Ok(FittedRegressor::new(spec.clone(), x.ncols(), RegressorModel::Gbt(m)))
        }
        LearnerKind::Stacked if !spec.is_classifier() => fit_stacked(x, y, &spec.base, seed),
        _ => Err(Error::InvalidSpec(format!(
            "{:?} cannot be used as a regressor",
            spec.kind
        ))),
    }
}

/// Fits any classification-capable spec on binary labels.
pub fn fit_classifier(
    x: &DesignMatrix,
    a: &[u8],
    spec: &LearnerSpec,
    seed: u64,
) -> Result<FittedClassifier> {
    match spec.kind {
        LearnerKind::LogisticCv => fit_logistic_cv(x, a, spec, seed),
        LearnerKind::GbtClassify => {
            let target: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
            let m = fit_gbt(x, &target, spec, GbtLoss::Logistic, seed)?;
            Ok(FittedClassifier::new(spec.clone(), x.ncols(), ClassifierModel::Gbt(m)))
        }
        LearnerKind::Stacked if spec.is_classifier() => {
            fit_stacked_classifier(x, a, &spec.base, seed)
        }
        _ => Err(Error::InvalidSpec(format!(
            "{:?} cannot be used as a classifier",
            spec.kind
        ))),
    }
}

pub(crate) fn check_binary(a: &[u8]) -> Result<()> {
    if let Some(&bad) = a.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidArgument(format!(
            "binary labels expected, found {bad}"
        )));
    }
    let ones = a.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == a.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

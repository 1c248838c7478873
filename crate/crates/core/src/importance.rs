//! Variable importance for a fitted CATE model.
//!
//! Both estimators report `perturbed risk - full risk`, so important
//! covariates score positive:
//!
//! * conditional permutation (`permucate`): covariate j is replaced by its
//!   predicted conditional mean plus a shuffled residual; the mean risk
//!   increase over P shuffles is halved.
//! * `loco`: the final stage is refitted without covariate j on the same
//!   pseudo-outcomes (nuisances are not refitted).

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::cate::{final_stage_seed, CateModel, DrFit};
use crate::dgp::Dataset;
use crate::error::{Error, Result};
use crate::learners::{fit_regressor, FittedRegressor, LearnerKind, LearnerSpec, RegressorModel};
use crate::linalg::{all_but, DesignMatrix};
use crate::learners::GramCv;
use crate::risks::{RiskContext, RiskKind};
use crate::rng::{stream_rng, Stream};
use crate::stats::{mean, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Permucate,
    Loco,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Permucate => "permucate",
            Method::Loco => "loco",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permucate" | "cpi" => Ok(Method::Permucate),
            "loco" => Ok(Method::Loco),
            _ => Err(Error::InvalidSpec(format!("unknown method `{s}`"))),
        }
    }
}

/// Predicts covariate j from the remaining covariates.
#[derive(Debug, Clone)]
pub struct ConditionalModel {
    pub j: usize,
    pub regressor: FittedRegressor,
    /// Covariate j was constant on the training rows; its importance is 0.
    pub degenerate: bool,
}

impl ConditionalModel {
    /// Conditional-mean predictions on `x` (all d columns).
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        self.regressor.predict(&x.without_column(self.j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEstimate {
    pub method: Method,
    pub j: usize,
    pub psi: f64,
    pub risk_full: f64,
    /// Mean perturbed (permucate) or reduced-model (loco) risk.
    pub risk_perturbed: f64,
    /// `risk_perturbed_k - risk_full` per permutation (permucate only).
    pub per_permutation: Vec<f64>,
    pub degenerate: bool,
}

impl ImportanceEstimate {
    pub fn n_permutations(&self) -> usize {
        self.per_permutation.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDiagnostics {
    pub j: usize,
    /// Squared norm of full-model coefficients (except j) minus reduced-model coefficients.
    pub delta_beta_norm_sq: f64,
    /// Sample variance of the conditional-mean predictions on the test rows.
    pub nu_variance: f64,
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// One regressor per covariate predicting it from the others. Ridge specs
/// share a single Gram batch across all covariates.
pub fn fit_conditional_models(
    x_train: &DesignMatrix,
    spec: &LearnerSpec,
    seed: u64,
) -> Result<Vec<ConditionalModel>> {
    let d = x_train.ncols();
    if d < 2 {
        return Err(Error::InvalidArgument(
            "conditional models need at least two covariates".into(),
        ));
    }
    spec.validate()?;
    if spec.kind == LearnerKind::RidgeCv {
        let gram = GramCv::new(x_train.matrix(), spec.cv_folds, seed, spec.penalty_grid.len() > 1);
        let features: Vec<usize> = (0..d).collect();
        let models = gram.fit_drop_each(&features, None, &spec.penalty_grid)?;
        Ok(models
            .into_iter()
            .enumerate()
            .map(|(j, m)| ConditionalModel {
                j,
                regressor: FittedRegressor::new(spec.clone(), d - 1, RegressorModel::Ridge(m)),
                degenerate: is_constant(&x_train.column(j)),
            })
            .collect())
    } else {
        (0..d)
            .map(|j| {
                let col = x_train.column(j);
                Ok(ConditionalModel {
                    j,
                    regressor: fit_regressor(&x_train.without_column(j), &col, spec, seed)?,
                    degenerate: is_constant(&col),
                })
            })
            .collect()
    }
}

/// Conditional permutation importance of every covariate on the evaluation rows.
#[allow(clippy::too_many_arguments)]
pub fn permucate(
    model: &CateModel,
    ctx: &RiskContext,
    x_test: &DesignMatrix,
    cond: &[ConditionalModel],
    n_permutations: usize,
    risk: RiskKind,
    seed: u64,
) -> Result<Vec<ImportanceEstimate>> {
    if n_permutations < 1 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let d = x_test.ncols();
    crate::error::check_len("conditional models", d, cond.len())?;
    let risk_full = ctx.evaluate(risk, &model.predict(x_test)?)?;
    cond.par_iter()
        .map(|c| {
            if c.degenerate {
                return Ok(ImportanceEstimate {
                    method: Method::Permucate,
                    j: c.j,
                    psi: 0.0,
                    risk_full,
                    risk_perturbed: risk_full,
                    per_permutation: vec![0.0; n_permutations],
                    degenerate: true,
                });
            }
            let nu = c.predict(x_test)?;
            let col = x_test.column(c.j);
            let resid: Vec<f64> = col.iter().zip(&nu).map(|(x, m)| x - m).collect();
            let mut perturbed = x_test.clone();
            let mut idx: Vec<usize> = (0..resid.len()).collect();
            let mut buf = vec![0.0; resid.len()];
            let mut diffs = Vec::with_capacity(n_permutations);
            for k in 0..n_permutations {
                let mut rng = stream_rng(seed, Stream::Permutation, &[c.j as u64, k as u64]);
                idx.sort_unstable();
                idx.shuffle(&mut rng);
                for (b, (&i, m)) in buf.iter_mut().zip(idx.iter().zip(&nu)) {
                    *b = m + resid[i];
                }
                perturbed.set_column(c.j, &buf);
                diffs.push(ctx.evaluate(risk, &model.predict(&perturbed)?)? - risk_full);
            }
            let m = mean(&diffs);
            Ok(ImportanceEstimate {
                method: Method::Permucate,
                j: c.j,
                psi: m / 2.0,
                risk_full,
                risk_perturbed: risk_full + m,
                per_permutation: diffs,
                degenerate: false,
            })
        })
        .collect()
}

/// LOCO estimates together with the reduced final-stage models.
#[derive(Debug, Clone)]
pub struct LocoOutput {
    pub estimates: Vec<ImportanceEstimate>,
    pub reduced: Vec<FittedRegressor>,
}

/// Final-stage refits without each covariate, on the training pseudo-outcomes.
///
/// `train` must be the dataset `fit` was trained on. Ridge final stages reuse
/// one Gram batch and the full model's CV folds.
pub fn loco_reduced_models(fit: &DrFit, train: &Dataset) -> Result<Vec<FittedRegressor>> {
    let d = train.d();
    if d < 2 {
        return Err(Error::InvalidArgument("loco needs at least two covariates".into()));
    }
    crate::error::check_len("pseudo-outcome length", train.n(), fit.phi.len())?;
    let order = &fit.canonical_order;
    let x = train.x.select_rows(order);
    let phi: Vec<f64> = order.iter().map(|&i| fit.phi[i]).collect();
    let spec = &fit.model.specs.final_stage;
    let seed = final_stage_seed(fit.model.seed);
    if spec.kind == LearnerKind::RidgeCv {
        let mut z = x.matrix().clone().insert_column(d, 0.0);
        z.column_mut(d).copy_from_slice(&phi);
        let gram = GramCv::new(&z, spec.cv_folds, seed, spec.penalty_grid.len() > 1);
        let features: Vec<usize> = (0..d).collect();
        let models = gram.fit_drop_each(&features, Some(d), &spec.penalty_grid)?;
        Ok(models
            .into_iter()
            .map(|m| FittedRegressor::new(spec.clone(), d - 1, RegressorModel::Ridge(m)))
            .collect())
    } else {
        (0..d)
            .into_par_iter()
            .map(|j| fit_regressor(&x.without_column(j), &phi, spec, seed))
            .collect()
    }
}

/// Scores reduced models against the full model on the evaluation rows.
pub fn loco_scores(
    model: &CateModel,
    reduced: &[FittedRegressor],
    ctx: &RiskContext,
    x_test: &DesignMatrix,
    risk: RiskKind,
) -> Result<Vec<ImportanceEstimate>> {
    let d = x_test.ncols();
    crate::error::check_len("reduced models", d, reduced.len())?;
    let risk_full = ctx.evaluate(risk, &model.predict(x_test)?)?;
    reduced
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let risk_reduced = ctx.evaluate(risk, &r.predict(&x_test.without_column(j))?)?;
            Ok(ImportanceEstimate {
                method: Method::Loco,
                j,
                psi: risk_reduced - risk_full,
                risk_full,
                risk_perturbed: risk_reduced,
                per_permutation: Vec::new(),
                degenerate: false,
            })
        })
        .collect()
}

/// Leave-one-covariate-out importance of every covariate.
///
/// Covariates constant on the training rows get importance 0 and are flagged.
pub fn loco(
    fit: &DrFit,
    train: &Dataset,
    ctx: &RiskContext,
    x_test: &DesignMatrix,
    risk: RiskKind,
) -> Result<LocoOutput> {
    x_test.expect_cols(train.d())?;
    let reduced = loco_reduced_models(fit, train)?;
    let mut estimates = loco_scores(&fit.model, &reduced, ctx, x_test, risk)?;
    for e in &mut estimates {
        if is_constant(&train.x.column(e.j)) {
            e.psi = 0.0;
            e.degenerate = true;
        }
    }
    Ok(LocoOutput { estimates, reduced })
}

/// Refitting error of LOCO and conditional-model spread of the permutation
/// approach, for linear final stages.
pub fn linear_diagnostics(
    full: &FittedRegressor,
    reduced: &[FittedRegressor],
    cond: &[ConditionalModel],
    x_test: &DesignMatrix,
) -> Result<Vec<LinearDiagnostics>> {
    let beta = full.coefficients().ok_or(Error::DiagnosticsUnavailable)?;
    let d = beta.len();
    crate::error::check_len("reduced models", d, reduced.len())?;
    crate::error::check_len("conditional models", d, cond.len())?;
    (0..d)
        .map(|j| {
            let r = reduced[j].coefficients().ok_or(Error::DiagnosticsUnavailable)?;
            let delta: f64 = all_but(d, j)
                .iter()
                .zip(r)
                .map(|(&k, rk)| (beta[k] - rk) * (beta[k] - rk))
                .sum();
            let nu = cond[j].predict(x_test)?;
            Ok(LinearDiagnostics {
                j,
                delta_beta_norm_sq: delta,
                nu_variance: if nu.len() > 1 { variance(&nu, 1) } else { 0.0 },
            })
        })
        .collect()
}

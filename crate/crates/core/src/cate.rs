//! Cross-fitted DR-learner.
//!
//! Nuisances (control and treated response surfaces, propensity) are fitted
//! on k-1 folds and predicted on the held-out fold. The pseudo-outcome
//! built from them is regressed on the covariates by a single final-stage
//! learner over all rows.
//!
//! Rows are put in a canonical order derived from their content before folds
//! are dealt, so the estimates do not depend on the input row order.

use rayon::prelude::*;

use crate::dgp::{Dataset, OracleQuantity};
use crate::error::{check_len, Error, Result};
use crate::learners::{
    clip_probability, fit_classifier, fit_regressor, FittedClassifier, FittedRegressor,
    LearnerSpec,
};
use crate::linalg::DesignMatrix;
use crate::rng::{derive_seed, fold_rows, mix64, stratified_assignment, Stream};

/// Learners used for each stage of the DR-learner.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSpecs {
    /// Response surfaces mu0 and mu1.
    pub outcome: LearnerSpec,
    pub propensity: LearnerSpec,
    /// Regression of the pseudo-outcome on the covariates.
    pub final_stage: LearnerSpec,
}

impl NuisanceSpecs {
    /// Ridge / logistic regression with cross-validated penalties.
    pub fn linear() -> Self {
        Self {
            outcome: LearnerSpec::ridge_cv(),
            propensity: LearnerSpec::logistic_cv(),
            final_stage: LearnerSpec::ridge_cv(),
        }
    }

    /// Stacked boosting + linear models for every stage.
    pub fn superlearner() -> Self {
        Self {
            outcome: LearnerSpec::stacked(vec![LearnerSpec::gbt_regress(), LearnerSpec::ridge_cv()]),
            propensity: LearnerSpec::stacked(vec![
                LearnerSpec::gbt_classify(),
                LearnerSpec::logistic_cv(),
            ]),
            final_stage: LearnerSpec::stacked(vec![
                LearnerSpec::gbt_regress(),
                LearnerSpec::ridge_cv(),
            ]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome.is_classifier() || self.final_stage.is_classifier() {
            return Err(Error::InvalidSpec("outcome and final-stage learners must be regressors".into()));
        }
        if !self.propensity.is_classifier() {
            return Err(Error::InvalidSpec("the propensity learner must be a classifier".into()));
        }
        self.outcome.validate()?;
        self.propensity.validate()?;
        self.final_stage.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    pub mu0_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    /// Clipped to `[0.01, 0.99]`.
    pub pi_hat: Vec<f64>,
    pub m_hat: Vec<f64>,
    /// Held-out fold of each row; empty for transported estimates.
    pub fold_assignment: Vec<usize>,
}

impl NuisanceEstimates {
    pub fn new(mu0_hat: Vec<f64>, mu1_hat: Vec<f64>, pi_hat: Vec<f64>) -> Result<Self> {
        check_len("mu1 length", mu0_hat.len(), mu1_hat.len())?;
        check_len("pi length", mu0_hat.len(), pi_hat.len())?;
        let pi_hat: Vec<f64> = pi_hat.into_iter().map(clip_probability).collect();
        let m_hat = (0..mu0_hat.len())
            .map(|i| pi_hat[i] * mu1_hat[i] + (1.0 - pi_hat[i]) * mu0_hat[i])
            .collect();
        Ok(Self {
            mu0_hat,
            mu1_hat,
            pi_hat,
            m_hat,
            fold_assignment: Vec::new(),
        })
    }

    /// The true nuisance functions of a simulated dataset.
    pub fn from_oracle(data: &Dataset) -> Result<Self> {
        let o = data.oracle()?;
        let mu0 = o.eval(&data.x, OracleQuantity::Mu0);
        let tau = o.eval(&data.x, OracleQuantity::Tau);
        let mu1 = mu0.iter().zip(&tau).map(|(m, t)| m + t).collect();
        Self::new(mu0, mu1, o.eval(&data.x, OracleQuantity::Pi))
    }

    pub fn len(&self) -> usize {
        self.mu0_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu0_hat.is_empty()
    }

    fn reorder(&self, order: &[usize]) -> Self {
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            mu0_hat: pick(&self.mu0_hat),
            mu1_hat: pick(&self.mu1_hat),
            pi_hat: pick(&self.pi_hat),
            m_hat: pick(&self.m_hat),
            fold_assignment: if self.fold_assignment.is_empty() {
                Vec::new()
            } else {
                order.iter().map(|&i| self.fold_assignment[i]).collect()
            },
        }
    }
}

/// Nuisance models fitted on one training portion.
#[derive(Debug, Clone)]
pub struct FoldNuisance {
    pub mu0: FittedRegressor,
    pub mu1: FittedRegressor,
    pub pi: FittedClassifier,
}

/// Cross-fitted nuisance models; predicting on new rows averages the folds.
#[derive(Debug, Clone)]
pub struct NuisanceModels {
    pub folds: Vec<FoldNuisance>,
}

impl NuisanceModels {
    pub fn predict(&self, x: &DesignMatrix) -> Result<NuisanceEstimates> {
        let n = x.nrows();
        let k = self.folds.len() as f64;
        let (mut mu0, mut mu1, mut pi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for f in &self.folds {
            for (acc, v) in [(&mut mu0, f.mu0.predict(x)?), (&mut mu1, f.mu1.predict(x)?), (&mut pi, f.pi.predict_proba(x)?)] {
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b / k;
                }
            }
        }
        NuisanceEstimates::new(mu0, mu1, pi)
    }
}

/// A content hash per row, keyed by `seed`; the row order sorted by it is
/// independent of how the input was ordered. Covariates enter through an
/// order-free sum so relabelling columns keeps the order, and the outcome only
/// breaks ties, so shifting `y` keeps it too.
pub(crate) fn canonical_order(data: &Dataset, seed: u64) -> Vec<usize> {
    let (n, d) = (data.n(), data.d());
    let salt = mix64(seed ^ 0x5eed_0f_c0de);
    let keys: Vec<u64> = (0..n)
        .map(|i| {
            let h = (0..d).fold(0u64, |acc, j| acc.wrapping_add(mix64(salt ^ data.x.get(i, j).to_bits())));
            mix64(h ^ salt.rotate_left(17) ^ u64::from(data.a[i]))
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &k| keys[i].cmp(&keys[k]).then(data.y[i].total_cmp(&data.y[k])).then(i.cmp(&k)));
    order
}

fn invert(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        inv[i] = pos;
    }
    inv
}

/// Checks that a k-fold split stratified on treatment leaves both arms in
/// every training portion.
pub fn check_crossfit_feasible(a: &[u8], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let treated = a.iter().filter(|&&v| v == 1).count();
    let control = a.len() - treated;
    if treated < k || control < k {
        return Err(Error::Stratification(format!(
            "{treated} treated and {control} control rows cannot fill {k} folds per arm"
        )));
    }
    Ok(())
}

/// Fits the nuisances on rows already in canonical order.
fn crossfit_ordered(
    data: &Dataset,
    k: usize,
    specs: &NuisanceSpecs,
    seed: u64,
) -> Result<(NuisanceEstimates, NuisanceModels)> {
    check_crossfit_feasible(&data.a, k)?;
    let folds = stratified_assignment(&data.a, k, derive_seed(seed, Stream::Folds, &[0xc7]));
    let fitted = (0..k)
        .into_par_iter()
        .map(|f| -> Result<FoldNuisance> {
            let train = fold_rows(&folds, f, false);
            let arm = |t: u8| -> Vec<usize> { train.iter().copied().filter(|&i| data.a[i] == t).collect() };
            let fit_arm = |t: u8| {
                let rows = arm(t);
                let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
                fit_regressor(&data.x.select_rows(&rows), &y, &specs.outcome, derive_seed(seed, Stream::Learner, &[f as u64, u64::from(t)]))
            };
            let a: Vec<u8> = train.iter().map(|&i| data.a[i]).collect();
            Ok(FoldNuisance {
                mu0: fit_arm(0)?,
                mu1: fit_arm(1)?,
                pi: fit_classifier(&data.x.select_rows(&train), &a, &specs.propensity, derive_seed(seed, Stream::Learner, &[f as u64, 2]))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = data.n();
    let (mut mu0, mut mu1, mut pi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (f, m) in fitted.iter().enumerate() {
        let rows = fold_rows(&folds, f, true);
        let xv = data.x.select_rows(&rows);
        for (dst, v) in [(&mut mu0, m.mu0.predict(&xv)?), (&mut mu1, m.mu1.predict(&xv)?), (&mut pi, m.pi.predict_proba(&xv)?)] {
            for (&i, p) in rows.iter().zip(v) {
                dst[i] = p;
            }
        }
    }
    let mut est = NuisanceEstimates::new(mu0, mu1, pi)?;
    est.fold_assignment = folds;
    Ok((est, NuisanceModels { folds: fitted }))
}

/// Out-of-fold nuisance estimates with k folds stratified on treatment.
pub fn fit_nuisances_crossfit(
    data: &Dataset,
    k: usize,
    specs: &NuisanceSpecs,
    seed: u64,
) -> Result<NuisanceEstimates> {
    specs.validate()?;
    let order = canonical_order(data, seed);
    let (est, _) = crossfit_ordered(&data.select_rows(&order), k, specs, seed)?;
    Ok(est.reorder(&invert(&order)))
}

/// `phi = (y - mu_a)(a - pi) / (pi (1 - pi)) + mu1 - mu0`.
pub fn pseudo_outcome(y: &[f64], a: &[u8], nuis: &NuisanceEstimates) -> Result<Vec<f64>> {
    check_len("treatment length", y.len(), a.len())?;
    check_len("nuisance length", y.len(), nuis.len())?;
    Ok((0..y.len())
        .map(|i| {
            let p = nuis.pi_hat[i];
            let t = f64::from(a[i]);
            let mu_a = if a[i] == 1 { nuis.mu1_hat[i] } else { nuis.mu0_hat[i] };
            (y[i] - mu_a) * (t - p) / (p * (1.0 - p)) + nuis.mu1_hat[i] - nuis.mu0_hat[i]
        })
        .collect())
}

/// Seed of the final-stage fit; LOCO's reduced fits reuse it so that their
/// internal CV folds match the full model's.
pub fn final_stage_seed(seed: u64) -> u64 {
    derive_seed(seed, Stream::Learner, &[u64::MAX])
}

#[derive(Debug, Clone)]
pub struct CateModel {
    pub final_regressor: FittedRegressor,
    pub specs: NuisanceSpecs,
    pub nuisance_models: NuisanceModels,
    pub folds: usize,
    pub seed: u64,
}

impl CateModel {
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        self.final_regressor.predict(x)
    }

    /// Nuisance predictions for new rows (the fold models averaged).
    pub fn transport_nuisances(&self, x: &DesignMatrix) -> Result<NuisanceEstimates> {
        self.nuisance_models.predict(x)
    }
}

/// Result of a DR-learner fit; `phi` and `nuisances` are in input row order.
#[derive(Debug, Clone)]
pub struct DrFit {
    pub model: CateModel,
    pub nuisances: NuisanceEstimates,
    pub phi: Vec<f64>,
    /// Row order the final stage was trained in (indices into the input).
    pub canonical_order: Vec<usize>,
}

pub fn fit_dr_learner(data: &Dataset, k: usize, specs: &NuisanceSpecs, seed: u64) -> Result<DrFit> {
    specs.validate()?;
    let order = canonical_order(data, seed);
    let canon = data.select_rows(&order);
    let (est, models) = crossfit_ordered(&canon, k, specs, seed)?;
    let phi = pseudo_outcome(&canon.y, &canon.a, &est)?;
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite pseudo-outcome".into()));
    }
    let final_regressor = fit_regressor(&canon.x, &phi, &specs.final_stage, final_stage_seed(seed))?;
    let inv = invert(&order);
    Ok(DrFit {
        model: CateModel {
            final_regressor,
            specs: specs.clone(),
            nuisance_models: models,
            folds: k,
            seed,
        },
        nuisances: est.reorder(&inv),
        phi: inv.iter().map(|&p| phi[p]).collect(),
        canonical_order: order,
    })
}

pub fn predict_cate(model: &CateModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Mean squared error of `tau_hat` against the oracle effect.
pub fn pehe(tau_hat: &[f64], data: &Dataset) -> Result<f64> {
    let tau = data.oracle()?.eval(&data.x, OracleQuantity::Tau);
    check_len("prediction length", tau.len(), tau_hat.len())?;
    Ok(tau.iter().zip(tau_hat).map(|(t, h)| (t - h) * (t - h)).sum::<f64>() / tau.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{sample, DgpSpec};

    #[test]
    fn pseudo_outcome_hand_values() {
        let nuis = NuisanceEstimates::new(vec![0.0], vec![1.0], vec![0.5]).unwrap();
        assert_eq!(pseudo_outcome(&[2.0], &[1], &nuis).unwrap(), vec![3.0]);
        let nuis = NuisanceEstimates::new(vec![0.3], vec![1.1], vec![0.2]).unwrap();
        assert!((pseudo_outcome(&[0.3], &[0], &nuis).unwrap()[0] - 0.8).abs() < 1e-15);
        assert!((pseudo_outcome(&[1.1], &[1], &nuis).unwrap()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn m_hat_and_clipping() {
        let nuis = NuisanceEstimates::new(vec![1.0, 1.0], vec![3.0, 3.0], vec![0.25, 1.0]).unwrap();
        assert_eq!(nuis.m_hat[0], 1.5);
        assert_eq!(nuis.pi_hat[1], 0.99);
    }

    #[test]
    fn folds_stratified_and_balanced() {
        let data = sample(&DgpSpec::ld(), 103, 1).unwrap();
        let est = fit_nuisances_crossfit(&data, 5, &NuisanceSpecs::linear(), 3).unwrap();
        let mut sizes = [0usize; 5];
        for &f in &est.fold_assignment {
            sizes[f] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(est.pi_hat.iter().all(|p| (0.01..=0.99).contains(p)));
    }

    #[test]
    fn infeasible_folds() {
        let x = DesignMatrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let mut a = vec![0u8; 10];
        a[0] = 1;
        a[1] = 1;
        let data = Dataset::new(x, a, vec![0.0; 10]).unwrap();
        assert!(matches!(
            fit_nuisances_crossfit(&data, 5, &NuisanceSpecs::linear(), 0),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn pehe_hand_values() {
        let data = sample(&DgpSpec::ld(), 20, 0).unwrap();
        let tau = crate::dgp::oracle_eval(&data, OracleQuantity::Tau).unwrap();
        assert_eq!(pehe(&tau, &data).unwrap(), 0.0);
        let shifted: Vec<f64> = tau.iter().map(|t| t + 1.0).collect();
        assert!((pehe(&shifted, &data).unwrap() - 1.0).abs() < 1e-12);
    }
}

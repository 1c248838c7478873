//! Stacked ensembles: out-of-fold level-0 predictions combined by
//! non-negative least squares, weights normalized to sum to one.

use nalgebra::DMatrix;

use super::{
    check_binary, clip_probability, fit_classifier, fit_regressor, ClassifierModel,
    FittedClassifier, FittedRegressor, LearnerSpec, RegressorModel,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::DesignMatrix;
use crate::rng::{derive_seed, fold_rows, kfold_assignment, stratified_assignment, Stream};

const STACK_FOLDS: usize = 5;

/// Non-negative least squares `min ||p w - y||^2, w >= 0` by cyclic projected
/// coordinate descent. Stops when no coordinate moves by more than `tol`.
pub fn nnls(p: &DMatrix<f64>, y: &[f64], tol: f64) -> Vec<f64> {
    let k = p.ncols();
    let gram = p.transpose() * p;
    let py: Vec<f64> = (0..k)
        .map(|j| p.column(j).iter().zip(y).map(|(a, b)| a * b).sum())
        .collect();
    let mut w = vec![0.0; k];
    for _ in 0..10_000 {
        let mut max_step: f64 = 0.0;
        for j in 0..k {
            let g = gram[(j, j)];
            if g <= 0.0 {
                continue;
            }
            let cross: f64 = (0..k).filter(|&l| l != j).map(|l| gram[(j, l)] * w[l]).sum();
            let next = ((py[j] - cross) / g).max(0.0);
            max_step = max_step.max((next - w[j]).abs());
            w[j] = next;
        }
        if max_step <= tol {
            break;
        }
    }
    w
}

/// Normalized NNLS weights; falls back to uniform weights when every weight is zero.
fn combine_weights(level0: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let w = nnls(level0, y, 1e-8);
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / w.len() as f64; w.len()]
    }
}

fn weighted(preds: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = preds[0].len();
    (0..n)
        .map(|i| preds.iter().zip(weights).map(|(p, w)| w * p[i]).sum())
        .collect()
}

#[derive(Debug, Clone)]
pub struct StackedRegressor {
    pub bases: Vec<FittedRegressor>,
    pub weights: Vec<f64>,
}

impl StackedRegressor {
    pub(crate) fn predict_unchecked(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        let preds = self
            .bases
            .iter()
            .map(|b| b.predict(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(weighted(&preds, &self.weights))
    }
}

#[derive(Debug, Clone)]
pub struct StackedClassifier {
    pub bases: Vec<FittedClassifier>,
    pub weights: Vec<f64>,
}

impl StackedClassifier {
    pub(crate) fn predict_unchecked(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        let preds = self
            .bases
            .iter()
            .map(|b| b.predict_proba(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(weighted(&preds, &self.weights)
            .into_iter()
            .map(clip_probability)
            .collect())
    }
}

fn check_bases(base: &[LearnerSpec]) -> Result<()> {
    if base.len() < 2 {
        return Err(Error::InvalidSpec("stacking needs at least two base learners".into()));
    }
    Ok(())
}

pub fn fit_stacked(
    x: &DesignMatrix,
    target: &[f64],
    base: &[LearnerSpec],
    seed: u64,
) -> Result<FittedRegressor> {
    check_bases(base)?;
    check_len("target length", x.nrows(), target.len())?;
    let n = x.nrows();
    let k = STACK_FOLDS.min(n);
    if k < 2 {
        return Err(Error::DegenerateInput("stacking needs at least two samples".into()));
    }
    let folds = kfold_assignment(n, k, derive_seed(seed, Stream::Folds, &[0x57ac]));
    let mut level0 = DMatrix::zeros(n, base.len());
    for f in 0..k {
        let train = fold_rows(&folds, f, false);
        let val = fold_rows(&folds, f, true);
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| target[i]).collect();
        let xv = x.select_rows(&val);
        for (b, spec) in base.iter().enumerate() {
            let m = fit_regressor(&xt, &yt, spec, derive_seed(seed, Stream::Learner, &[f as u64, b as u64]))?;
            for (&i, p) in val.iter().zip(m.predict(&xv)?) {
                level0[(i, b)] = p;
            }
        }
    }
    let weights = combine_weights(&level0, target);
    let bases = base
        .iter()
        .enumerate()
        .map(|(b, spec)| fit_regressor(x, target, spec, derive_seed(seed, Stream::Learner, &[u64::MAX, b as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedRegressor::new(
        LearnerSpec::stacked(base.to_vec()),
        x.ncols(),
        RegressorModel::Stacked(StackedRegressor { bases, weights }),
    ))
}

pub fn fit_stacked_classifier(
    x: &DesignMatrix,
    a: &[u8],
    base: &[LearnerSpec],
    seed: u64,
) -> Result<FittedClassifier> {
    check_bases(base)?;
    check_len("label length", x.nrows(), a.len())?;
    check_binary(a)?;
    let n = x.nrows();
    let minority = a.iter().filter(|&&v| v == 1).count().min(n - a.iter().filter(|&&v| v == 1).count());
    let k = STACK_FOLDS.min(minority);
    if k < 2 {
        return Err(Error::Stratification(
            "stacking needs at least two samples of each class".into(),
        ));
    }
    let folds = stratified_assignment(a, k, derive_seed(seed, Stream::Folds, &[0x57ac]));
    let mut level0 = DMatrix::zeros(n, base.len());
    for f in 0..k {
        let train = fold_rows(&folds, f, false);
        let val = fold_rows(&folds, f, true);
        let xt = x.select_rows(&train);
        let at: Vec<u8> = train.iter().map(|&i| a[i]).collect();
        let xv = x.select_rows(&val);
        for (b, spec) in base.iter().enumerate() {
            let m = fit_classifier(&xt, &at, spec, derive_seed(seed, Stream::Learner, &[f as u64, b as u64]))?;
            for (&i, p) in val.iter().zip(m.predict_proba(&xv)?) {
                level0[(i, b)] = p;
            }
        }
    }
    let target: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let weights = combine_weights(&level0, &target);
    let bases = base
        .iter()
        .enumerate()
        .map(|(b, spec)| fit_classifier(x, a, spec, derive_seed(seed, Stream::Learner, &[u64::MAX, b as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedClassifier::new(
        LearnerSpec::stacked(base.to_vec()),
        x.ncols(),
        ClassifierModel::Stacked(StackedClassifier { bases, weights }),
    ))
}

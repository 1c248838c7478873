//! L2-penalized logistic regression fitted by iteratively reweighted least
//! squares, with the penalty picked by stratified k-fold log-loss.
//!
//! The objective is `Σ log p(aᵢ | xᵢ) - λ/2 ‖β‖²`; the intercept is never
//! penalized. Each Newton step is damped by backtracking so the objective is
//! non-decreasing.

use nalgebra::{DMatrix, DVector};

use super::{check_binary, ClassifierModel, FittedClassifier, LearnerKind, LearnerSpec};
use crate::error::{check_len, Error, Result};
use crate::linalg::DesignMatrix;
use crate::rng::{fold_rows, stratified_assignment};
use crate::stats::expit;

const MAX_ITER: usize = 100;
const STEP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub penalty: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean validation log-loss per grid value (empty when no search ran).
    pub cv_log_loss: Vec<f64>,
}

impl LogisticModel {
    pub(crate) fn predict_unchecked(&self, x: &DesignMatrix) -> Vec<f64> {
        let m = x.matrix();
        let mut eta = vec![self.intercept; m.nrows()];
        for (j, &b) in self.coef.iter().enumerate() {
            for (e, &v) in eta.iter_mut().zip(m.column(j).iter()) {
                *e += b * v;
            }
        }
        eta.into_iter().map(expit).collect()
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Design with a leading column of ones.
fn augmented(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

fn objective(xa: &DMatrix<f64>, a: &[f64], theta: &DVector<f64>, lambda: f64) -> f64 {
    let eta = xa * theta;
    let ll: f64 = eta.iter().zip(a).map(|(&e, &t)| t * e - softplus(e)).sum();
    let pen: f64 = theta.iter().skip(1).map(|b| b * b).sum();
    ll - 0.5 * lambda * pen
}

struct Irls {
    theta: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn irls(xa: &DMatrix<f64>, a: &[f64], lambda: f64, start: DVector<f64>) -> Result<Irls> {
    let p = xa.ncols();
    let mut theta = start;
    let mut obj = objective(xa, a, &theta, lambda);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let eta = xa * &theta;
        let prob: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid = DVector::from_iterator(a.len(), a.iter().zip(&prob).map(|(t, q)| t - q));
        let mut grad = xa.tr_mul(&resid);
        for k in 1..p {
            grad[k] -= lambda * theta[k];
        }
        let w: Vec<f64> = prob.iter().map(|q| (q * (1.0 - q)).max(1e-12).sqrt()).collect();
        let mut xw = xa.clone();
        for mut col in xw.column_iter_mut() {
            for (v, wi) in col.iter_mut().zip(&w) {
                *v *= wi;
            }
        }
        let mut h = xw.tr_mul(&xw);
        for k in 1..p {
            h[(k, k)] += lambda;
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                for k in 0..p {
                    h[(k, k)] += 1e-10;
                }
                h.cholesky()
                    .ok_or_else(|| Error::Numeric("logistic Hessian is singular".into()))?
                    .solve(&grad)
            }
        };
        let mut t = 1.0;
        let mut next = &theta + &step * t;
        let mut next_obj = objective(xa, a, &next, lambda);
        while next_obj < obj && t > 1e-10 {
            t *= 0.5;
            next = &theta + &step * t;
            next_obj = objective(xa, a, &next, lambda);
        }
        if next_obj < obj {
            // no ascent direction left at machine precision
            converged = true;
            break;
        }
        let max_update = (&step * t).amax();
        theta = next;
        obj = next_obj;
        if !obj.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("logistic regression diverged".into()));
        }
        if max_update < STEP_TOL {
            converged = true;
            break;
        }
    }
    Ok(Irls {
        theta,
        iterations,
        converged,
    })
}

fn to_model(fit: Irls, lambda: f64, cv_log_loss: Vec<f64>) -> LogisticModel {
    LogisticModel {
        intercept: fit.theta[0],
        coef: fit.theta.iter().skip(1).copied().collect(),
        penalty: lambda,
        iterations: fit.iterations,
        converged: fit.converged,
        cv_log_loss,
    }
}

/// Logistic regression at a fixed penalty.
pub fn fit_logistic_fixed(x: &DesignMatrix, a: &[u8], penalty: f64) -> Result<LogisticModel> {
    check_len("label length", x.nrows(), a.len())?;
    check_binary(a)?;
    if !(penalty > 0.0) {
        return Err(Error::InvalidArgument("penalty must be positive".into()));
    }
    let xa = augmented(x.matrix());
    let t: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let fit = irls(&xa, &t, penalty, DVector::zeros(xa.ncols()))?;
    Ok(to_model(fit, penalty, Vec::new()))
}

fn log_loss(xa: &DMatrix<f64>, a: &[f64], theta: &DVector<f64>) -> f64 {
    let eta = xa * theta;
    eta.iter()
        .zip(a)
        .map(|(&e, &t)| softplus(e) - t * e)
        .sum()
}

/// Cross-validated L2 logistic regression.
pub fn fit_logistic_cv(
    x: &DesignMatrix,
    a: &[u8],
    spec: &LearnerSpec,
    seed: u64,
) -> Result<FittedClassifier> {
    if spec.kind != LearnerKind::LogisticCv {
        return Err(Error::InvalidSpec(format!("expected logistic_cv, got {:?}", spec.kind)));
    }
    spec.validate()?;
    check_len("label length", x.nrows(), a.len())?;
    check_binary(a)?;
    let xa = augmented(x.matrix());
    let t: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let grid = &spec.penalty_grid;

    let ones = a.iter().filter(|&&v| v == 1).count();
    let minority = ones.min(a.len() - ones);
    let k = spec.cv_folds.min(minority);
    let mut cv_log_loss = Vec::new();
    let lambda = if grid.len() == 1 {
        grid[0]
    } else if k < 2 {
        grid[grid.len() / 2]
    } else {
        let assign = stratified_assignment(a, k, seed);
        let mut total = vec![0.0; grid.len()];
        for f in 0..k {
            let tr = fold_rows(&assign, f, false);
            let va = fold_rows(&assign, f, true);
            let xtr = xa.select_rows(&tr);
            let ttr: Vec<f64> = tr.iter().map(|&i| t[i]).collect();
            let xva = xa.select_rows(&va);
            let tva: Vec<f64> = va.iter().map(|&i| t[i]).collect();
            // strongest penalty first, each fit warm-started from the previous
            let mut theta = DVector::zeros(xa.ncols());
            for (gi, &lam) in grid.iter().enumerate().rev() {
                let fit = irls(&xtr, &ttr, lam, theta)?;
                total[gi] += log_loss(&xva, &tva, &fit.theta);
                theta = fit.theta;
            }
        }
        cv_log_loss = total.iter().map(|v| v / a.len() as f64).collect();
        let mut best = 0;
        for (i, &v) in cv_log_loss.iter().enumerate() {
            if v < cv_log_loss[best] {
                best = i;
            }
        }
        grid[best]
    };
    let fit = irls(&xa, &t, lambda, DVector::zeros(xa.ncols()))?;
    Ok(FittedClassifier::new(
        spec.clone(),
        x.ncols(),
        ClassifierModel::Logistic(to_model(fit, lambda, cv_log_loss)),
    ))
}

//! Ridge regression with an unpenalized intercept and k-fold penalty search.
//!
//! Cross-validation works on centered Gram matrices: each training fold is
//! centered by its own means, and the validation rows by the same training
//! means, so the validation error of any `(feature subset, target column,
//! penalty)` triple is a quadratic form in the fold Grams. One [`GramCv`]
//! therefore serves many related problems, e.g. every conditional model
//! `X^j ~ X^{-j}` or every reduced final-stage fit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{FittedRegressor, LearnerKind, LearnerSpec, RegressorModel};
use crate::error::{check_len, Error, Result};
use crate::linalg::{spd_solve, DesignMatrix};
use crate::rng::{fold_rows, kfold_assignment};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub penalty: f64,
    /// Mean validation MSE per grid value (empty when no search ran).
    pub cv_mse: Vec<f64>,
}

impl RidgeModel {
    pub(crate) fn predict_unchecked(&self, x: &DesignMatrix) -> Vec<f64> {
        let m = x.matrix();
        let mut out = vec![self.intercept; m.nrows()];
        for (j, &b) in self.coef.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(m.column(j).iter()) {
                *o += b * v;
            }
        }
        out
    }
}

struct FoldGram {
    train: DMatrix<f64>,
    val: DMatrix<f64>,
}

/// Centered Gram matrices of a data block `Z`, overall and per CV fold.
pub(crate) struct GramCv {
    full: DMatrix<f64>,
    means: DVector<f64>,
    folds: Vec<FoldGram>,
    n_rows: usize,
}

fn centered(z: &DMatrix<f64>, rows: &[usize], means: &DVector<f64>) -> DMatrix<f64> {
    let mut sub = z.select_rows(rows);
    for (j, mut col) in sub.column_iter_mut().enumerate() {
        let m = means[j];
        for v in col.iter_mut() {
            *v -= m;
        }
    }
    sub
}

fn column_means(z: &DMatrix<f64>, rows: &[usize]) -> DVector<f64> {
    let inv = 1.0 / rows.len() as f64;
    DVector::from_iterator(
        z.ncols(),
        z.column_iter()
            .map(|c| rows.iter().map(|&i| c[i]).sum::<f64>() * inv),
    )
}

impl GramCv {
    /// Prepares Grams for `z` with `cv_folds`-fold splitting (capped at the
    /// sample count). With `search = false` only the full Gram is built.
    pub(crate) fn new(z: &DMatrix<f64>, cv_folds: usize, seed: u64, search: bool) -> Self {
        let n = z.nrows();
        let all: Vec<usize> = (0..n).collect();
        let means = column_means(z, &all);
        let zc = centered(z, &all, &means);
        let full = zc.tr_mul(&zc);
        let k = cv_folds.min(n);
        let folds = if search && k >= 2 {
            let assign = kfold_assignment(n, k, seed);
            (0..k)
                .map(|f| {
                    let tr = fold_rows(&assign, f, false);
                    let va = fold_rows(&assign, f, true);
                    let m = column_means(z, &tr);
                    let ztr = centered(z, &tr, &m);
                    let zva = centered(z, &va, &m);
                    FoldGram {
                        train: ztr.tr_mul(&ztr),
                        val: zva.tr_mul(&zva),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            full,
            means,
            folds,
            n_rows: n,
        }
    }

    /// Ridge of column `target` on columns `features`, penalty chosen from
    /// `grid` by validation MSE (first minimum wins on ties).
    pub(crate) fn fit(&self, features: &[usize], target: usize, grid: &[f64]) -> Result<RidgeModel> {
        let mut cv_mse = Vec::new();
        let penalty = if grid.len() == 1 || self.folds.is_empty() {
            grid[0]
        } else {
            let mut sse = vec![0.0; grid.len()];
            for fold in &self.folds {
                self.fold_sse(fold, features, target, grid, &mut sse);
            }
            // every row is validated exactly once
            let n = self.n_rows as f64;
            cv_mse = sse.iter().map(|s| s / n).collect();
            let mut best = 0;
            for (i, &v) in cv_mse.iter().enumerate() {
                if v < cv_mse[best] {
                    best = i;
                }
            }
            grid[best]
        };
        let coef = self.solve_full(features, target, penalty)?;
        let intercept = self.means[target]
            - features
                .iter()
                .zip(&coef)
                .map(|(&f, &b)| self.means[f] * b)
                .sum::<f64>();
        Ok(RidgeModel {
            intercept,
            coef,
            penalty,
            cv_mse,
        })
    }

    fn fold_sse(
        &self,
        fold: &FoldGram,
        features: &[usize],
        target: usize,
        grid: &[f64],
        sse: &mut [f64],
    ) {
        let vtt = fold.val[(target, target)];
        if features.is_empty() {
            for s in sse.iter_mut() {
                *s += vtt;
            }
            return;
        }
        let a = fold.train.select_rows(features).select_columns(features);
        let b = DVector::from_iterator(features.len(), features.iter().map(|&f| fold.train[(f, target)]));
        let vff = fold.val.select_rows(features).select_columns(features);
        let vft = DVector::from_iterator(features.len(), features.iter().map(|&f| fold.val[(f, target)]));
        let eig = SymmetricEigen::new(a);
        let bt = eig.eigenvectors.tr_mul(&b);
        for (s, &lam) in sse.iter_mut().zip(grid) {
            let scaled = DVector::from_iterator(
                bt.len(),
                bt.iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(&v, &e)| v / (e.max(0.0) + lam)),
            );
            let beta = &eig.eigenvectors * scaled;
            let quad = beta.dot(&(&vff * &beta));
            *s += vtt - 2.0 * beta.dot(&vft) + quad;
        }
    }

    /// One model per column `j` of `features`, each fitted on the remaining
    /// features. With `target = None` column `j` itself is the response
    /// (conditional models); otherwise `target` is regressed on the rest
    /// (leave-one-covariate-out fits). Equivalent to calling [`GramCv::fit`]
    /// per `j`, but reuses one inverse `M = (G_FF + λI)^-1` per fold and
    /// penalty: the conditional fit is `-M[-j, j] / M[j, j]` and the reduced
    /// fit is `β[-j] - M[-j, j] β[j] / M[j, j]`.
    pub(crate) fn fit_drop_each(
        &self,
        features: &[usize],
        target: Option<usize>,
        grid: &[f64],
    ) -> Result<Vec<RidgeModel>> {
        let p = features.len();
        let search = grid.len() > 1 && !self.folds.is_empty();
        let mut sse = vec![vec![0.0; grid.len()]; p];
        if search {
            for fold in &self.folds {
                let g = fold.train.select_rows(features).select_columns(features);
                let eig = SymmetricEigen::new(g);
                let v = fold.val.select_rows(features).select_columns(features);
                let gt = target.map(|t| self.column_of(&fold.train, features, t));
                let vt = target.map(|t| (fold.val[(t, t)], self.column_of(&fold.val, features, t)));
                for (l, &lam) in grid.iter().enumerate() {
                    let m = eig_inverse(&eig, lam);
                    let c = drop_each_coefs(&m, gt.as_ref());
                    let vc = &v * &c;
                    for j in 0..p {
                        let quad = c.column(j).dot(&vc.column(j));
                        sse[j][l] += match &vt {
                            // residual is Σ w_k z_k with w = -c, w_j = 1
                            None => quad,
                            Some((vtt, vft)) => vtt - 2.0 * c.column(j).dot(vft) + quad,
                        };
                    }
                }
            }
        }
        let n = self.n_rows as f64;
        let mut picks = Vec::with_capacity(p);
        for row in &sse {
            let cv: Vec<f64> = if search { row.iter().map(|s| s / n).collect() } else { Vec::new() };
            let mut best = 0;
            for (i, &v) in cv.iter().enumerate() {
                if v < cv[best] {
                    best = i;
                }
            }
            picks.push((best, cv));
        }
        let g = self.full.select_rows(features).select_columns(features);
        let gt = target.map(|t| self.column_of(&self.full, features, t));
        let mut coefs: Vec<Option<DMatrix<f64>>> = vec![None; grid.len()];
        let mut out = Vec::with_capacity(p);
        for (j, (best, cv_mse)) in picks.into_iter().enumerate() {
            if coefs[best].is_none() {
                let mut a = g.clone();
                for i in 0..p {
                    a[(i, i)] += grid[best];
                }
                let m = a
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?
                    .inverse();
                coefs[best] = Some(drop_each_coefs(&m, gt.as_ref()));
            }
            let c = coefs[best].as_ref().expect("filled above");
            let sign = if target.is_some() { 1.0 } else { -1.0 };
            let coef: Vec<f64> = (0..p).filter(|&k| k != j).map(|k| sign * c[(k, j)]).collect();
            if coef.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("ridge solution is not finite".into()));
            }
            let t = target.unwrap_or(features[j]);
            let intercept = self.means[t]
                - features
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .zip(&coef)
                    .map(|((_, &f), &b)| self.means[f] * b)
                    .sum::<f64>();
            out.push(RidgeModel {
                intercept,
                coef,
                penalty: grid[best],
                cv_mse,
            });
        }
        Ok(out)
    }

    fn column_of(&self, g: &DMatrix<f64>, features: &[usize], t: usize) -> DVector<f64> {
        DVector::from_iterator(features.len(), features.iter().map(|&f| g[(f, t)]))
    }

    fn solve_full(&self, features: &[usize], target: usize, penalty: f64) -> Result<Vec<f64>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let mut a = self.full.select_rows(features).select_columns(features);
        for i in 0..features.len() {
            a[(i, i)] += penalty;
        }
        let b = DVector::from_iterator(features.len(), features.iter().map(|&f| self.full[(f, target)]));
        let beta = spd_solve(a, &b)?;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("ridge solution is not finite".into()));
        }
        Ok(beta.iter().copied().collect())
    }
}

fn eig_inverse(eig: &SymmetricEigen<f64, nalgebra::Dyn>, lam: f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (mut col, &e) in scaled.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col /= e.max(0.0) + lam;
    }
    scaled * q.transpose()
}

/// Column `j` holds the drop-`j` coefficients over all `p` slots (slot `j`
/// is zero for reduced fits). Without a target, column `j` is
/// `M[:, j] / M[j, j]`, i.e. the negated conditional fit with slot `j` = 1.
fn drop_each_coefs(m: &DMatrix<f64>, target: Option<&DVector<f64>>) -> DMatrix<f64> {
    let p = m.nrows();
    match target {
        None => {
            let mut w = m.clone();
            for (j, mut col) in w.column_iter_mut().enumerate() {
                col /= m[(j, j)];
            }
            w
        }
        Some(b) => {
            let beta = m * b;
            DMatrix::from_fn(p, p, |k, j| beta[k] - m[(k, j)] * beta[j] / m[(j, j)])
        }
    }
}

/// Cross-validated ridge regression of `y` on `x`.
pub fn fit_ridge_cv(
    x: &DesignMatrix,
    y: &[f64],
    spec: &LearnerSpec,
    seed: u64,
) -> Result<FittedRegressor> {
    if spec.kind != LearnerKind::RidgeCv {
        return Err(Error::InvalidSpec(format!("expected ridge_cv, got {:?}", spec.kind)));
    }
    spec.validate()?;
    check_len("target length", x.nrows(), y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite target".into()));
    }
    let d = x.ncols();
    let mut z = x.matrix().clone().insert_column(d, 0.0);
    z.column_mut(d).copy_from_slice(y);
    let gram = GramCv::new(&z, spec.cv_folds, seed, spec.penalty_grid.len() > 1);
    let features: Vec<usize> = (0..d).collect();
    let model = gram.fit(&features, d, &spec.penalty_grid)?;
    Ok(FittedRegressor::new(spec.clone(), d, RegressorModel::Ridge(model)))
}

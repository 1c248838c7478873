//! Nested cross-fitting, Wald statistics and detection accounting.
//!
//! For every seed the data are split into `outer_folds` folds stratified on
//! treatment. Each fold serves once as the evaluation split. The DR-learner,
//! with `inner_folds` cross-fitting, is trained on the remaining folds and
//! importances are scored on the held-out one.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cate::{fit_dr_learner, NuisanceSpecs};
use crate::dgp::{sample, Dataset, DgpSpec};
use crate::error::{Error, Result};
use crate::importance::{
    fit_conditional_models, linear_diagnostics, loco_reduced_models, loco_scores, permucate,
    LinearDiagnostics, Method,
};
use crate::learners::LearnerSpec;
use crate::risks::{RiskContext, RiskKind};
use crate::rng::{derive_seed, fold_rows, stratified_assignment, Stream};
use crate::stats::{mean, normal_sf, std_dev};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossfitPlan {
    /// Must equal `1 / outer_folds`: every fold is held out once.
    pub outer_frac_heldout: f64,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub n_seeds: usize,
    pub alpha: f64,
}

impl Default for CrossfitPlan {
    fn default() -> Self {
        Self {
            outer_frac_heldout: 0.2,
            outer_folds: 5,
            inner_folds: 5,
            n_seeds: 10,
            alpha: 0.05,
        }
    }
}

impl CrossfitPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return bad("outer_folds and inner_folds must be at least 2".into());
        }
        if !(self.outer_frac_heldout > 0.0 && self.outer_frac_heldout < 1.0) {
            return bad(format!("outer_frac_heldout = {} must lie in (0, 1)", self.outer_frac_heldout));
        }
        if (self.outer_frac_heldout * self.outer_folds as f64 - 1.0).abs() > 1e-9 {
            return bad(format!(
                "outer_frac_heldout = {} is inconsistent with {} rotating outer folds",
                self.outer_frac_heldout, self.outer_folds
            ));
        }
        if self.n_seeds < 1 {
            return bad("n_seeds must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        Ok(())
    }
}

/// Where each seed's data come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// One dataset; seeds change the splits and learners only.
    Fixed(Dataset),
    /// A fresh draw of `n` rows per seed.
    Simulated { spec: DgpSpec, n: usize },
}

impl DataSource {
    fn draw(&self, master_seed: u64, seed: usize) -> Result<Dataset> {
        match self {
            DataSource::Fixed(d) => Ok(d.clone()),
            DataSource::Simulated { spec, n } => {
                sample(spec, *n, derive_seed(master_seed, Stream::Dataset, &[seed as u64]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceOptions {
    pub methods: Vec<Method>,
    /// Every method is scored under each risk, on identical splits.
    pub risks: Vec<RiskKind>,
    pub n_permutations: usize,
    pub specs: NuisanceSpecs,
    pub conditional: LearnerSpec,
    /// Attach linear diagnostics (requires linear final stages).
    pub diagnostics: bool,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::Permucate, Method::Loco],
            risks: vec![RiskKind::PoRisk],
            n_permutations: 50,
            specs: NuisanceSpecs::linear(),
            conditional: LearnerSpec::ridge_cv(),
            diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub method: Method,
    pub risk: RiskKind,
    pub variable: usize,
    pub seed: usize,
    pub fold: usize,
    pub psi: f64,
    pub risk_full: f64,
    pub diagnostics: Option<LinearDiagnostics>,
    pub degenerate: bool,
}

/// Mean, spread and test decision for one (method, risk, variable) group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub risk: RiskKind,
    pub variable: usize,
    pub count: usize,
    pub mean_psi: f64,
    pub std_psi: f64,
    pub wald: f64,
    pub p_value: f64,
    pub decision: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportanceTable {
    /// Sorted by (method, risk, variable, seed, fold).
    pub rows: Vec<ImportanceRow>,
}

const Z_CAP: f64 = 1e6;

/// One-sided Wald test of a positive mean: `z = mean / sd` (ddof 1) and
/// `p = 1 - Phi(z)`. A spread below 1e-12 caps `|z|` at 1e6.
pub fn wald_statistic(psis: &[f64]) -> Result<(f64, f64)> {
    if psis.len() < 2 {
        return Err(Error::InvalidArgument("the Wald statistic needs at least two values".into()));
    }
    let m = mean(psis);
    let s = std_dev(psis, 1);
    let z = if s < 1e-12 {
        if m == 0.0 {
            0.0
        } else {
            Z_CAP.copysign(m)
        }
    } else {
        m / s
    };
    Ok((z, normal_sf(z)))
}

type GroupKey = (Method, RiskKind, usize);

impl ImportanceTable {
    pub fn new(mut rows: Vec<ImportanceRow>) -> Self {
        rows.sort_by_key(|r| (r.method, r.risk, r.variable, r.seed, r.fold));
        Self { rows }
    }

    fn groups(&self) -> BTreeMap<GroupKey, Vec<&ImportanceRow>> {
        let mut g: BTreeMap<GroupKey, Vec<&ImportanceRow>> = BTreeMap::new();
        for r in &self.rows {
            g.entry((r.method, r.risk, r.variable)).or_default().push(r);
        }
        g
    }

    /// Pooled fold x seed aggregates per (method, risk, variable).
    pub fn aggregates(&self, alpha: f64) -> Vec<Aggregate> {
        self.groups()
            .into_iter()
            .map(|((method, risk, variable), rows)| {
                let psis: Vec<f64> = rows.iter().map(|r| r.psi).collect();
                let (wald, p_value) = wald_statistic(&psis).unwrap_or((f64::NAN, f64::NAN));
                Aggregate {
                    method,
                    risk,
                    variable,
                    count: psis.len(),
                    mean_psi: mean(&psis),
                    std_psi: if psis.len() > 1 { std_dev(&psis, 1) } else { f64::NAN },
                    wald,
                    p_value,
                    decision: p_value < alpha,
                }
            })
            .collect()
    }

    pub fn aggregate(&self, method: Method, risk: RiskKind, variable: usize, alpha: f64) -> Option<Aggregate> {
        self.aggregates(alpha)
            .into_iter()
            .find(|a| a.method == method && a.risk == risk && a.variable == variable)
    }

    /// Per-seed decisions: the Wald test over that seed's folds only.
    pub fn seed_decisions(&self, alpha: f64) -> BTreeMap<GroupKey, Vec<bool>> {
        self.groups()
            .into_iter()
            .map(|((method, risk, variable), rows)| {
                let mut by_seed: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for r in rows {
                    by_seed.entry(r.seed).or_default().push(r.psi);
                }
                let d = by_seed
                    .values()
                    .map(|p| wald_statistic(p).map(|(_, pv)| pv < alpha).unwrap_or(false))
                    .collect();
                ((method, risk, variable), d)
            })
            .collect()
    }

    /// Mean psi per variable for one (method, risk).
    pub fn mean_psi(&self, method: Method, risk: RiskKind) -> Vec<(usize, f64)> {
        self.aggregates(0.05)
            .into_iter()
            .filter(|a| a.method == method && a.risk == risk)
            .map(|a| (a.variable, a.mean_psi))
            .collect()
    }
}

/// Detection rates for one (method, risk).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSummary {
    pub method: Method,
    pub risk: RiskKind,
    /// Fraction of (seed, important variable) pairs detected.
    pub tp_rate: f64,
    pub fn_rate: f64,
    /// Fraction of (seed, null variable) pairs flagged.
    pub type1_rate: f64,
    pub important_trials: usize,
    pub null_trials: usize,
}

/// Detection accounting against the true important set, using per-seed decisions.
pub fn power_accounting(table: &ImportanceTable, important: &[usize], alpha: f64) -> Result<Vec<PowerSummary>> {
    let decisions = table.seed_decisions(alpha);
    if decisions.is_empty() {
        return Err(Error::InvalidArgument("empty importance table".into()));
    }
    let mut acc: BTreeMap<(Method, RiskKind), [usize; 4]> = BTreeMap::new();
    for ((method, risk, variable), d) in &decisions {
        let e = acc.entry((*method, *risk)).or_insert([0; 4]);
        let hits = d.iter().filter(|&&v| v).count();
        if important.contains(variable) {
            e[0] += hits;
            e[1] += d.len();
        } else {
            e[2] += hits;
            e[3] += d.len();
        }
    }
    Ok(acc
        .into_iter()
        .map(|((method, risk), c)| {
            let rate = |h: usize, t: usize| if t == 0 { f64::NAN } else { h as f64 / t as f64 };
            let tp = rate(c[0], c[1]);
            PowerSummary {
                method,
                risk,
                tp_rate: tp,
                fn_rate: 1.0 - tp,
                type1_rate: rate(c[2], c[3]),
                important_trials: c[1],
                null_trials: c[3],
            }
        })
        .collect())
}

/// Smallest n at which more than half of the seeds detect the variable.
pub fn min_detect_n(
    sweep: &[(usize, ImportanceTable)],
    method: Method,
    risk: RiskKind,
    variable: usize,
    alpha: f64,
) -> Option<usize> {
    let mut ns: Vec<&(usize, ImportanceTable)> = sweep.iter().collect();
    ns.sort_by_key(|(n, _)| *n);
    ns.into_iter().find_map(|(n, t)| {
        let d = t.seed_decisions(alpha);
        let v = d.get(&(method, risk, variable))?;
        (2 * v.iter().filter(|&&x| x).count() > v.len()).then_some(*n)
    })
}

/// Rows of one (seed, outer fold) evaluation.
fn evaluate_split(
    data: &Dataset,
    folds: &[usize],
    fold: usize,
    seed: usize,
    plan: &CrossfitPlan,
    opts: &ImportanceOptions,
    master_seed: u64,
) -> Result<Vec<ImportanceRow>> {
    let train = data.select_rows(&fold_rows(folds, fold, false));
    let test = data.select_rows(&fold_rows(folds, fold, true));
    let key = [seed as u64, fold as u64];
    let fit = fit_dr_learner(&train, plan.inner_folds, &opts.specs, derive_seed(master_seed, Stream::Learner, &key))?;
    let ctx_nuis = fit.model.transport_nuisances(&test.x)?;
    let want_perm = opts.methods.contains(&Method::Permucate);
    let want_loco = opts.methods.contains(&Method::Loco);
    let cond = if want_perm || opts.diagnostics {
        Some(fit_conditional_models(&train.x, &opts.conditional, derive_seed(master_seed, Stream::Learner, &[seed as u64, fold as u64, 1]))?)
    } else {
        None
    };
    let reduced = if want_loco || opts.diagnostics {
        Some(loco_reduced_models(&fit, &train)?)
    } else {
        None
    };
    let diags = if opts.diagnostics {
        Some(linear_diagnostics(
            &fit.model.final_regressor,
            reduced.as_deref().expect("computed above"),
            cond.as_deref().expect("computed above"),
            &test.x,
        )?)
    } else {
        None
    };
    let train_constant: Vec<bool> = (0..data.d())
        .map(|j| {
            let c = train.x.column(j);
            c.iter().all(|&v| v == c[0])
        })
        .collect();
    let ctx = RiskContext::new(&test, ctx_nuis)?;
    let mut rows = Vec::new();
    for &risk in &opts.risks {
        let mut est = Vec::new();
        if want_perm {
            est.extend(permucate(
                &fit.model,
                &ctx,
                &test.x,
                cond.as_deref().expect("computed above"),
                opts.n_permutations,
                risk,
                derive_seed(master_seed, Stream::Permutation, &key),
            )?);
        }
        if want_loco {
            let mut l = loco_scores(&fit.model, reduced.as_deref().expect("computed above"), &ctx, &test.x, risk)?;
            for e in &mut l {
                if train_constant[e.j] {
                    e.psi = 0.0;
                    e.degenerate = true;
                }
            }
            est.extend(l);
        }
        rows.extend(est.into_iter().map(|e| ImportanceRow {
            method: e.method,
            risk,
            variable: e.j,
            seed,
            fold,
            psi: e.psi,
            risk_full: e.risk_full,
            diagnostics: diags.as_ref().map(|d| d[e.j]),
            degenerate: e.degenerate,
        }));
    }
    Ok(rows)
}

fn outer_folds(data: &Dataset, plan: &CrossfitPlan, master_seed: u64, seed: usize) -> Result<Vec<usize>> {
    let k = plan.outer_folds;
    let treated = data.treated_count();
    let control = data.n() - treated;
    // each training portion must still support the inner cross-fitting
    let need = |arm: usize| arm - arm.div_ceil(k) >= plan.inner_folds;
    if treated < k || control < k || !need(treated) || !need(control) {
        return Err(Error::Stratification(format!(
            "{treated} treated and {control} control rows are too few for {k} outer x {} inner folds",
            plan.inner_folds
        )));
    }
    let order = crate::cate::canonical_order(data, master_seed);
    let a: Vec<u8> = order.iter().map(|&i| data.a[i]).collect();
    let canon = stratified_assignment(&a, k, derive_seed(master_seed, Stream::Folds, &[seed as u64]));
    let mut folds = vec![0; data.n()];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = canon[pos];
    }
    Ok(folds)
}

/// Rows of a single seed (all outer folds).
pub fn run_seed(
    source: &DataSource,
    plan: &CrossfitPlan,
    opts: &ImportanceOptions,
    master_seed: u64,
    seed: usize,
) -> Result<Vec<ImportanceRow>> {
    plan.validate()?;
    let data = source.draw(master_seed, seed)?;
    let folds = outer_folds(&data, plan, master_seed, seed)?;
    let per_fold = (0..plan.outer_folds)
        .into_par_iter()
        .map(|f| evaluate_split(&data, &folds, f, seed, plan, opts, master_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_fold.into_iter().flatten().collect())
}

/// Every seed of the plan; the table is independent of scheduling.
pub fn run_crossfit_importance(
    source: &DataSource,
    plan: &CrossfitPlan,
    opts: &ImportanceOptions,
    master_seed: u64,
) -> Result<ImportanceTable> {
    plan.validate()?;
    opts.specs.validate()?;
    if opts.methods.is_empty() || opts.risks.is_empty() {
        return Err(Error::InvalidArgument("at least one method and one risk are required".into()));
    }
    let rows = (0..plan.n_seeds)
        .into_par_iter()
        .map(|s| run_seed(source, plan, opts, master_seed, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceTable::new(rows.into_iter().flatten().collect()))
}

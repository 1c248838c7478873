//! Per-(cell, method, risk, variable) summaries of result rows.
//!
//! Aggregation goes through the library's [`ImportanceTable`] and
//! [`power_accounting`], so the numbers here are the ones the inference code
//! reports.

use std::collections::BTreeMap;

use permucate::inference::{power_accounting, ImportanceRow, ImportanceTable};
use permucate::{Method, RiskKind};

use crate::config::Experiment;
use crate::dataset::fmt_float;
use crate::error::{BenchError, Result};
use crate::results::ResultRow;

pub const SUMMARY_HEADER: [&str; 17] = [
    "experiment",
    "dgp",
    "d",
    "n",
    "method",
    "risk_kind",
    "variable",
    "count",
    "mean_psi",
    "std_psi",
    "wald",
    "p_value",
    "detection_rate",
    "important",
    "tp_rate",
    "fn_rate",
    "type1_rate",
];

/// True important variables per (dgp name, d); cells without an entry get
/// empty truth columns.
pub type Truth = BTreeMap<(String, usize), Vec<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: Experiment,
    pub dgp: String,
    pub d: usize,
    pub n: usize,
    pub method: Method,
    pub risk: RiskKind,
    pub variable: usize,
    pub count: usize,
    pub mean_psi: f64,
    /// `None` for a single measurement.
    pub std_psi: Option<f64>,
    pub wald: Option<f64>,
    pub p_value: Option<f64>,
    /// Fraction of seeds whose per-seed Wald test rejects.
    pub detection_rate: f64,
    pub important: Option<bool>,
    pub tp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub type1_rate: Option<f64>,
}

type Cell = (Experiment, String, usize, usize);

pub fn summarize(rows: &[ResultRow], alpha: f64, truth: &Truth) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(BenchError::Data("no result rows to summarize".into()));
    }
    let mut cells: BTreeMap<Cell, Vec<ImportanceRow>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.experiment, r.dgp.clone(), r.d, r.n))
            .or_default()
            .push(ImportanceRow {
                method: r.method,
                risk: r.risk,
                variable: r.variable,
                seed: r.seed,
                fold: r.fold,
                psi: r.psi,
                risk_full: f64::NAN,
                diagnostics: None,
                degenerate: false,
            });
    }
    let mut out = Vec::new();
    for ((experiment, dgp, d, n), rows) in cells {
        let table = ImportanceTable::new(rows);
        let decisions = table.seed_decisions(alpha);
        let important = truth.get(&(dgp.clone(), d));
        let power = match important {
            Some(imp) => power_accounting(&table, imp, alpha)?,
            None => Vec::new(),
        };
        let finite = |v: f64| v.is_finite().then_some(v);
        for a in table.aggregates(alpha) {
            let seeds = &decisions[&(a.method, a.risk, a.variable)];
            let p = power.iter().find(|p| p.method == a.method && p.risk == a.risk);
            out.push(SummaryRow {
                experiment,
                dgp: dgp.clone(),
                d,
                n,
                method: a.method,
                risk: a.risk,
                variable: a.variable,
                count: a.count,
                mean_psi: a.mean_psi,
                std_psi: finite(a.std_psi),
                wald: finite(a.wald),
                p_value: finite(a.p_value),
                detection_rate: seeds.iter().filter(|&&v| v).count() as f64 / seeds.len() as f64,
                important: important.map(|imp| imp.contains(&a.variable)),
                tp_rate: p.and_then(|p| finite(p.tp_rate)),
                fn_rate: p.and_then(|p| finite(p.fn_rate)),
                type1_rate: p.and_then(|p| finite(p.type1_rate)),
            });
        }
    }
    Ok(out)
}

pub fn write_summary(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.experiment.name().to_string(),
            r.dgp.clone(),
            r.d.to_string(),
            r.n.to_string(),
            r.method.name().to_string(),
            r.risk.name().to_string(),
            format!("x{}", r.variable + 1),
            r.count.to_string(),
            fmt_float(r.mean_psi),
            opt(r.std_psi),
            opt(r.wald),
            opt(r.p_value),
            fmt_float(r.detection_rate),
            r.important.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.tp_rate),
            opt(r.fn_rate),
            opt(r.type1_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Summary CSV of `rows` (see [`SUMMARY_HEADER`]).
pub fn emit_summary(rows: &[ResultRow], alpha: f64, truth: &Truth) -> Result<String> {
    Ok(write_summary(&summarize(rows, alpha, truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: usize, fold: usize, variable: usize, psi: f64) -> ResultRow {
        ResultRow {
            experiment: Experiment::Fig1LdPower,
            dgp: "ld".into(),
            d: 6,
            n: 250,
            seed,
            fold,
            variable,
            method: Method::Permucate,
            risk: RiskKind::PoRisk,
            psi,
            wald: None,
            p_value: None,
            delta_beta: None,
            nu_var: None,
            wall_time_ms: None,
        }
    }

    #[test]
    fn single_row_keeps_its_value() {
        let s = summarize(&[row(0, 0, 2, 0.7)], 0.05, &Truth::new()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].count, s[0].mean_psi, s[0].variable), (1, 0.7, 2));
        assert_eq!((s[0].std_psi, s[0].wald, s[0].p_value), (None, None, None));
        assert_eq!(s[0].important, None);
        let csv = write_summary(&s);
        assert!(csv.lines().nth(1).unwrap().contains(",x3,1,6.9999999999999996e-1,,,,"), "{csv}");
    }

    #[test]
    fn identical_psi_over_seeds_has_zero_spread() {
        let s = summarize(&[row(0, 0, 0, 0.4), row(1, 0, 0, 0.4)], 0.05, &Truth::new()).unwrap();
        assert_eq!(s[0].std_psi, Some(0.0));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize(&[], 0.05, &Truth::new()).is_err());
    }

    #[test]
    fn hand_computed_rates() {
        // two seeds x five folds for x1 (important) and x2 (null)
        let mut rows = Vec::new();
        for seed in 0..2 {
            for fold in 0..5 {
                let f = fold as f64;
                rows.push(row(seed, fold, 0, 1.0 + 0.1 * f));
                rows.push(row(seed, fold, 1, if seed == 0 { 0.5 + 0.01 * f } else { f - 2.0 }));
            }
        }
        let truth = Truth::from([(("ld".to_string(), 6), vec![0])]);
        let s = summarize(&rows, 0.05, &truth).unwrap();
        assert_eq!(s.len(), 2);
        let (x1, x2) = (&s[0], &s[1]);
        // x1: psi = 1.0..1.4 in both seeds
        assert!((x1.mean_psi - 1.2).abs() < 1e-12);
        assert!((x1.std_psi.unwrap() - (0.2f64 / 9.0).sqrt()).abs() < 1e-12);
        assert_eq!(x1.detection_rate, 1.0);
        assert_eq!(x1.important, Some(true));
        // x2: seed 0 clearly positive, seed 1 centred on zero
        assert!((x2.mean_psi - (0.52 * 5.0 + 0.0) / 10.0).abs() < 1e-12);
        assert_eq!(x2.detection_rate, 0.5);
        assert_eq!(x2.important, Some(false));
        assert_eq!((x1.tp_rate, x1.fn_rate, x1.type1_rate), (Some(1.0), Some(0.0), Some(0.5)));
    }
}

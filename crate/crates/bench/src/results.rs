//! Result rows: one line per (grid cell, seed, fold, variable, method, risk).

use std::cmp::Ordering;

use permucate::{Method, RiskKind};

use crate::config::Experiment;
use crate::dataset::fmt_float;
use crate::error::{BenchError, Result};

pub const RESULT_HEADER: [&str; 15] = [
    "experiment",
    "dgp",
    "d",
    "n",
    "seed",
    "fold",
    "variable",
    "method",
    "risk_kind",
    "psi",
    "wald",
    "p_value",
    "diagnostic_delta_beta",
    "diagnostic_nu_var",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub dgp: String,
    pub d: usize,
    pub n: usize,
    pub seed: usize,
    pub fold: usize,
    /// 0-based; written as `x1`, `x2`, ...
    pub variable: usize,
    pub method: Method,
    pub risk: RiskKind,
    pub psi: f64,
    /// Pooled over the seeds and folds of the row's (cell, variable, method, risk).
    pub wald: Option<f64>,
    pub p_value: Option<f64>,
    pub delta_beta: Option<f64>,
    pub nu_var: Option<f64>,
    pub wall_time_ms: Option<f64>,
}

impl ResultRow {
    /// Canonical order: experiment, dgp, d, n, method, risk, variable, seed, fold.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        (self.experiment, &self.dgp, self.d, self.n, self.method, self.risk, self.variable, self.seed, self.fold).cmp(&(
            other.experiment,
            &other.dgp,
            other.d,
            other.n,
            other.method,
            other.risk,
            other.variable,
            other.seed,
            other.fold,
        ))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

pub fn write_results(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.experiment.name().to_string(),
            r.dgp.clone(),
            r.d.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.fold.to_string(),
            format!("x{}", r.variable + 1),
            r.method.name().to_string(),
            r.risk.name().to_string(),
            fmt_float(r.psi),
            opt(r.wald),
            opt(r.p_value),
            opt(r.delta_beta),
            opt(r.nu_var),
            opt(r.wall_time_ms),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn field<T: std::str::FromStr>(s: &str, row: usize, col: &str) -> Result<T> {
    s.parse()
        .map_err(|_| BenchError::Data(format!("row {row}, column {col}: cannot parse `{s}`")))
}

fn opt_field(s: &str, row: usize, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s, row, col).map(Some)
    }
}

/// Reads a result CSV written by [`write_results`].
pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| BenchError::Data(format!("header: {e}")))?;
    if header.iter().ne(RESULT_HEADER.iter().copied()) {
        return Err(BenchError::Data(format!("header must be `{}`", RESULT_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| BenchError::Data(format!("row {row}: {e}")))?;
        let variable = rec[6]
            .strip_prefix('x')
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&v| v >= 1)
            .ok_or_else(|| BenchError::Data(format!("row {row}, column variable: `{}` is not x1, x2, ...", &rec[6])))?;
        out.push(ResultRow {
            experiment: rec[0].parse().map_err(|m: String| BenchError::Data(format!("row {row}: {m}")))?,
            dgp: rec[1].to_string(),
            d: field(&rec[2], row, "d")?,
            n: field(&rec[3], row, "n")?,
            seed: field(&rec[4], row, "seed")?,
            fold: field(&rec[5], row, "fold")?,
            variable: variable - 1,
            method: field(&rec[7], row, "method")?,
            risk: field(&rec[8], row, "risk_kind")?,
            psi: field(&rec[9], row, "psi")?,
            wald: opt_field(&rec[10], row, "wald")?,
            p_value: opt_field(&rec[11], row, "p_value")?,
            delta_beta: opt_field(&rec[12], row, "diagnostic_delta_beta")?,
            nu_var: opt_field(&rec[13], row, "diagnostic_nu_var")?,
            wall_time_ms: opt_field(&rec[14], row, "wall_time_ms")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(psi: f64) -> ResultRow {
        ResultRow {
            experiment: Experiment::Fig2Variance,
            dgp: "ld".into(),
            d: 6,
            n: 200,
            seed: 3,
            fold: 4,
            variable: 1,
            method: Method::Loco,
            risk: RiskKind::RRisk,
            psi,
            wald: Some(1.5),
            p_value: None,
            delta_beta: Some(1e-3),
            nu_var: None,
            wall_time_ms: None,
        }
    }

    #[test]
    fn header_and_empty_fields() {
        let text = write_results(&[row(0.25)]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RESULT_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "fig2_variance,ld,6,200,3,4,x2,loco,r_risk,2.5000000000000000e-1,1.5000000000000000e0,,1.0000000000000000e-3,,"
        );
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(0.1), row(-3.0e-12), row(f64::MAX)];
        assert_eq!(parse_results(&write_results(&rows)).unwrap(), rows);
    }

    #[test]
    fn rejects_bad_rows() {
        let good = write_results(&[row(1.0)]);
        assert!(parse_results(&good.replace("x2", "x0")).is_err());
        assert!(parse_results(&good.replace("loco", "shap")).is_err());
        assert!(parse_results(&good.replace("experiment", "exp")).is_err());
        assert!(parse_results(&good.replace(",200,", ",-1,")).is_err());
    }
}

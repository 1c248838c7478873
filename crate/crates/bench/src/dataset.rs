//! Dataset files: CSV with header `x1,...,xd,a,y` and an optional trailing
//! `tau_oracle` column. Floats are written with 17 significant digits so a
//! write/read cycle is lossless.

use permucate::linalg::DesignMatrix;
use permucate::Dataset;

use crate::error::{BenchError, Result};

/// A dataset read from disk, with the true effect when the file carries it.
#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub data: Dataset,
    pub tau_oracle: Option<Vec<f64>>,
}

/// 17 significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset(data: &Dataset, tau_oracle: Option<&[f64]>) -> Result<String> {
    if let Some(t) = tau_oracle {
        if t.len() != data.n() {
            return Err(BenchError::Data(format!("{} oracle effects for {} rows", t.len(), data.n())));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    header.push("a".into());
    header.push("y".into());
    if tau_oracle.is_some() {
        header.push("tau_oracle".into());
    }
    let io = |e: csv::Error| BenchError::Data(e.to_string());
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = (0..data.d()).map(|j| fmt_float(data.x.get(i, j))).collect();
        rec.push(data.a[i].to_string());
        rec.push(fmt_float(data.y[i]));
        if let Some(t) = tau_oracle {
            rec.push(fmt_float(t[i]));
        }
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

fn parse_float(s: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| BenchError::Data(format!("row {row}, column {col}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(BenchError::Data(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(v)
}

/// Reads a dataset file. `row` numbers in errors count data rows from 1.
pub fn parse_dataset(text: &str) -> Result<DatasetFile> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| BenchError::Data(format!("header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_tau = header.last().map(String::as_str) == Some("tau_oracle");
    let core = if has_tau { &header[..header.len() - 1] } else { &header[..] };
    if core.len() < 3 || core[core.len() - 2] != "a" || core[core.len() - 1] != "y" {
        return Err(BenchError::Data("header must be x1,...,xd,a,y[,tau_oracle]".into()));
    }
    let d = core.len() - 2;
    for (j, h) in core[..d].iter().enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(BenchError::Data(format!("header column {} is `{h}`, expected `x{}`", j + 1, j + 1)));
        }
    }
    let (mut xs, mut a, mut y, mut tau) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, rec) in r.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| BenchError::Data(format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(BenchError::Data(format!("row {row}: {} fields, expected {}", rec.len(), header.len())));
        }
        for j in 0..d {
            xs.push(parse_float(&rec[j], row, &header[j])?);
        }
        a.push(match rec[d].trim() {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(BenchError::Data(format!("row {row}, column a: `{other}` is not 0 or 1"))),
        });
        y.push(parse_float(&rec[d + 1], row, "y")?);
        if has_tau {
            tau.push(parse_float(&rec[d + 2], row, "tau_oracle")?);
        }
    }
    if a.is_empty() {
        return Err(BenchError::Data("no data rows".into()));
    }
    let x = DesignMatrix::from_row_slice(a.len(), d, &xs)?;
    let data = Dataset::new(x, a, y)?;
    Ok(DatasetFile {
        data,
        tau_oracle: has_tau.then_some(tau),
    })
}

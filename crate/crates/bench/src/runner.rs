//! Experiment runner.
//!
//! An experiment is a grid of cells `(d, n, seed)`. Every cell draws its own
//! data and runs the outer cross-fitting loop; all randomness is keyed by
//! `(master_seed, d, n, seed)`, so the result set does not depend on the
//! worker count or on completion order. Finished cells are stored next to a
//! JSON manifest, which `--resume` uses to skip them.
//!
//! Files written to `output_dir`:
//! - `<experiment>.csv`: result rows in canonical order
//! - `<experiment>_summary.csv`: per-variable aggregates
//! - `<experiment>.manifest.json`: config hash, seed, versions, finished cells
//! - `<experiment>.cells/`: per-cell rows

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use permucate::dgp::{build_oracle, DgpKind};
use permucate::inference::{run_seed, wald_statistic, DataSource, ImportanceOptions};
use permucate::learners::LearnerSpec;
use permucate::rng::{derive_seed, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::results::{parse_results, write_results, ResultRow};
use crate::summary::{emit_summary, Truth};

pub const WORKERS_ENV: &str = "PERMUCATE_WORKERS";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip cells recorded as finished in an existing manifest.
    pub resume: bool,
    /// Thread cap; `None` uses every core.
    pub workers: Option<usize>,
}

impl RunOptions {
    /// Options with the worker cap taken from `PERMUCATE_WORKERS`.
    pub fn from_env(resume: bool) -> Result<Self> {
        Ok(Self {
            resume,
            workers: workers_from_env()?,
        })
    }
}

pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(Some(w)),
            _ => Err(BenchError::Config {
                line: None,
                key: Some(WORKERS_ENV.into()),
                message: format!("expected a positive integer, got `{s}`"),
            }),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub d: usize,
    pub n: usize,
    pub seed: usize,
}

impl CellKey {
    fn file_name(&self) -> String {
        format!("d{}_n{}_s{}.csv", self.d, self.n, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    /// Canonical configuration text; parsing it reproduces the run.
    pub config: String,
    pub master_seed: u64,
    pub versions: BTreeMap<String, String>,
    pub completed_cells: Vec<CellKey>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: cfg.experiment.name().into(),
            config_hash: config_hash(cfg),
            config: cfg.to_canonical_text(),
            master_seed: cfg.master_seed,
            versions: BTreeMap::from([
                ("permucate".to_string(), permucate_version().to_string()),
                ("permucate-bench".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            completed_cells: Vec::new(),
        }
    }
}

fn permucate_version() -> &'static str {
    // both crates share the workspace version
    env!("CARGO_PKG_VERSION")
}

/// SHA-256 of the canonical configuration text.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_canonical_text().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Result rows in canonical order, as written.
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
    pub manifest_path: PathBuf,
    /// Cells computed in this run (the rest came from a resumed manifest).
    pub computed_cells: usize,
}

/// True important variables for every dimension of the run.
pub fn truth_for(cfg: &ExperimentConfig) -> Result<Truth> {
    let mut t = Truth::new();
    for d in cfg.dims() {
        let spec = cfg.spec_for(d);
        let oracle = build_oracle(&spec)?;
        let important = match (&oracle.analytic_importance, spec.kind) {
            (Some(imp), _) => imp.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(j, _)| j).collect(),
            (None, DgpKind::Hl | DgpKind::Hp) if spec.effect_size == 0.0 => Vec::new(),
            (None, _) => oracle.important.tau.clone(),
        };
        t.insert((spec.kind.name().to_string(), d), important);
    }
    Ok(t)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| BenchError::output(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| BenchError::output(path, e))
}

fn save_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let mut m = m.clone();
    m.completed_cells.sort();
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write_atomic(path, text.as_bytes())
}

fn load_manifest(path: &Path) -> Result<Option<Manifest>> {
    match fs::read_to_string(path) {
        Err(_) => Ok(None),
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| {
            BenchError::Data(format!("{}: unreadable manifest: {e}", path.display()))
        }),
    }
}

fn importance_options(cfg: &ExperimentConfig) -> ImportanceOptions {
    ImportanceOptions {
        methods: cfg.methods.clone(),
        risks: cfg.risks.clone(),
        n_permutations: cfg.n_permutations,
        specs: cfg.preset.specs(),
        conditional: LearnerSpec::ridge_cv(),
        diagnostics: cfg.experiment.diagnostics(),
    }
}

/// Rows of one cell, without the pooled Wald columns.
pub fn run_cell(cfg: &ExperimentConfig, cell: CellKey) -> Result<Vec<ResultRow>> {
    let start = Instant::now();
    let spec = cfg.spec_for(cell.d);
    let source = DataSource::Simulated { spec, n: cell.n };
    let master = derive_seed(cfg.master_seed, Stream::Dataset, &[cell.d as u64, cell.n as u64]);
    let rows = run_seed(&source, &cfg.plan, &importance_options(cfg), master, cell.seed)?;
    let wall = cfg.record_timings.then(|| start.elapsed().as_secs_f64() * 1e3);
    Ok(rows
        .into_iter()
        .map(|r| ResultRow {
            experiment: cfg.experiment,
            dgp: cfg.dgp.kind.name().to_string(),
            d: cell.d,
            n: cell.n,
            seed: r.seed,
            fold: r.fold,
            variable: r.variable,
            method: r.method,
            risk: r.risk,
            psi: r.psi,
            wald: None,
            p_value: None,
            delta_beta: r.diagnostics.map(|d| d.delta_beta_norm_sq),
            nu_var: r.diagnostics.map(|d| d.nu_variance),
            wall_time_ms: wall,
        })
        .collect())
}

/// Fills the pooled fold x seed Wald columns and sorts canonically.
pub fn finalize_rows(mut rows: Vec<ResultRow>) -> Vec<ResultRow> {
    rows.sort_by(|a, b| a.canonical_cmp(b));
    let mut start = 0;
    while start < rows.len() {
        let same = |r: &ResultRow| {
            let s = &rows[start];
            (r.experiment, &r.dgp, r.d, r.n, r.method, r.risk, r.variable)
                == (s.experiment, &s.dgp, s.d, s.n, s.method, s.risk, s.variable)
        };
        let end = start + rows[start..].iter().take_while(|r| same(r)).count();
        let psis: Vec<f64> = rows[start..end].iter().map(|r| r.psi).collect();
        let (wald, p) = match wald_statistic(&psis) {
            Ok((z, p)) => (Some(z), Some(p)),
            Err(_) => (None, None),
        };
        for r in &mut rows[start..end] {
            r.wald = wald;
            r.p_value = p;
        }
        start = end;
    }
    rows
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<CellKey> {
    let mut out = Vec::new();
    for d in cfg.dims() {
        for &n in &cfg.n_grid {
            for seed in 0..cfg.plan.n_seeds {
                out.push(CellKey { d, n, seed });
            }
        }
    }
    out
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    let dir = &cfg.output_dir;
    let name = cfg.experiment.name();
    let cell_dir = dir.join(format!("{name}.cells"));
    fs::create_dir_all(&cell_dir).map_err(|_| {
        BenchError::config(None, "output_dir", format!("cannot create `{}`", cell_dir.display()))
    })?;
    let manifest_path = dir.join(format!("{name}.manifest.json"));
    let fresh = Manifest::new(cfg);
    let mut manifest = fresh.clone();
    if opts.resume {
        if let Some(old) = load_manifest(&manifest_path)? {
            if old.config_hash != fresh.config_hash {
                return Err(BenchError::config(
                    None,
                    "output_dir",
                    format!("{} belongs to a different configuration; use another output_dir or drop --resume", manifest_path.display()),
                ));
            }
            manifest.completed_cells = old
                .completed_cells
                .into_iter()
                .filter(|c| cell_dir.join(c.file_name()).is_file())
                .collect();
        }
    }
    save_manifest(&manifest_path, &manifest)?;

    let all = cells(cfg);
    let todo: Vec<CellKey> = all.iter().copied().filter(|c| !manifest.completed_cells.contains(c)).collect();
    let computed_cells = todo.len();
    let manifest = Mutex::new(manifest);
    let run_one = |cell: &CellKey| -> Result<()> {
        let rows = run_cell(cfg, *cell)?;
        write_atomic(&cell_dir.join(cell.file_name()), write_results(&rows).as_bytes())?;
        let mut m = manifest.lock().expect("manifest lock");
        m.completed_cells.push(*cell);
        save_manifest(&manifest_path, &m)
    };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = opts.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| BenchError::Numeric(format!("thread pool: {e}")))?
    };
    pool.install(|| todo.par_iter().try_for_each(run_one))?;

    let mut rows = Vec::new();
    for cell in &all {
        let path = cell_dir.join(cell.file_name());
        let text = fs::read_to_string(&path).map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
        rows.extend(parse_results(&text)?);
    }
    let rows = finalize_rows(rows);
    let results_path = dir.join(format!("{name}.csv"));
    write_atomic(&results_path, write_results(&rows).as_bytes())?;
    let summary_path = dir.join(format!("{name}_summary.csv"));
    let summary = emit_summary(&rows, cfg.plan.alpha, &truth_for(cfg)?)?;
    write_atomic(&summary_path, summary.as_bytes())?;
    Ok(RunOutput {
        rows,
        results_path,
        summary_path,
        manifest_path,
        computed_cells,
    })
}

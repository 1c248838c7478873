use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use permucate::dgp::{sample, DgpKind, OracleQuantity};
use permucate::inference::{run_crossfit_importance, CrossfitPlan, DataSource, ImportanceOptions};
use permucate::risks::{po_risk, r_risk};
use permucate::{fit_dr_learner, predict_cate, DgpSpec, Method, RiskKind};
use permucate_bench::dataset::fmt_float;
use permucate_bench::plot::render_charts;
use permucate_bench::runner::workers_from_env;
use permucate_bench::{
    parse_config, parse_dataset, parse_results, run_experiment, write_dataset, BenchError, DatasetFile, Preset, Result,
    RunOptions,
};

#[derive(Parser)]
#[command(name = "permucate", version, about = "Variable importance for CATE models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a simulation design and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a DR-learner and report its feasible risks (and PEHE when known).
    Fit(FitArgs),
    /// Cross-fitted PermuCATE / LOCO importance on a dataset file.
    Importance(ImportanceArgs),
    /// Run an experiment configuration.
    Bench(BenchArgs),
    /// Render SVG charts from a result CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// ld, hl, hp or linear.
    #[arg(long, default_value = "ld")]
    dgp: String,
    #[arg(long)]
    n: usize,
    /// Covariate count (hl, hp).
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    d_imp: usize,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    effect_size: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    treat_quantile: Option<f64>,
    /// CATE coefficients for the linear design, comma-separated.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave out the tau_oracle column.
    #[arg(long)]
    no_oracle: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "linear")]
    preset: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "permucate,loco")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "po_risk")]
    risk: Vec<String>,
    #[arg(long, default_value = "linear")]
    preset: String,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 50)]
    permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Configuration file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Skip cells finished by an earlier run with the same configuration.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "plots")]
    out_dir: PathBuf,
}

fn config_arg(key: &str, message: impl Into<String>) -> BenchError {
    BenchError::config(None, key, message)
}

fn read_data(path: &Path) -> Result<DatasetFile> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| BenchError::output(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| BenchError::output("<stdout>", e)),
    }
}

fn preset(s: &str) -> Result<Preset> {
    s.parse().map_err(|m: String| config_arg("preset", m))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let kind: DgpKind = a.dgp.parse().map_err(|_| config_arg("dgp", format!("unknown design `{}`", a.dgp)))?;
    let mut spec = match kind {
        DgpKind::Ld => DgpSpec::ld(),
        DgpKind::Hl => DgpSpec::hl(a.d, a.d_imp),
        DgpKind::Hp => DgpSpec::hp(a.d, a.d_imp),
        DgpKind::Linear => DgpSpec::linear(a.beta.clone()),
    };
    if kind != DgpKind::Linear && !a.beta.is_empty() {
        return Err(config_arg("beta", "only applies to --dgp linear"));
    }
    if let Some(v) = a.rho {
        spec.rho = v;
    }
    if let Some(v) = a.effect_size {
        spec.effect_size = v;
    }
    if let Some(v) = a.noise_sd {
        spec.noise_sd = v;
    }
    if let Some(v) = a.treat_quantile {
        spec.treat_quantile = v;
    }
    let data = sample(&spec, a.n, a.seed)?;
    let tau = (!a.no_oracle).then(|| data.oracle().map(|o| o.eval(&data.x, OracleQuantity::Tau))).transpose()?;
    emit(a.out.as_deref(), &write_dataset(&data, tau.as_deref())?)
}

fn fit(a: FitArgs) -> Result<()> {
    let file = read_data(&a.data)?;
    let data = &file.data;
    let fit = fit_dr_learner(data, a.folds, &preset(&a.preset)?.specs(), a.seed)?;
    let tau_hat = predict_cate(&fit.model, &data.x)?;
    let mut out = String::from("metric,value\n");
    out += &format!("n,{}\nd,{}\n", data.n(), data.d());
    out += &format!("po_risk,{}\n", fmt_float(po_risk(&tau_hat, &fit.phi)?));
    out += &format!("r_risk,{}\n", fmt_float(r_risk(&tau_hat, &data.y, &data.a, &fit.nuisances)?));
    if let Some(tau) = &file.tau_oracle {
        out += &format!("pehe,{}\n", fmt_float(po_risk(&tau_hat, tau)?));
    }
    emit(None, &out)
}

fn importance(a: ImportanceArgs) -> Result<()> {
    let file = read_data(&a.data)?;
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>().map_err(|_| config_arg("methods", format!("unknown method `{m}`"))))
        .collect::<Result<Vec<_>>>()?;
    let risks = a
        .risk
        .iter()
        .map(|r| r.parse::<RiskKind>().map_err(|_| config_arg("risk", format!("unknown risk `{r}`"))))
        .collect::<Result<Vec<_>>>()?;
    if risks.contains(&RiskKind::OraclePehe) {
        return Err(config_arg("risk", "oracle_pehe needs simulated data; use po_risk or r_risk"));
    }
    let plan = CrossfitPlan {
        n_seeds: a.seeds,
        alpha: a.alpha,
        ..CrossfitPlan::default()
    };
    let opts = ImportanceOptions {
        methods,
        risks,
        n_permutations: a.permutations,
        specs: preset(&a.preset)?.specs(),
        ..ImportanceOptions::default()
    };
    let table = run_crossfit_importance(&DataSource::Fixed(file.data), &plan, &opts, a.seed)?;
    let mut out = String::from("method,risk_kind,variable,count,mean_psi,std_psi,wald,p_value,significant\n");
    let opt = |v: f64| if v.is_finite() { fmt_float(v) } else { String::new() };
    for g in table.aggregates(plan.alpha) {
        out += &format!(
            "{},{},x{},{},{},{},{},{},{}\n",
            g.method.name(),
            g.risk.name(),
            g.variable + 1,
            g.count,
            fmt_float(g.mean_psi),
            opt(g.std_psi),
            opt(g.wald),
            opt(g.p_value),
            g.decision
        );
    }
    emit(a.out.as_deref(), &out)
}

fn bench(a: BenchArgs) -> Result<()> {
    let text = match &a.config {
        Some(p) => fs::read_to_string(p).map_err(|e| config_arg("--config", format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    let opts = RunOptions {
        resume: a.resume,
        workers: workers_from_env()?,
    };
    let out = run_experiment(&cfg, &opts)?;
    eprintln!(
        "{}: {} rows ({} cells computed) -> {}, {}",
        cfg.experiment.name(),
        out.rows.len(),
        out.computed_cells,
        out.results_path.display(),
        out.summary_path.display()
    );
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| BenchError::Data(format!("{}: {e}", a.input.display())))?;
    let rows = parse_results(&text)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| BenchError::output(&a.out_dir, e))?;
    for (stem, svg) in render_charts(&rows) {
        let path = a.out_dir.join(format!("{stem}.svg"));
        fs::write(&path, svg).map_err(|e| BenchError::output(&path, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Importance(a) => importance(a),
        Command::Bench(a) => bench(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

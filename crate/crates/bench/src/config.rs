//! Experiment configuration in a flat `key = value` format.
//!
//! ```text
//! # comments start with '#'
//! experiment = fig3_tp_accuracy
//! n_grid = 300, 600, 1200
//! d_grid = 50
//! ```
//!
//! Every key is optional. Grids that are not given fall back to the
//! experiment's desk-scale defaults (see [`Experiment::default_n_grid`]).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use permucate::dgp::DgpKind;
use permucate::{CrossfitPlan, DgpSpec, Method, NuisanceSpecs, RiskKind};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    Fig1LdPower,
    Fig2Variance,
    Fig3TpAccuracy,
    S1RiskCompare,
    S4DeltaBetaDims,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Fig1LdPower,
        Experiment::Fig2Variance,
        Experiment::Fig3TpAccuracy,
        Experiment::S1RiskCompare,
        Experiment::S4DeltaBetaDims,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1LdPower => "fig1_ld_power",
            Experiment::Fig2Variance => "fig2_variance",
            Experiment::Fig3TpAccuracy => "fig3_tp_accuracy",
            Experiment::S1RiskCompare => "s1_risk_compare",
            Experiment::S4DeltaBetaDims => "s4_delta_beta_dims",
        }
    }

    /// Desk-scale sample-size grid.
    pub fn default_n_grid(self) -> Vec<usize> {
        match self {
            Experiment::Fig1LdPower => vec![250, 500, 1000, 2000],
            Experiment::Fig2Variance => vec![100, 200, 400],
            Experiment::Fig3TpAccuracy => vec![300, 600, 1200],
            Experiment::S1RiskCompare => vec![2000],
            Experiment::S4DeltaBetaDims => vec![500],
        }
    }

    /// Desk-scale dimension grid (empty for the fixed six-covariate design).
    pub fn default_d_grid(self) -> Vec<usize> {
        match self {
            Experiment::Fig3TpAccuracy => vec![50],
            Experiment::S4DeltaBetaDims => vec![20, 40, 80],
            _ => Vec::new(),
        }
    }

    fn default_dgp(self) -> DgpSpec {
        match self {
            Experiment::Fig1LdPower | Experiment::S1RiskCompare => DgpSpec::ld(),
            Experiment::Fig2Variance => DgpSpec::ld_uncorrelated(),
            Experiment::Fig3TpAccuracy | Experiment::S4DeltaBetaDims => DgpSpec::hl(50, 10),
        }
    }

    /// Whether rows carry the linear refit/conditional-mean diagnostics.
    pub fn diagnostics(self) -> bool {
        matches!(self, Experiment::Fig2Variance | Experiment::S4DeltaBetaDims)
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Ridge and logistic regression everywhere.
    Linear,
    /// Stacked boosting + linear models for nuisances and final stage.
    Superlearner,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Linear => "linear",
            Preset::Superlearner => "superlearner",
        }
    }

    pub fn specs(self) -> NuisanceSpecs {
        match self {
            Preset::Linear => NuisanceSpecs::linear(),
            Preset::Superlearner => NuisanceSpecs::superlearner(),
        }
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Preset::Linear),
            "superlearner" => Ok(Preset::Superlearner),
            _ => Err(format!("unknown preset `{s}` (linear, superlearner)")),
        }
    }
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Base design; `d` is replaced by each `d_grid` entry.
    pub dgp: DgpSpec,
    pub n_grid: Vec<usize>,
    /// Empty for the fixed six-covariate design.
    pub d_grid: Vec<usize>,
    pub plan: CrossfitPlan,
    /// Risks scored on identical splits; `s1_risk_compare` always uses both
    /// feasible risks.
    pub risks: Vec<RiskKind>,
    pub methods: Vec<Method>,
    pub preset: Preset,
    pub n_permutations: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Fill `wall_time_ms`; timings make output non-reproducible.
    pub record_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Dimensions to run (the base design's `d` when no grid applies).
    pub fn dims(&self) -> Vec<usize> {
        if self.d_grid.is_empty() {
            vec![self.dgp.d]
        } else {
            self.d_grid.clone()
        }
    }

    pub fn spec_for(&self, d: usize) -> DgpSpec {
        DgpSpec {
            d,
            ..self.dgp.clone()
        }
    }

    /// Every key with its value, one per line in a fixed order. Parsing this
    /// text yields the same configuration; its hash identifies a run.
    pub fn to_canonical_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment", self.experiment.name().into());
        kv("dgp", self.dgp.kind.name().into());
        kv("d_imp", self.dgp.d_imp.to_string());
        kv("rho", fmt_f64(self.dgp.rho));
        kv("effect_size", fmt_f64(self.dgp.effect_size));
        kv("noise_sd", fmt_f64(self.dgp.noise_sd));
        kv("treat_quantile", fmt_f64(self.dgp.treat_quantile));
        kv("seed_coeffs", self.dgp.seed_coeffs.to_string());
        if self.dgp.kind == DgpKind::Linear {
            kv("beta", self.dgp.beta.iter().map(|b| fmt_f64(*b)).collect::<Vec<_>>().join(","));
        }
        kv("n_grid", list(&self.n_grid));
        if !self.d_grid.is_empty() {
            kv("d_grid", list(&self.d_grid));
        }
        kv("outer_folds", self.plan.outer_folds.to_string());
        kv("inner_folds", self.plan.inner_folds.to_string());
        kv("outer_frac_heldout", fmt_f64(self.plan.outer_frac_heldout));
        kv("n_seeds", self.plan.n_seeds.to_string());
        kv("alpha", fmt_f64(self.plan.alpha));
        kv("risk", self.risks.iter().map(|r| r.name()).collect::<Vec<_>>().join(","));
        kv("methods", self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        kv("preset", self.preset.name().into());
        kv("n_permutations", self.n_permutations.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("record_timings", self.record_timings.to_string());
        s
    }
}

/// Shortest text that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

const KEYS: &[&str] = &[
    "experiment",
    "dgp",
    "d_imp",
    "rho",
    "effect_size",
    "noise_sd",
    "treat_quantile",
    "seed_coeffs",
    "beta",
    "n_grid",
    "d_grid",
    "outer_folds",
    "inner_folds",
    "outer_frac_heldout",
    "n_seeds",
    "alpha",
    "risk",
    "methods",
    "preset",
    "n_permutations",
    "output_dir",
    "master_seed",
    "record_timings",
];

struct Entries(BTreeMap<&'static str, (usize, String)>);

impl Entries {
    fn get<T: FromStr>(&self, key: &'static str, what: &str) -> Result<Option<(usize, T)>> {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse::<T>()
                .map(|v| Some((*line, v)))
                .map_err(|_| BenchError::config(Some(*line), key, format!("expected {what}, got `{raw}`"))),
        }
    }

    fn list<T: FromStr>(&self, key: &'static str, what: &str) -> Result<Option<(usize, Vec<T>)>> {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, raw)) => {
                let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
                if parts.iter().any(|p| p.is_empty()) {
                    return Err(BenchError::config(Some(*line), key, format!("expected a comma-separated list of {what}")));
                }
                parts
                    .iter()
                    .map(|p| {
                        p.parse::<T>().map_err(|_| {
                            BenchError::config(Some(*line), key, format!("expected a comma-separated list of {what}, got `{p}`"))
                        })
                    })
                    .collect::<Result<Vec<T>>>()
                    .map(|v| Some((*line, v)))
            }
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|(l, _)| *l)
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| BenchError::Config {
            line: Some(line),
            key: None,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let k = k.trim();
        let v = v.trim();
        let key = *KEYS
            .iter()
            .find(|&&known| known == k)
            .ok_or_else(|| BenchError::config(Some(line), k, "unknown key"))?;
        if v.is_empty() {
            return Err(BenchError::config(Some(line), key, "missing value"));
        }
        if let Some((first, _)) = map.insert(key, (line, v.to_string())) {
            return Err(BenchError::config(Some(line), key, format!("duplicate key (first set on line {first})")));
        }
    }
    Ok(Entries(map))
}

fn check_grid(line: Option<usize>, key: &str, v: &[usize], min: usize) -> Result<()> {
    if v.is_empty() {
        return Err(BenchError::config(line, key, "must not be empty"));
    }
    if v.iter().any(|&x| x < min) {
        return Err(BenchError::config(line, key, format!("values must be at least {min}")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::config(line, key, "values must be strictly ascending"));
    }
    Ok(())
}

/// Parses and validates a configuration; errors name the key and line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let e = tokenize(text)?;
    let experiment = e
        .get::<String>("experiment", "an experiment name")?
        .map(|(l, s)| s.parse::<Experiment>().map_err(|m| BenchError::config(Some(l), "experiment", m)))
        .transpose()?
        .unwrap_or(Experiment::Fig1LdPower);

    let mut dgp = experiment.default_dgp();
    if let Some((l, s)) = e.get::<String>("dgp", "a design name")? {
        let kind: DgpKind = s
            .parse()
            .map_err(|_| BenchError::config(Some(l), "dgp", format!("unknown design `{s}` (ld, hl, hp, linear)")))?;
        if kind != dgp.kind {
            dgp = match kind {
                DgpKind::Ld => DgpSpec::ld(),
                DgpKind::Hl => DgpSpec::hl(50, 10),
                DgpKind::Hp => DgpSpec::hp(50, 10),
                DgpKind::Linear => DgpSpec::linear(Vec::new()),
            };
        }
    }
    if let Some((_, v)) = e.get("d_imp", "a non-negative integer")? {
        dgp.d_imp = v;
    }
    if let Some((_, v)) = e.get("rho", "a number")? {
        dgp.rho = v;
    }
    if let Some((_, v)) = e.get("effect_size", "a number")? {
        dgp.effect_size = v;
    }
    if let Some((_, v)) = e.get("noise_sd", "a number")? {
        dgp.noise_sd = v;
    }
    if let Some((_, v)) = e.get("treat_quantile", "a number")? {
        dgp.treat_quantile = v;
    }
    if let Some((_, v)) = e.get("seed_coeffs", "a non-negative integer")? {
        dgp.seed_coeffs = v;
    }
    match (e.list::<f64>("beta", "numbers")?, dgp.kind) {
        (Some((_, beta)), DgpKind::Linear) => {
            dgp.d = beta.len();
            dgp.d_imp = beta.iter().filter(|b| **b != 0.0).count();
            dgp.beta = beta;
        }
        (Some((l, _)), _) => return Err(BenchError::config(Some(l), "beta", "only applies to dgp = linear")),
        (None, DgpKind::Linear) => {
            return Err(BenchError::config(e.line("dgp"), "beta", "dgp = linear needs beta coefficients"))
        }
        (None, _) => {}
    }

    let n_grid = match e.list::<usize>("n_grid", "positive integers")? {
        Some((l, v)) => {
            check_grid(Some(l), "n_grid", &v, 1)?;
            v
        }
        None => experiment.default_n_grid(),
    };
    let fixed_d = matches!(dgp.kind, DgpKind::Ld | DgpKind::Linear);
    let d_grid = match e.list::<usize>("d_grid", "positive integers")? {
        Some((l, _)) if fixed_d => {
            return Err(BenchError::config(Some(l), "d_grid", format!("the {} design has a fixed dimension", dgp.kind.name())))
        }
        Some((l, v)) => {
            check_grid(Some(l), "d_grid", &v, 1)?;
            v
        }
        None if fixed_d => Vec::new(),
        None => {
            let v = experiment.default_d_grid();
            if v.is_empty() {
                vec![dgp.d]
            } else {
                v
            }
        }
    };
    if let Some(&dmin) = d_grid.first() {
        dgp.d = dmin;
        if dgp.d_imp > dmin {
            return Err(BenchError::config(
                e.line("d_imp").or(e.line("d_grid")),
                "d_imp",
                format!("d_imp = {} exceeds the smallest dimension {dmin}", dgp.d_imp),
            ));
        }
    }
    dgp.validate().map_err(|err| {
        let key = ["rho", "effect_size", "noise_sd", "treat_quantile", "d_imp", "beta"]
            .into_iter()
            .find(|k| err.to_string().contains(k))
            .unwrap_or("dgp");
        BenchError::config(e.line(key), key, err.to_string())
    })?;

    let mut plan = CrossfitPlan::default();
    if let Some((_, v)) = e.get("outer_folds", "an integer")? {
        plan.outer_folds = v;
        plan.outer_frac_heldout = 1.0 / v.max(1) as f64;
    }
    if let Some((_, v)) = e.get("inner_folds", "an integer")? {
        plan.inner_folds = v;
    }
    if let Some((_, v)) = e.get("outer_frac_heldout", "a number")? {
        plan.outer_frac_heldout = v;
    }
    if let Some((_, v)) = e.get("n_seeds", "an integer")? {
        plan.n_seeds = v;
    }
    if let Some((_, v)) = e.get("alpha", "a number")? {
        plan.alpha = v;
    }
    for (key, ok, msg) in [
        ("alpha", plan.alpha > 0.0 && plan.alpha < 1.0, "must lie in (0, 1)"),
        ("outer_folds", plan.outer_folds >= 2, "must be at least 2"),
        ("inner_folds", plan.inner_folds >= 2, "must be at least 2"),
        ("n_seeds", plan.n_seeds >= 1, "must be at least 1"),
        (
            "outer_frac_heldout",
            plan.outer_frac_heldout > 0.0 && plan.outer_frac_heldout < 1.0,
            "must lie in (0, 1)",
        ),
    ] {
        if !ok {
            return Err(BenchError::config(e.line(key), key, msg));
        }
    }
    plan.validate().map_err(|err| {
        BenchError::config(e.line("outer_frac_heldout").or(e.line("outer_folds")), "outer_frac_heldout", err.to_string())
    })?;

    let mut risks = match e.list::<String>("risk", "risk names")? {
        Some((l, v)) => {
            let mut out = Vec::new();
            for s in v {
                let r: RiskKind = s
                    .parse()
                    .map_err(|_| BenchError::config(Some(l), "risk", format!("unknown risk `{s}` (po_risk, r_risk, oracle_pehe)")))?;
                if out.contains(&r) {
                    return Err(BenchError::config(Some(l), "risk", format!("`{s}` listed twice")));
                }
                out.push(r);
            }
            out
        }
        None => vec![RiskKind::PoRisk],
    };
    if experiment == Experiment::S1RiskCompare {
        for r in [RiskKind::PoRisk, RiskKind::RRisk] {
            if !risks.contains(&r) {
                risks.push(r);
            }
        }
    }
    risks.sort();

    let mut methods = match e.list::<String>("methods", "method names")? {
        Some((l, v)) => {
            let mut out = Vec::new();
            for s in v {
                let m: Method = s
                    .parse()
                    .map_err(|_| BenchError::config(Some(l), "methods", format!("unknown method `{s}` (permucate, loco)")))?;
                if out.contains(&m) {
                    return Err(BenchError::config(Some(l), "methods", format!("`{s}` listed twice")));
                }
                out.push(m);
            }
            out
        }
        None => vec![Method::Permucate, Method::Loco],
    };
    methods.sort();

    let preset = e
        .get::<String>("preset", "a preset name")?
        .map(|(l, s)| s.parse::<Preset>().map_err(|m| BenchError::config(Some(l), "preset", m)))
        .transpose()?
        .unwrap_or(Preset::Linear);
    if preset == Preset::Superlearner && experiment.diagnostics() {
        return Err(BenchError::config(
            e.line("preset"),
            "preset",
            format!("{} reports linear diagnostics and needs preset = linear", experiment.name()),
        ));
    }
    let n_permutations = match e.get::<usize>("n_permutations", "an integer")? {
        Some((l, 0)) => return Err(BenchError::config(Some(l), "n_permutations", "must be at least 1")),
        Some((_, v)) => v,
        None => 50,
    };
    let output_dir = e
        .get::<String>("output_dir", "a path")?
        .map(|(_, s)| PathBuf::from(s))
        .unwrap_or_else(|| PathBuf::from("results"));
    let master_seed = e.get("master_seed", "a non-negative integer")?.map(|(_, v)| v).unwrap_or(0);
    let record_timings = e.get("record_timings", "true or false")?.map(|(_, v)| v).unwrap_or(false);

    Ok(ExperimentConfig {
        experiment,
        dgp,
        n_grid,
        d_grid,
        plan,
        risks,
        methods,
        preset,
        n_permutations,
        output_dir,
        master_seed,
        record_timings,
    })
}

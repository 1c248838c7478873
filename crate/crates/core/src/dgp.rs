//! Seeded simulation designs with full oracle access.
//!
//! * `Ld`: six covariates in three correlated Gaussian pairs, a linear CATE on
//!   the first three and analytic importances.
//! * `Hl`: equicorrelated Gaussian covariates with sparse linear links.
//! * `Hp`: as `Hl` with cubic polynomial links and a quantile-shifted
//!   treatment assignment.
//! * `Linear`: independent covariates, randomized treatment and a linear CATE
//!   with caller-chosen coefficients.
//!
//! Coefficients depend only on `seed_coeffs`; covariates, treatment and noise
//! come from the dataset stream keyed by the sampling seed.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::learners::{clip_probability, PolynomialMap};
use crate::linalg::DesignMatrix;
use crate::rng::{stream_rng, Stream};
use crate::stats::{expit, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DgpKind {
    Ld,
    Hl,
    Hp,
    Linear,
}

impl DgpKind {
    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Ld => "ld",
            DgpKind::Hl => "hl",
            DgpKind::Hp => "hp",
            DgpKind::Linear => "linear",
        }
    }

    fn tag(self) -> u64 {
        match self {
            DgpKind::Ld => 1,
            DgpKind::Hl => 2,
            DgpKind::Hp => 3,
            DgpKind::Linear => 4,
        }
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ld" => Ok(DgpKind::Ld),
            "hl" => Ok(DgpKind::Hl),
            "hp" => Ok(DgpKind::Hp),
            "linear" => Ok(DgpKind::Linear),
            _ => Err(Error::InvalidSpec(format!("unknown design `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub d: usize,
    /// Size of each important set (`Hl`, `Hp`).
    pub d_imp: usize,
    /// Within-pair (`Ld`) or common (`Hl`, `Hp`, `Linear`) correlation.
    pub rho: f64,
    /// Effect size `e` (`Hl`, `Hp`): weights `(1 - e) mu0 + e A tau`.
    pub effect_size: f64,
    pub noise_sd: f64,
    /// Propensity quantile subtracted before the treatment draw (`Hp`).
    pub treat_quantile: f64,
    /// Polynomial degree (`Hp`).
    pub degree: usize,
    pub seed_coeffs: u64,
    /// CATE coefficients (`Linear`).
    pub beta: Vec<f64>,
}

impl DgpSpec {
    fn base(kind: DgpKind, d: usize) -> Self {
        Self {
            kind,
            d,
            d_imp: d,
            rho: 0.5,
            effect_size: 0.5,
            noise_sd: 1.0,
            treat_quantile: 0.1,
            degree: 3,
            seed_coeffs: 0,
            beta: Vec::new(),
        }
    }

    pub fn ld() -> Self {
        Self {
            noise_sd: 3.0,
            ..Self::base(DgpKind::Ld, 6)
        }
    }

    /// `Ld` with the within-pair correlation removed.
    pub fn ld_uncorrelated() -> Self {
        Self {
            rho: 0.0,
            ..Self::ld()
        }
    }

    pub fn hl(d: usize, d_imp: usize) -> Self {
        Self {
            d_imp,
            ..Self::base(DgpKind::Hl, d)
        }
    }

    pub fn hp(d: usize, d_imp: usize) -> Self {
        Self {
            d_imp,
            ..Self::base(DgpKind::Hp, d)
        }
    }

    pub fn linear(beta: Vec<f64>) -> Self {
        Self {
            rho: 0.0,
            beta,
            ..Self::base(DgpKind::Linear, 0)
        }
        .with_d_from_beta()
    }

    fn with_d_from_beta(mut self) -> Self {
        self.d = self.beta.len();
        self.d_imp = self.beta.iter().filter(|b| **b != 0.0).count();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if self.kind == DgpKind::Ld && self.d != 6 {
            return bad(format!("the ld design has exactly 6 covariates, got d = {}", self.d));
        }
        if matches!(self.kind, DgpKind::Hl | DgpKind::Hp) && (self.d_imp == 0 || self.d_imp > self.d) {
            return bad(format!("d_imp = {} must lie in 1..={}", self.d_imp, self.d));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho = {} must lie in [0, 1)", self.rho));
        }
        if !(0.0..=1.0).contains(&self.effect_size) {
            return bad(format!("effect size {} must lie in [0, 1]", self.effect_size));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return bad(format!("noise_sd = {} must be finite and non-negative", self.noise_sd));
        }
        if !(0.0..1.0).contains(&self.treat_quantile) {
            return bad(format!("treat_quantile = {} must lie in [0, 1)", self.treat_quantile));
        }
        if self.kind == DgpKind::Hp && self.degree != 3 {
            return bad(format!("the hp design uses degree 3, got {}", self.degree));
        }
        if self.kind == DgpKind::Linear {
            if self.beta.len() != self.d {
                return bad(format!("beta has {} entries for d = {}", self.beta.len(), self.d));
            }
            if self.beta.iter().any(|b| !b.is_finite()) {
                return bad("beta must be finite".into());
            }
        }
        Ok(())
    }
}

/// Sparse linear or polynomial link: sum of coefficient times monomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Monomials as multisets of covariate indices, with their coefficients.
    pub terms: Vec<(Vec<usize>, f64)>,
}

impl Link {
    fn eval_row(&self, x: &DesignMatrix, i: usize) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c * m.iter().map(|&j| x.get(i, j)).product::<f64>())
            .sum()
    }

    fn eval(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.eval_row(x, i)).collect()
    }

    /// Coefficient of the monomial `m` (sorted), zero when absent.
    pub fn coefficient(&self, m: &[usize]) -> f64 {
        self.terms.iter().find(|(t, _)| t == m).map_or(0.0, |t| t.1)
    }

    /// Dense linear coefficient vector (degree-one terms only).
    pub fn linear_coefficients(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (m, c) in &self.terms {
            if m.len() == 1 {
                out[m[0]] += c;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportantSets {
    pub pi: Vec<usize>,
    pub mu0: Vec<usize>,
    pub tau: Vec<usize>,
}

/// Ground truth of a sampled design.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub spec: DgpSpec,
    pub important: ImportantSets,
    /// Link for the propensity log-odds (`Linear`: none, propensity 0.5).
    pub pi_link: Link,
    pub mu0_link: Link,
    pub tau_link: Link,
    /// Quantile subtracted from the propensity before clipping (`Hp`).
    pub pi_shift: f64,
    /// Population importance of each covariate for the CATE, when known.
    pub analytic_importance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleQuantity {
    Tau,
    Mu0,
    Pi,
}

impl Oracle {
    fn effect_weight(&self) -> f64 {
        match self.spec.kind {
            DgpKind::Hl | DgpKind::Hp => self.spec.effect_size,
            _ => 1.0,
        }
    }

    /// The treatment effect as it enters the outcome.
    pub fn tau(&self, x: &DesignMatrix) -> Vec<f64> {
        let w = self.effect_weight();
        self.tau_link.eval(x).into_iter().map(|v| w * v).collect()
    }

    /// The control-arm mean response.
    pub fn mu0(&self, x: &DesignMatrix) -> Vec<f64> {
        let w = match self.spec.kind {
            DgpKind::Hl | DgpKind::Hp => 1.0 - self.spec.effect_size,
            _ => 1.0,
        };
        self.mu0_link.eval(x).into_iter().map(|v| w * v).collect()
    }

    /// Propensity before any quantile shift.
    pub fn pi_unshifted(&self, x: &DesignMatrix) -> Vec<f64> {
        if self.spec.kind == DgpKind::Linear {
            return vec![0.5; x.nrows()];
        }
        self.pi_link.eval(x).into_iter().map(expit).collect()
    }

    /// The probability with which treatment was actually assigned.
    pub fn pi(&self, x: &DesignMatrix) -> Vec<f64> {
        let raw = self.pi_unshifted(x);
        if self.spec.kind == DgpKind::Hp {
            raw.into_iter().map(|p| clip_probability(p - self.pi_shift)).collect()
        } else {
            raw
        }
    }

    pub fn eval(&self, x: &DesignMatrix, which: OracleQuantity) -> Vec<f64> {
        match which {
            OracleQuantity::Tau => self.tau(x),
            OracleQuantity::Mu0 => self.mu0(x),
            OracleQuantity::Pi => self.pi(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    pub oracle: Option<Arc<Oracle>>,
    /// Realized outcome noise, simulation only.
    pub noise: Option<Vec<f64>>,
}

impl Dataset {
    /// Observed data without oracle information.
    pub fn new(x: DesignMatrix, a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        crate::error::check_len("treatment length", x.nrows(), a.len())?;
        crate::error::check_len("outcome length", x.nrows(), y.len())?;
        if let Some(&v) = a.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("treatment must be 0/1, found {v}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite outcome".into()));
        }
        Ok(Self {
            x,
            a,
            y,
            oracle: None,
            noise: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn treated_count(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            oracle: self.oracle.clone(),
            noise: self.noise.as_ref().map(|e| rows.iter().map(|&i| e[i]).collect()),
        }
    }

    pub fn oracle(&self) -> Result<&Oracle> {
        self.oracle.as_deref().ok_or(Error::MissingOracle)
    }
}

pub fn oracle_eval(data: &Dataset, which: OracleQuantity) -> Result<Vec<f64>> {
    Ok(data.oracle()?.eval(&data.x, which))
}

fn rademacher(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn draw_set(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Vec<usize> {
    let mut s = index::sample(rng, d, k).into_vec();
    s.sort_unstable();
    s
}

/// Monomials of degree 1..=3 over `set`, each with a Rademacher coefficient.
fn polynomial_link(rng: &mut ChaCha8Rng, set: &[usize], degree: usize) -> Link {
    let map = PolynomialMap::new(set.len(), degree, true).expect("non-empty set");
    Link {
        terms: map
            .monomials()
            .iter()
            .map(|m| (m.iter().map(|&l| set[l]).collect(), rademacher(rng)))
            .collect(),
    }
}

fn linear_link(rng: &mut ChaCha8Rng, set: &[usize]) -> Link {
    Link {
        terms: set.iter().map(|&j| (vec![j], rademacher(rng))).collect(),
    }
}

fn ld_oracle(spec: &DgpSpec) -> Oracle {
    let lin = |t: &[(usize, f64)]| Link {
        terms: t.iter().map(|&(j, c)| (vec![j], c)).collect(),
    };
    let mut pi_link = lin(&[(0, -0.4), (4, 0.25)]);
    pi_link.terms.insert(1, (vec![0, 1], 0.1));
    let cond = 1.0 - spec.rho * spec.rho;
    Oracle {
        spec: spec.clone(),
        important: ImportantSets {
            pi: vec![0, 1, 4],
            mu0: vec![2, 5],
            tau: vec![0, 1, 2],
        },
        pi_link,
        mu0_link: lin(&[(2, 1.0), (5, -1.0)]),
        tau_link: lin(&[(0, 1.0), (1, 2.0), (2, 1.0)]),
        pi_shift: 0.0,
        analytic_importance: Some(vec![cond, 4.0 * cond, cond, 0.0, 0.0, 0.0]),
    }
}

/// Coefficients and important sets; depends only on the spec.
pub fn build_oracle(spec: &DgpSpec) -> Result<Oracle> {
    spec.validate()?;
    Ok(match spec.kind {
        DgpKind::Ld => ld_oracle(spec),
        DgpKind::Linear => {
            let tau: Vec<usize> = (0..spec.d).filter(|&j| spec.beta[j] != 0.0).collect();
            Oracle {
                spec: spec.clone(),
                important: ImportantSets {
                    pi: Vec::new(),
                    mu0: Vec::new(),
                    tau: tau.clone(),
                },
                pi_link: Link { terms: Vec::new() },
                mu0_link: Link { terms: Vec::new() },
                tau_link: Link {
                    terms: tau.iter().map(|&j| (vec![j], spec.beta[j])).collect(),
                },
                pi_shift: 0.0,
                // independent unit-variance covariates: var(X_j | X_-j) = 1
                analytic_importance: Some(spec.beta.iter().map(|b| b * b).collect()),
            }
        }
        DgpKind::Hl | DgpKind::Hp => {
            let mut rng = stream_rng(spec.seed_coeffs, Stream::Coefficients, &[spec.kind.tag()]);
            let next = |rng: &mut ChaCha8Rng| {
                let set = draw_set(rng, spec.d, spec.d_imp);
                let link = if spec.kind == DgpKind::Hl {
                    linear_link(rng, &set)
                } else {
                    polynomial_link(rng, &set, spec.degree)
                };
                (set, link)
            };
            let (s_pi, pi_link) = next(&mut rng);
            let (s_mu, mu0_link) = next(&mut rng);
            let (s_tau, tau_link) = next(&mut rng);
            Oracle {
                spec: spec.clone(),
                important: ImportantSets {
                    pi: s_pi,
                    mu0: s_mu,
                    tau: s_tau,
                },
                pi_link,
                mu0_link,
                tau_link,
                pi_shift: 0.0,
                analytic_importance: None,
            }
        }
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sample_covariates(spec: &DgpSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<DesignMatrix> {
    let d = spec.d;
    let mut data = vec![0.0; n * d];
    let r = spec.rho;
    for i in 0..n {
        let row = &mut data[i * d..(i + 1) * d];
        if spec.kind == DgpKind::Ld {
            for p in 0..3 {
                let (z1, z2) = (normal(rng), normal(rng));
                row[2 * p] = z1;
                row[2 * p + 1] = r * z1 + (1.0 - r * r).sqrt() * z2;
            }
        } else {
            let z0 = normal(rng);
            for v in row.iter_mut() {
                *v = r.sqrt() * z0 + (1.0 - r).sqrt() * normal(rng);
            }
        }
    }
    DesignMatrix::from_row_slice(n, d, &data)
}

/// Draws `n` rows of the design described by `spec` with the dataset seed `seed`.
pub fn sample(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut oracle = build_oracle(spec)?;
    let mut rng = stream_rng(seed, Stream::Dataset, &[spec.kind.tag(), spec.seed_coeffs]);
    let x = sample_covariates(spec, n, &mut rng)?;
    if spec.kind == DgpKind::Hp {
        oracle.pi_shift = quantile(&oracle.pi_unshifted(&x), spec.treat_quantile);
    }
    let pi = oracle.pi(&x);
    let a: Vec<u8> = pi.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect();
    let noise: Vec<f64> = (0..n).map(|_| spec.noise_sd * normal(&mut rng)).collect();
    let tau = oracle.tau(&x);
    let mu0 = oracle.mu0(&x);
    let y = (0..n)
        .map(|i| mu0[i] + f64::from(a[i]) * tau[i] + noise[i])
        .collect();
    Ok(Dataset {
        x,
        a,
        y,
        oracle: Some(Arc::new(oracle)),
        noise: Some(noise),
    })
}

pub fn sample_ld(n: usize, seed: u64) -> Result<Dataset> {
    sample(&DgpSpec::ld(), n, seed)
}

pub fn sample_hl(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    if spec.kind != DgpKind::Hl {
        return Err(Error::InvalidSpec("sample_hl needs an hl spec".into()));
    }
    sample(spec, n, seed)
}

pub fn sample_hp(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    if spec.kind != DgpKind::Hp {
        return Err(Error::InvalidSpec("sample_hp needs an hp spec".into()));
    }
    sample(spec, n, seed)
}

//! Feasible CATE risks and numerical checks of their decompositions.

use crate::cate::{pseudo_outcome, NuisanceEstimates};
use crate::dgp::{Dataset, OracleQuantity};
use crate::error::{check_len, Error, Result};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RiskKind {
    /// Mean squared error against the pseudo-outcome.
    PoRisk,
    /// Robinson-residual risk.
    RRisk,
    /// Mean squared error against the true effect (simulation only).
    OraclePehe,
}

impl RiskKind {
    pub fn name(self) -> &'static str {
        match self {
            RiskKind::PoRisk => "po_risk",
            RiskKind::RRisk => "r_risk",
            RiskKind::OraclePehe => "oracle_pehe",
        }
    }
}

impl std::str::FromStr for RiskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "po_risk" => Ok(RiskKind::PoRisk),
            "r_risk" => Ok(RiskKind::RRisk),
            "oracle_pehe" => Ok(RiskKind::OraclePehe),
            _ => Err(Error::InvalidSpec(format!("unknown risk `{s}`"))),
        }
    }
}

/// `mean((phi - tau_pred)^2)`.
pub fn po_risk(tau_pred: &[f64], phi: &[f64]) -> Result<f64> {
    check_len("pseudo-outcome length", tau_pred.len(), phi.len())?;
    Ok(mean(&tau_pred.iter().zip(phi).map(|(t, p)| (p - t) * (p - t)).collect::<Vec<_>>()))
}

/// `mean(((y - m_hat) - (a - pi_hat) tau_pred)^2)`.
pub fn r_risk(tau_pred: &[f64], y: &[f64], a: &[u8], nuis: &NuisanceEstimates) -> Result<f64> {
    check_len("outcome length", tau_pred.len(), y.len())?;
    check_len("treatment length", tau_pred.len(), a.len())?;
    check_len("nuisance length", tau_pred.len(), nuis.len())?;
    let r: Vec<f64> = (0..y.len())
        .map(|i| {
            let e = (y[i] - nuis.m_hat[i]) - (f64::from(a[i]) - nuis.pi_hat[i]) * tau_pred[i];
            e * e
        })
        .collect();
    Ok(mean(&r))
}

/// Everything needed to score CATE predictions on one evaluation split.
#[derive(Debug, Clone)]
pub struct RiskContext {
    pub y: Vec<f64>,
    pub a: Vec<u8>,
    pub nuisances: NuisanceEstimates,
    pub phi: Vec<f64>,
    pub tau_oracle: Option<Vec<f64>>,
}

impl RiskContext {
    pub fn new(data: &Dataset, nuisances: NuisanceEstimates) -> Result<Self> {
        let phi = pseudo_outcome(&data.y, &data.a, &nuisances)?;
        let tau_oracle = data
            .oracle
            .as_ref()
            .map(|o| o.eval(&data.x, OracleQuantity::Tau));
        Ok(Self {
            y: data.y.clone(),
            a: data.a.clone(),
            nuisances,
            phi,
            tau_oracle,
        })
    }

    pub fn evaluate(&self, kind: RiskKind, tau_pred: &[f64]) -> Result<f64> {
        match kind {
            RiskKind::PoRisk => po_risk(tau_pred, &self.phi),
            RiskKind::RRisk => r_risk(tau_pred, &self.y, &self.a, &self.nuisances),
            RiskKind::OraclePehe => {
                let tau = self.tau_oracle.as_ref().ok_or(Error::MissingOracle)?;
                po_risk(tau_pred, tau)
            }
        }
    }
}

/// Pseudo-outcome risk under oracle nuisances, split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoDecomposition {
    pub lhs: f64,
    pub pehe: f64,
    /// `mean((eps / (pi (1 - pi)))^2)` with `eps = (y - mu_a)(a - pi)`.
    pub noise_term: f64,
    /// `mean((tau - tau_pred) eps / (pi (1 - pi)))`; vanishes in expectation.
    pub cross_term: f64,
    pub cross_term_se: f64,
}

impl PoDecomposition {
    pub fn rhs(&self) -> f64 {
        self.pehe + self.noise_term
    }
}

/// R-risk under oracle nuisances with both candidate right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RDecomposition {
    pub lhs: f64,
    /// `mean(e^2)` of the realized outcome noise.
    pub noise_term: f64,
    /// `mean(pi (1 - pi) (tau - tau_pred)^2)`.
    pub weighted_tau_risk: f64,
    /// `mean((pi (1 - pi) (tau - tau_pred))^2)`.
    pub squared_weight_tau_risk: f64,
}

impl RDecomposition {
    pub fn rhs_weighted(&self) -> f64 {
        self.weighted_tau_risk + self.noise_term
    }

    pub fn rhs_squared_weight(&self) -> f64 {
        self.squared_weight_tau_risk + self.noise_term
    }

    /// The candidate closer to the left-hand side, with its relative error.
    pub fn best_match(&self) -> (&'static str, f64) {
        let rel = |r: f64| (self.lhs - r).abs() / self.lhs.abs().max(f64::MIN_POSITIVE);
        let (w, s) = (rel(self.rhs_weighted()), rel(self.rhs_squared_weight()));
        if w <= s {
            ("weighted", w)
        } else {
            ("squared_weight", s)
        }
    }
}

struct OracleParts {
    tau: Vec<f64>,
    pi: Vec<f64>,
    nuis: NuisanceEstimates,
}

fn oracle_parts(data: &Dataset, tau_pred: &[f64]) -> Result<OracleParts> {
    let nuis = NuisanceEstimates::from_oracle(data)?;
    check_len("prediction length", data.n(), tau_pred.len())?;
    let tau = data.oracle()?.eval(&data.x, OracleQuantity::Tau);
    Ok(OracleParts {
        tau,
        pi: nuis.pi_hat.clone(),
        nuis,
    })
}

pub fn verify_po_decomposition(data: &Dataset, tau_pred: &[f64]) -> Result<PoDecomposition> {
    let p = oracle_parts(data, tau_pred)?;
    let phi = pseudo_outcome(&data.y, &data.a, &p.nuis)?;
    let n = data.n();
    let mut noise = Vec::with_capacity(n);
    let mut cross = Vec::with_capacity(n);
    for i in 0..n {
        let mu_a = if data.a[i] == 1 { p.nuis.mu1_hat[i] } else { p.nuis.mu0_hat[i] };
        let eps = (data.y[i] - mu_a) * (f64::from(data.a[i]) - p.pi[i]);
        let scaled = eps / (p.pi[i] * (1.0 - p.pi[i]));
        noise.push(scaled * scaled);
        cross.push((p.tau[i] - tau_pred[i]) * scaled);
    }
    Ok(PoDecomposition {
        lhs: po_risk(tau_pred, &phi)?,
        pehe: po_risk(tau_pred, &p.tau)?,
        noise_term: mean(&noise),
        cross_term: mean(&cross),
        cross_term_se: crate::stats::std_dev(&cross, 1) / (n as f64).sqrt(),
    })
}

pub fn verify_r_decomposition(data: &Dataset, tau_pred: &[f64]) -> Result<RDecomposition> {
    let p = oracle_parts(data, tau_pred)?;
    let noise = data
        .noise
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("realized noise unavailable".into()))?;
    let n = data.n();
    let mut w = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let v = p.pi[i] * (1.0 - p.pi[i]);
        let diff = p.tau[i] - tau_pred[i];
        w.push(v * diff * diff);
        s.push((v * diff) * (v * diff));
    }
    Ok(RDecomposition {
        lhs: r_risk(tau_pred, &data.y, &data.a, &p.nuis)?,
        noise_term: mean(&noise.iter().map(|e| e * e).collect::<Vec<_>>()),
        weighted_tau_risk: mean(&w),
        squared_weight_tau_risk: mean(&s),
    })
}

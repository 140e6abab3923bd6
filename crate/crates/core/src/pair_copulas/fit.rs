//! Maximum-likelihood fitting of a single pair copula with AIC selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kendall_tau, maximize_scalar_from, qnorm};

use super::{clip, param_of_tau, Family, PairCopula, Rotation};

/// One (family, rotation) entry of a candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub family: Family,
    pub rotation: Rotation,
}

impl Candidate {
    pub fn new(family: Family, rotation: Rotation) -> Self {
        Self { family, rotation }
    }
}

/// Every family with every rotation it admits, Independence first.
pub fn default_candidates() -> Vec<Candidate> {
    candidates_for(&Family::ALL)
}

/// All admissible rotations of the given families, Independence first.
pub fn candidates_for(families: &[Family]) -> Vec<Candidate> {
    let mut out = vec![Candidate::new(Family::Independence, Rotation::R0)];
    for &family in families {
        if family == Family::Independence {
            continue;
        }
        for &rotation in family.rotations() {
            out.push(Candidate::new(family, rotation));
        }
    }
    out
}

/// The selected copula with its maximized log-likelihood and AIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub copula: PairCopula,
    pub loglik: f64,
    pub aic: f64,
    /// Empirical Kendall's τ of the input pairs.
    pub tau_empirical: f64,
}

const MIN_SAMPLE: usize = 10;
const PARAM_TOL: f64 = 1e-7;

/// Open search interval for each family's parameter.
fn bounds(family: Family) -> (f64, f64) {
    match family {
        Family::Independence => (0.0, 0.0),
        Family::Gaussian => (-0.9999, 0.9999),
        Family::Clayton => (1e-4, 28.0),
        Family::Gumbel => (1.0, 17.0),
        Family::Frank => (-35.0, 35.0),
        Family::Joe => (1.0 + 1e-4, 30.0),
    }
}

/// Fits every candidate by maximum likelihood and returns the one with the
/// smallest AIC. Independence (log-likelihood 0, no parameters) always
/// competes, so the result is never worse than AIC 0. Ties go to the earlier
/// candidate.
///
/// Rotations are pruned by the sign of the empirical τ: {0°, 180°} for τ ≥ 0
/// and {90°, 270°} otherwise.
pub fn fit_pair(u: &[f64], v: &[f64], candidates: &[Candidate]) -> Result<PairFit> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!(
            "pair samples differ in length ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if u.len() < MIN_SAMPLE {
        return Err(Error::Domain(format!(
            "need at least {MIN_SAMPLE} observations to fit a pair copula, got {}",
            u.len()
        )));
    }
    if let Some(bad) = u.iter().chain(v).find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::Domain(format!("pseudo-observation {bad} outside (0,1)")));
    }

    let tau = kendall_tau(u, v);
    let u: Vec<f64> = u.iter().map(|&x| clip(x)).collect();
    let v: Vec<f64> = v.iter().map(|&x| clip(x)).collect();

    let mut best = PairFit {
        copula: PairCopula::independence(),
        loglik: 0.0,
        aic: 0.0,
        tau_empirical: tau,
    };

    for cand in candidates {
        if cand.family == Family::Independence {
            continue;
        }
        let keep = if tau >= 0.0 {
            matches!(cand.rotation, Rotation::R0 | Rotation::R180)
        } else {
            matches!(cand.rotation, Rotation::R90 | Rotation::R270)
        };
        if !keep && cand.family.is_rotatable() {
            continue;
        }
        if !cand.family.is_rotatable() && cand.rotation != Rotation::R0 {
            continue;
        }
        let Some((copula, loglik)) = fit_candidate(*cand, &u, &v, tau) else {
            continue;
        };
        let aic = -2.0 * loglik + 2.0 * cand.family.n_params() as f64;
        if aic < best.aic {
            best = PairFit {
                copula,
                loglik,
                aic,
                tau_empirical: tau,
            };
        }
    }
    Ok(best)
}

/// MLE for one candidate; `None` when the likelihood cannot be evaluated.
fn fit_candidate(cand: Candidate, u: &[f64], v: &[f64], tau: f64) -> Option<(PairCopula, f64)> {
    let (lo, hi) = bounds(cand.family);
    let tau_base = if cand.rotation.negates() { -tau } else { tau };
    let start = match cand.family {
        Family::Gaussian | Family::Frank => param_of_tau(cand.family, tau_base).ok(),
        _ => param_of_tau(cand.family, tau_base.clamp(0.0, 0.95)).ok(),
    }
    .unwrap_or(0.5 * (lo + hi))
    .clamp(lo, hi);

    let best = if cand.family == Family::Gaussian {
        let n = u.len() as f64;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (&a, &b) in u.iter().zip(v) {
            let (x, y) = (qnorm(a), qnorm(b));
            sxx += x * x + y * y;
            sxy += x * y;
        }
        let ll = |rho: f64| {
            let one_m = 1.0 - rho * rho;
            -0.5 * n * one_m.ln() - (rho * rho * sxx - 2.0 * rho * sxy) / (2.0 * one_m)
        };
        maximize_scalar_from(ll, lo, hi, start, PARAM_TOL).ok()?
    } else {
        let ll = |theta: f64| match PairCopula::new(cand.family, cand.rotation, theta) {
            Ok(c) => u.iter().zip(v).map(|(&a, &b)| c.log_pdf(a, b)).sum(),
            Err(_) => f64::NEG_INFINITY,
        };
        maximize_scalar_from(ll, lo, hi, start, PARAM_TOL).ok()?
    };

    let mut theta = best.argmax;
    if cand.family == Family::Frank && theta.abs() < 1e-8 {
        theta = 1e-8_f64.copysign(theta);
    }
    let copula = PairCopula::new(cand.family, cand.rotation, theta).ok()?;
    best.max.is_finite().then_some((copula, best.max))
}

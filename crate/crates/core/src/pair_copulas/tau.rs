//! Kendall's τ as a function of the copula parameter and its inverse.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{debye1, find_root, integrate};

use super::{Family, PairCopula};

pub(super) fn tau_of(c: &PairCopula) -> f64 {
    let base = base_tau(c.family(), c.theta());
    if c.rotation().negates() {
        -base
    } else {
        base
    }
}

/// τ of the unrotated family at `theta`.
pub(super) fn base_tau(family: Family, theta: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian => 2.0 / PI * theta.asin(),
        Family::Clayton => theta / (theta + 2.0),
        Family::Gumbel => 1.0 - 1.0 / theta,
        Family::Frank => {
            if theta.abs() < 0.1 {
                // series of the Debye expression; avoids cancellation near 0
                let t2 = theta * theta;
                return theta * (1.0 / 9.0 - t2 / 900.0 + t2 * t2 / 52_920.0);
            }
            1.0 - 4.0 / theta * (1.0 - debye1(theta))
        }
        Family::Joe => joe_tau(theta),
    }
}

/// τ = 1 + 4 ∫₀¹ φ(t)/φ′(t) dt with the Joe generator φ(t) = −ln(1 − (1−t)^θ),
/// written in s = 1 − t and q = s^θ.
fn joe_tau(theta: f64) -> f64 {
    if theta <= 1.0 {
        return 0.0;
    }
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let q = s.powf(theta);
        if q >= 1.0 {
            return 0.0;
        }
        let ratio = if q < 1e-300 { -1.0 } else { (-q).ln_1p() / q };
        (1.0 - q) * s * ratio / theta
    };
    1.0 + 4.0 * integrate(integrand, 0.0, 1.0, 1e-13)
}

/// Parameter of the unrotated `family` whose Kendall's τ equals `tau`.
///
/// For the positive-only families `tau` must lie in (0, 1) (Gumbel also
/// accepts 0). Rotated copulas are handled by passing |τ|.
pub fn param_of_tau(family: Family, tau: f64) -> Result<f64> {
    let out_of_range = || Error::Domain(format!("Kendall's tau {tau} not attainable by the {family} family"));
    if !(tau > -1.0 && tau < 1.0) {
        return Err(out_of_range());
    }
    match family {
        Family::Independence => {
            if tau == 0.0 {
                Ok(0.0)
            } else {
                Err(out_of_range())
            }
        }
        Family::Gaussian => Ok((PI * tau / 2.0).sin()),
        Family::Clayton if tau > 0.0 => Ok(2.0 * tau / (1.0 - tau)),
        Family::Gumbel if tau >= 0.0 => Ok(1.0 / (1.0 - tau)),
        Family::Frank if tau != 0.0 => {
            let sign = tau.signum();
            let upper = expand_bracket(|t| base_tau(Family::Frank, t), tau.abs(), 1.0)?;
            let root = find_root(|t| base_tau(Family::Frank, t) - tau.abs(), 1e-8, upper, 1e-12)?;
            Ok(sign * root)
        }
        Family::Joe if tau > 0.0 => {
            let upper = expand_bracket(joe_tau, tau, 2.0)?;
            find_root(|t| joe_tau(t) - tau, 1.0, upper, 1e-12)
        }
        _ => Err(out_of_range()),
    }
}

/// Smallest `start · 2^k` at which the increasing map `f` reaches `target`.
fn expand_bracket(f: impl Fn(f64) -> f64, target: f64, start: f64) -> Result<f64> {
    let mut upper = start;
    for _ in 0..40 {
        if f(upper) >= target {
            return Ok(upper);
        }
        upper *= 2.0;
    }
    Err(Error::Numeric(format!("could not bracket Kendall's tau {target}")))
}

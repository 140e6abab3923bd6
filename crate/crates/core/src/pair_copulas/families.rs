//! Unrotated one-parameter families. All functions expect arguments already
//! clipped into the open unit interval and a parameter inside the family's
//! domain; the rotation layer in `mod.rs` takes care of both.

use crate::numerics::{bivariate_normal_cdf, pnorm, qnorm};

use super::Family;

/// log(eᵃ + eᵇ)
#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// log(1 + eˣ)
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

// Frank with |θ| below this is evaluated as the independence copula.
const FRANK_ZERO: f64 = 1e-10;

pub(super) fn cdf(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => u * v,
        Family::Gaussian => bivariate_normal_cdf(qnorm(u), qnorm(v), theta).unwrap_or(f64::NAN),
        Family::Clayton => (-clayton_log_a(theta, u, v) / theta).exp(),
        Family::Gumbel => (-gumbel_a(theta, u, v)).exp(),
        Family::Frank => {
            if theta.abs() < FRANK_ZERO {
                return u * v;
            }
            -(frank_denominator(theta, u, v) / -(-theta).exp_m1()).ln() / theta
        }
        Family::Joe => {
            let log_s = joe_log_s(theta, u, v);
            -(log_s / theta).exp_m1()
        }
    }
}

pub(super) fn log_pdf(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian => {
            let x = qnorm(u);
            let y = qnorm(v);
            gaussian_log_pdf_scores(theta, x, y)
        }
        Family::Clayton => {
            let log_a = clayton_log_a(theta, u, v);
            theta.ln_1p() - (1.0 + theta) * (u.ln() + v.ln()) - (2.0 + 1.0 / theta) * log_a
        }
        Family::Gumbel => {
            let lu = -u.ln();
            let lv = -v.ln();
            let log_t = log_add_exp(theta * lu.ln(), theta * lv.ln());
            let a = (log_t / theta).exp();
            -a + lu + lv + (2.0 / theta - 2.0) * log_t
                + (theta - 1.0) * (lu.ln() + lv.ln())
                + ((theta - 1.0) / a).ln_1p()
        }
        Family::Frank => {
            if theta.abs() < FRANK_ZERO {
                return 0.0;
            }
            let e = (-theta).exp_m1();
            (-theta * e).ln() - theta * (u + v) - 2.0 * frank_denominator(theta, u, v).abs().ln()
        }
        Family::Joe => {
            let lu = (-u).ln_1p();
            let lv = (-v).ln_1p();
            let log_s = joe_log_s(theta, u, v);
            (1.0 / theta - 2.0) * log_s
                + (theta - 1.0) * (lu + lv)
                + (theta - 1.0 + log_s.exp()).ln()
        }
    }
}

/// Gaussian copula log-density in terms of normal scores.
#[inline]
pub(super) fn gaussian_log_pdf_scores(rho: f64, x: f64, y: f64) -> f64 {
    let one_m = 1.0 - rho * rho;
    -0.5 * one_m.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_m)
}

/// h(u | v) = ∂C(u, v)/∂v.
pub(super) fn h(family: Family, theta: f64, u: f64, v: f64) -> f64 {
    let value = match family {
        Family::Independence => u,
        Family::Gaussian => {
            let x = qnorm(u);
            let y = qnorm(v);
            pnorm((x - theta * y) / (1.0 - theta * theta).sqrt())
        }
        Family::Clayton => {
            let log_a = clayton_log_a(theta, u, v);
            ((-theta - 1.0) * v.ln() - (1.0 / theta + 1.0) * log_a).exp()
        }
        Family::Gumbel => {
            let lu = -u.ln();
            let lv = -v.ln();
            let log_t = log_add_exp(theta * lu.ln(), theta * lv.ln());
            let a = (log_t / theta).exp();
            (-a + (1.0 / theta - 1.0) * log_t + (theta - 1.0) * lv.ln() + lv).exp()
        }
        Family::Frank => {
            if theta.abs() < FRANK_ZERO {
                return u;
            }
            // e^{-θv}(1 − e^{-θu}) / D with D from `frank_denominator`, scaled by e^{θv}
            let a = (-theta * u).exp_m1();
            let b = (-theta * v).exp_m1();
            -a / (-(-theta * (u - v)).exp() * b - (-theta * (1.0 - v)).exp_m1())
        }
        Family::Joe => {
            let lu = (-u).ln_1p();
            let lv = (-v).ln_1p();
            let log_s = joe_log_s(theta, u, v);
            let one_m_ut = -(theta * lu).exp_m1();
            ((1.0 / theta - 1.0) * log_s + (theta - 1.0) * lv).exp() * one_m_ut
        }
    };
    value.clamp(0.0, 1.0)
}

/// Inverse of `h` in its first argument. Returns `None` when a numeric
/// inversion fails to converge.
pub(super) fn h_inv(family: Family, theta: f64, w: f64, v: f64) -> Option<f64> {
    match family {
        Family::Independence => Some(w),
        Family::Gaussian => {
            let y = qnorm(v);
            Some(pnorm(qnorm(w) * (1.0 - theta * theta).sqrt() + theta * y))
        }
        Family::Clayton => {
            // u = (1 + v^{-θ}(w^{-θ/(θ+1)} − 1))^{-1/θ}
            let c = (-(theta / (theta + 1.0)) * w.ln()).exp_m1();
            let log_inner = softplus(-theta * v.ln() + c.ln());
            Some((-log_inner / theta).exp())
        }
        Family::Frank => {
            if theta.abs() < FRANK_ZERO {
                return Some(w);
            }
            // u = −(1/θ)·ln[(e^{-θv}(1−w) + w e^{-θ}) / (e^{-θv}(1−w) + w)]
            let base = -theta * v + (-w).ln_1p();
            let num = log_add_exp(base, w.ln() - theta);
            let den = log_add_exp(base, w.ln());
            Some(-(num - den) / theta)
        }
        Family::Gumbel | Family::Joe => invert_h_numerically(family, theta, w, v),
    }
}

/// Safeguarded Newton iteration on u ↦ h(u | v) − w, which is increasing with
/// derivative equal to the copula density.
fn invert_h_numerically(family: Family, theta: f64, w: f64, v: f64) -> Option<f64> {
    const LO: f64 = super::CLIP;
    const HI: f64 = 1.0 - super::CLIP;
    let mut lo = LO;
    let mut hi = HI;
    if h(family, theta, lo, v) >= w {
        return Some(lo);
    }
    if h(family, theta, hi, v) <= w {
        return Some(hi);
    }
    let mut x = w.clamp(LO, HI);
    for _ in 0..200 {
        let f = h(family, theta, x, v) - w;
        if f.abs() < 1e-13 {
            return Some(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Some(0.5 * (lo + hi));
        }
        let slope = log_pdf(family, theta, x, v).exp();
        let newton = x - f / slope;
        x = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    None
}

/// (1 − e^{-θ}) − (1 − e^{-θu})(1 − e^{-θv}), written as a sum of same-signed
/// terms so it keeps full relative precision for large |θ|.
#[inline]
fn frank_denominator(theta: f64, u: f64, v: f64) -> f64 {
    -(-theta * u).exp() * (-theta * v).exp_m1() - (-theta * v).exp() * (-theta * (1.0 - v)).exp_m1()
}

/// log(u^{-θ} + v^{-θ} − 1), computed without overflow.
#[inline]
fn clayton_log_a(theta: f64, u: f64, v: f64) -> f64 {
    let a = -theta * u.ln();
    let b = -theta * v.ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

/// ((−ln u)^θ + (−ln v)^θ)^{1/θ}
#[inline]
fn gumbel_a(theta: f64, u: f64, v: f64) -> f64 {
    let log_t = log_add_exp(theta * (-u.ln()).ln(), theta * (-v.ln()).ln());
    (log_t / theta).exp()
}

/// log(ū^θ + v̄^θ − ū^θ v̄^θ) with ū = 1 − u, v̄ = 1 − v.
#[inline]
fn joe_log_s(theta: f64, u: f64, v: f64) -> f64 {
    let a = theta * (-u).ln_1p();
    let b = theta * (-v).ln_1p();
    log_add_exp(a, b + (-a.exp()).ln_1p())
}

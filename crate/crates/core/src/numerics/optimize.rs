//! Bounded scalar maximization and bracketed root finding (Brent's methods).

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;
const MAX_ITER: usize = 500;

/// Location and value of a maximum found by [`maximize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub max: f64,
}

/// Maximizes `f` on `[lo, hi]` with Brent's parabolic/golden-section search,
/// starting from the golden-section point.
pub fn maximize_scalar<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum> {
    maximize_scalar_from(f, lo, hi, lo + GOLDEN * (hi - lo), tol)
}

/// As [`maximize_scalar`], seeding the search at `start`.
///
/// Non-finite function values are treated as `-∞`. The result lies within
/// roughly `tol` of a local maximizer.
pub fn maximize_scalar_from<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    start: f64,
    tol: f64,
) -> Result<Maximum> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Optimization(format!("invalid interval [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::Optimization(format!("tolerance must be positive, got {tol}")));
    }
    let mut cost = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            -y
        } else {
            f64::INFINITY
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut x = if start > lo && start < hi {
        start
    } else {
        lo + GOLDEN * (hi - lo)
    };
    let (mut w, mut v) = (x, x);
    let mut fx = cost(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..MAX_ITER {
        let xm = 0.5 * (a + b);
        let tol1 = tol + 1e-12 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = cost(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    if !fx.is_finite() {
        return Err(Error::Optimization(format!(
            "objective is non-finite throughout [{lo}, {hi}]"
        )));
    }
    Ok(Maximum { argmax: x, max: -fx })
}

/// Finds a zero of `f` in `[lo, hi]` (Brent's zeroin). `f(lo)` and `f(hi)` must
/// have opposite signs or one of them must vanish.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Numeric(format!(
            "root not bracketed in [{lo}, {hi}]: f = ({fa}, {fb})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Numeric(format!("non-finite value at {b} during root search")));
        }
    }
    Err(Error::Numeric(format!("root search in [{lo}, {hi}] did not converge")))
}

//! Univariate and bivariate standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use gl_tables::GL_TABLES;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn dnorm(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF without argument checks. `±∞` map to 1 and 0.
#[inline]
pub fn pnorm(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile without argument checks. Returns `±∞` at the
/// endpoints and NaN outside `[0, 1]`.
pub fn qnorm(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = ppnd16(p);
    if !x.is_finite() {
        return x;
    }
    // One Newton step, carried out on the tail that holds `p`.
    let density = dnorm(x);
    if density == 0.0 {
        return x;
    }
    if x > 0.0 {
        x + (pnorm(-x) - (1.0 - p)) / density
    } else {
        x - (pnorm(x) - p) / density
    }
}

/// Φ(x) with domain checking.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("normal cdf of non-finite value {x}")));
    }
    Ok(pnorm(x))
}

/// Φ⁻¹(p) for `p ∈ (0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    Ok(qnorm(p))
}

// Wichura's AS 241 (PPND16) rational approximation.
fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        133.141_667_891_784_38,
        1_971.590_950_306_551_3,
        13_731.693_765_509_461,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_854,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_6,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_08,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_104,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_9,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_888,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_8e-15,
    ];
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// P(X ≤ x, Y ≤ y) for a standard bivariate normal with correlation `rho`.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!(
            "bivariate normal requires rho in (-1,1), got {rho}"
        )));
    }
    if x.is_nan() || y.is_nan() {
        return Err(Error::Domain("bivariate normal cdf of NaN".into()));
    }
    Ok(bvn_upper(-x, -y, rho))
}

/// Upper orthant probability P(X > h, Y > k), after Genz (2004).
pub(crate) fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { pnorm(-k) };
    }
    if k == f64::NEG_INFINITY {
        return pnorm(-h);
    }
    if r == 0.0 {
        return pnorm(-h) * pnorm(-k);
    }

    let two_pi = 2.0 * PI;
    let (nodes, weights) = if r.abs() < 0.3 {
        GL_TABLES.order6()
    } else if r.abs() < 0.75 {
        GL_TABLES.order12()
    } else {
        GL_TABLES.order20()
    };

    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for (&x, &w) in nodes.iter().zip(weights) {
            for t in [1.0 - x, 1.0 + x] {
                let sn = (asr * t).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return (bvn * asr / two_pi + pnorm(-h) * pnorm(-k)).clamp(0.0, 1.0);
    }

    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        let asr = -0.5 * (bs / a_s + hk);
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = two_pi.sqrt() * pnorm(-b / a);
            bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        let mut sum = 0.0;
        for (&x, &w) in nodes.iter().zip(weights) {
            for t in [1.0 - x, 1.0 + x] {
                let xs = (a * t) * (a * t);
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    sum += w * asr.exp() * (sp - ep);
                }
            }
        }
        bvn = (a * sum - bvn) / two_pi;
    }
    if r > 0.0 {
        bvn += pnorm(-h.max(k));
    } else if h >= k {
        bvn = -bvn;
    } else {
        let l = if h < 0.0 {
            pnorm(k) - pnorm(h)
        } else {
            pnorm(-h) - pnorm(-k)
        };
        bvn = l - bvn;
    }
    bvn.clamp(0.0, 1.0)
}

mod gl_tables {
    use std::sync::OnceLock;

    use crate::numerics::quadrature::gauss_legendre;

    pub(super) struct Tables {
        cells: [OnceLock<(Vec<f64>, Vec<f64>)>; 3],
    }

    pub(super) static GL_TABLES: Tables = Tables {
        cells: [OnceLock::new(), OnceLock::new(), OnceLock::new()],
    };

    // Positive half of the symmetric Gauss–Legendre rule on [-1, 1].
    fn half_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre(n);
        x.into_iter().zip(w).filter(|(x, _)| *x > 0.0).unzip()
    }

    impl Tables {
        fn get(&self, slot: usize, n: usize) -> (&[f64], &[f64]) {
            let (x, w) = self.cells[slot].get_or_init(|| half_rule(n));
            (x, w)
        }
        pub(super) fn order6(&self) -> (&[f64], &[f64]) {
            self.get(0, 6)
        }
        pub(super) fn order12(&self) -> (&[f64], &[f64]) {
            self.get(1, 12)
        }
        pub(super) fn order20(&self) -> (&[f64], &[f64]) {
            self.get(2, 20)
        }
    }
}

//! Effective numbers of tests per block, calibration of the local level for
//! family-wise error control, and the resulting test decisions.
//!
//! All tail events are evaluated on the copula scale: with continuous,
//! strictly increasing null marginals, T_j ≤ F_j⁻¹(1 − α_loc) holds exactly
//! when U_j ≤ 1 − α_loc, so one copula sample serves every α_loc.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::Grouping;
use crate::matrix::Matrix;
use crate::numerics::{pnorm, qnorm, RngStream};
use crate::sampler::{sample, Quantile};
use crate::vine_model::VineModel;

/// Known null distribution of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalNull {
    /// N(0, 1), for one-sided statistics.
    StdNormal,
    /// |N(0, 1)|, for two-sided statistics.
    HalfNormal,
}

impl MarginalNull {
    pub fn name(self) -> &'static str {
        match self {
            Self::StdNormal => "std_normal",
            Self::HalfNormal => "half_normal",
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Self::StdNormal => pnorm(x),
            Self::HalfNormal if x <= 0.0 => 0.0,
            Self::HalfNormal => libm::erf(x / std::f64::consts::SQRT_2),
        }
    }

    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Self::StdNormal => qnorm(p),
            // upper-tail form keeps precision for p near 1
            Self::HalfNormal => -qnorm(0.5 * (1.0 - p)),
        }
    }

    /// Critical value c with P(T > c) = alpha_loc.
    pub fn critical_value(self, alpha_loc: f64) -> f64 {
        match self {
            Self::StdNormal => -qnorm(alpha_loc),
            Self::HalfNormal => -qnorm(0.5 * alpha_loc),
        }
    }
}

impl Quantile for MarginalNull {
    fn quantile(&self, p: f64) -> f64 {
        MarginalNull::quantile(*self, p)
    }
}

impl fmt::Display for MarginalNull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarginalNull {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std_normal" => Ok(Self::StdNormal),
            "half_normal" => Ok(Self::HalfNormal),
            other => Err(Error::Config(format!("unknown marginal '{other}' (expected std_normal or half_normal)"))),
        }
    }
}

/// Empirical γ of order `order` for position `j` (0-based) of a block whose
/// statistics are the columns of `sample`: the fraction of rows with
/// T_{j−order+1..j} ≤ c among rows with T_{j−order+1..j−1} ≤ c.
pub fn gamma_mc(sample: &Matrix, c: &[f64], j: usize, order: usize) -> Result<f64> {
    if c.len() != sample.cols() || j >= sample.cols() || order == 0 || order > j + 1 {
        return Err(Error::Config(format!(
            "gamma of order {order} at position {} needs {} thresholds and order ≤ position",
            j + 1,
            sample.cols()
        )));
    }
    let (mut below, mut both) = (0usize, 0usize);
    for row in sample.row_iter() {
        if (j + 1 - order..j).all(|h| row[h] <= c[h]) {
            below += 1;
            if row[j] <= c[j] {
                both += 1;
            }
        }
    }
    if below == 0 {
        return Err(Error::Degenerate(format!(
            "no sampled row falls below the thresholds conditioning position {}",
            j + 1
        )));
    }
    Ok((both as f64 / below as f64).max(f64::MIN_POSITIVE))
}

/// γ from a copula CDF C of dimension `order`: C(v, …, v) / C(v, …, v, 1)
/// with v = 1 − alpha_loc.
pub fn gamma_copula<F: Fn(&[f64]) -> f64>(cdf: F, alpha_loc: f64, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::Config("gamma via a copula needs order ≥ 2".into()));
    }
    let mut point = vec![1.0 - alpha_loc; order];
    let joint = cdf(&point);
    point[order - 1] = 1.0;
    let margin = cdf(&point);
    if margin <= 0.0 {
        return Err(Error::Degenerate("copula vanishes at the conditioning point".into()));
    }
    Ok((joint / margin).clamp(f64::MIN_POSITIVE, 1.0))
}

/// Tail indicators of one block in block order. A row counts fully when
/// U ≤ v − h/2, not at all when U ≥ v + h/2, and linearly in between, with
/// h = 1/N; a joint event takes the smallest weight. The ramp changes any
/// count by less than one observation but makes M_eff continuous in the
/// local level, so calibration can hit its target.
struct TailBits<'a> {
    u: &'a Matrix,
    block: &'a [usize],
    v: f64,
    half_width: f64,
    /// Rows strictly below the ramp, as bitsets.
    full: Vec<Vec<u64>>,
    /// Rows on the ramp, per block position.
    partial: Vec<Vec<usize>>,
}

impl<'a> TailBits<'a> {
    fn new(u: &'a Matrix, block: &'a [usize], v: f64) -> Self {
        let half_width = 0.5 / u.rows() as f64;
        let n_words = u.rows().div_ceil(64);
        let mut full = vec![vec![0u64; n_words]; block.len()];
        let mut partial = vec![Vec::new(); block.len()];
        for (k, row) in u.row_iter().enumerate() {
            for (p, &col) in block.iter().enumerate() {
                let x = row[col];
                if x <= v - half_width {
                    full[p][k / 64] |= 1 << (k % 64);
                } else if x < v + half_width {
                    partial[p].push(k);
                }
            }
        }
        Self {
            u,
            block,
            v,
            half_width,
            full,
            partial,
        }
    }

    fn weight(&self, row: usize, p: usize) -> f64 {
        let x = self.u.get(row, self.block[p]);
        ((self.v + self.half_width - x) / (2.0 * self.half_width)).clamp(0.0, 1.0)
    }

    /// Weighted number of rows in the tail at every position of `positions`.
    fn count(&self, positions: &[usize]) -> f64 {
        let mut n = 0u64;
        for w in 0..self.full[0].len() {
            let mask = positions.iter().fold(!0u64, |m, &p| m & self.full[p][w]);
            n += u64::from(mask.count_ones());
        }
        let mut ramp: Vec<usize> = positions.iter().flat_map(|&p| self.partial[p].iter().copied()).collect();
        ramp.sort_unstable();
        ramp.dedup();
        let fractional: f64 = ramp
            .into_iter()
            .map(|r| positions.iter().map(|&p| self.weight(r, p)).fold(1.0, f64::min))
            .sum();
        n as f64 + fractional
    }

    /// P(tail at j | tail at every conditioning position).
    fn gamma(&self, conditioning: &[usize], j: usize) -> Result<f64> {
        let below = if conditioning.is_empty() { self.u.rows() as f64 } else { self.count(conditioning) };
        if below <= 0.0 {
            return Err(Error::Degenerate(format!(
                "no sampled row falls in the conditioning tail of block position {}",
                j + 1
            )));
        }
        let mut all = conditioning.to_vec();
        all.push(j);
        let both = self.count(&all);
        Ok((both / below).clamp(f64::MIN_POSITIVE, 1.0))
    }
}

/// Effective number of tests of a block whose members (columns of the copula
/// sample `u`) are listed in `block` order. `optimized` uses, for order 2,
/// the strongest pairwise conditioning on any preceding member.
pub fn meff_block(u: &Matrix, block: &[usize], order: usize, alpha_loc: f64, optimized: bool) -> Result<f64> {
    if block.is_empty() {
        return Err(Error::Config("empty block".into()));
    }
    if order < 2 {
        return Err(Error::Config(format!("order must be at least 2, got {order}")));
    }
    if optimized && order != 2 {
        return Err(Error::Config("optimized effective numbers are defined for order 2 only".into()));
    }
    if !(alpha_loc > 0.0 && alpha_loc < 1.0) {
        return Err(Error::Domain(format!("local level {alpha_loc} outside (0, 1)")));
    }
    let m = block.len();
    if m == 1 {
        return Ok(1.0);
    }
    let bits = TailBits::new(u, block, 1.0 - alpha_loc);
    let log_level = (-alpha_loc).ln_1p();
    let kappa = |gamma: f64| (gamma.ln() / log_level).clamp(0.0, 1.0);

    let mut total = 1.0;
    // ξ: positions 2..order−1 (1-based) conditioned on everything before them
    for l in 1..(order - 1).min(m) {
        let prefix: Vec<usize> = (0..l).collect();
        total += kappa(bits.gamma(&prefix, l)?);
    }
    for j in (order - 1).max(1)..m {
        let gamma = if optimized {
            let mut best = f64::MIN_POSITIVE;
            for k in 0..j {
                best = best.max(bits.gamma(&[k], j)?);
            }
            best
        } else {
            let window: Vec<usize> = (j + 1 - order..j).collect();
            bits.gamma(&window, j)?
        };
        total += kappa(gamma);
    }
    Ok(total.clamp(1.0, m as f64))
}

/// Settings of one calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Global family-wise level.
    pub alpha: f64,
    pub order: usize,
    pub optimized: bool,
    pub mc_size: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            order: 2,
            optimized: true,
            mc_size: 100_000,
        }
    }
}

/// Absolute tolerance on |bound − alpha|.
pub const CALIBRATION_TOLERANCE: f64 = 1e-6;
/// Fixed-point iterations before falling back to bisection.
pub const MAX_ITERATIONS: usize = 100;

/// A calibrated single-step multiple test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub alpha: f64,
    pub alpha_loc: f64,
    pub order: usize,
    pub optimized: bool,
    pub critical_values: Vec<f64>,
    pub block_meffs: Vec<f64>,
    pub total_meff: f64,
    /// 1 − (1 − alpha_loc)^total_meff.
    pub bound: f64,
    /// Monte Carlo size actually used (0 when no block needs sampling).
    pub mc_size: usize,
    /// Stream the Monte Carlo sample was drawn from.
    pub rng: RngStream,
    pub marginals: Vec<MarginalNull>,
    pub blocks: Vec<Vec<usize>>,
    /// Fixed-point and bisection steps taken.
    pub iterations: usize,
}

impl Calibration {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "alpha = {}, alpha_loc = {:.6e}, total M_eff = {:.4}, bound = {:.8}\n",
            self.alpha, self.alpha_loc, self.total_meff, self.bound
        );
        for (b, (block, m)) in self.blocks.iter().zip(&self.block_meffs).enumerate() {
            let members: Vec<String> = block.iter().map(|x| (x + 1).to_string()).collect();
            s += &format!("block {} ({}): M_eff = {m:.4}\n", b + 1, members.join(" "));
        }
        let c: Vec<String> = self.critical_values.iter().map(|c| format!("{c:.4}")).collect();
        s += &format!("critical values: {}\n", c.join(" "));
        s
    }
}

/// Σ_b M_eff,b at local level `a`.
fn block_meffs(u: Option<&Matrix>, blocks: &[Vec<usize>], settings: &CalibrationSettings, a: f64) -> Result<Vec<f64>> {
    blocks
        .iter()
        .map(|b| match (b.len(), u) {
            (1, _) => Ok(1.0),
            (_, Some(u)) => meff_block(u, b, settings.order, a, settings.optimized),
            (_, None) => unreachable!("multi-member blocks are always sampled"),
        })
        .collect()
}

/// 1 − (1 − a)^m without cancellation.
fn sidak_bound(a: f64, m: f64) -> f64 {
    -(m * (-a).ln_1p()).exp_m1()
}

/// Local level with 1 − (1 − a)^m = alpha.
fn sidak_level(alpha: f64, m: f64) -> f64 {
    -((-alpha).ln_1p() / m.max(1.0)).exp_m1()
}

/// Solves 1 − (1 − α_loc)^{Σ_b M_eff,b(α_loc)} = α on a single Monte Carlo
/// sample drawn from `model` (only when some block has two or more members).
/// A degenerate sample is redrawn at twice the size, at most twice.
pub fn calibrate(
    grouping: &Grouping,
    marginals: &[MarginalNull],
    model: &VineModel,
    settings: &CalibrationSettings,
    rng: RngStream,
) -> Result<Calibration> {
    let dim = model.dim();
    check_settings(grouping, marginals, dim, settings)?;
    let needs_sample = grouping.blocks.iter().any(|b| b.len() > 1);
    if needs_sample && settings.mc_size == 0 {
        return Err(Error::Config("Monte Carlo size must be positive".into()));
    }

    let mut mc_size = settings.mc_size;
    let mut attempt = 0;
    loop {
        let u = if needs_sample { Some(sample(model, mc_size, rng.child(attempt))?) } else { None };
        match calibrate_on(grouping, marginals, u.as_ref(), dim, settings, rng) {
            Err(Error::Degenerate(_)) if attempt < 2 => {
                attempt += 1;
                mc_size *= 2;
            }
            result => return result,
        }
    }
}

/// As [`calibrate`], but on a caller-supplied copula sample so that several
/// groupings can be compared on the same draw. `rng` is recorded as the
/// sample's origin; no retry is attempted.
pub fn calibrate_with_sample(
    grouping: &Grouping,
    marginals: &[MarginalNull],
    u: &Matrix,
    settings: &CalibrationSettings,
    rng: RngStream,
) -> Result<Calibration> {
    let dim = u.cols();
    check_settings(grouping, marginals, dim, settings)?;
    calibrate_on(grouping, marginals, Some(u), dim, settings, rng)
}

fn check_settings(grouping: &Grouping, marginals: &[MarginalNull], dim: usize, settings: &CalibrationSettings) -> Result<()> {
    let alpha = settings.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
    }
    if marginals.len() != dim {
        return Err(Error::Config(format!("{} marginals for {dim} statistics", marginals.len())));
    }
    if settings.order < 2 || (settings.optimized && settings.order != 2) {
        return Err(Error::Config(format!(
            "order {} is not supported{}",
            settings.order,
            if settings.optimized { " with optimized effective numbers" } else { "" }
        )));
    }
    grouping.check_partition(dim)
}

fn calibrate_on(
    grouping: &Grouping,
    marginals: &[MarginalNull],
    u: Option<&Matrix>,
    dim: usize,
    settings: &CalibrationSettings,
    rng: RngStream,
) -> Result<Calibration> {
    let needs_sample = grouping.blocks.iter().any(|b| b.len() > 1);
    let u = if needs_sample { u } else { None };
    let (alpha_loc, meffs, iterations) = solve_level(u, &grouping.blocks, settings, dim)?;
    let total_meff: f64 = meffs.iter().sum();
    Ok(Calibration {
        alpha: settings.alpha,
        alpha_loc,
        order: settings.order,
        optimized: settings.optimized,
        critical_values: marginals.iter().map(|m| m.critical_value(alpha_loc)).collect(),
        block_meffs: meffs,
        total_meff,
        bound: sidak_bound(alpha_loc, total_meff),
        mc_size: u.map_or(0, Matrix::rows),
        rng,
        marginals: marginals.to_vec(),
        blocks: grouping.blocks.clone(),
        iterations,
    })
}

/// Fixed-point iteration from α_loc = α; bisection between the Šidák level
/// and α if the iteration cycles on the step function of Monte Carlo counts.
fn solve_level(u: Option<&Matrix>, blocks: &[Vec<usize>], settings: &CalibrationSettings, dim: usize) -> Result<(f64, Vec<f64>, usize)> {
    let alpha = settings.alpha;
    let mut trace = String::new();
    let mut a = alpha;
    for it in 1..=MAX_ITERATIONS {
        let meffs = block_meffs(u, blocks, settings, a)?;
        let m: f64 = meffs.iter().sum();
        let bound = sidak_bound(a, m);
        trace += &format!("iteration {it}: alpha_loc = {a:.10e}, M_eff = {m:.6}, bound = {bound:.10}\n");
        if (bound - alpha).abs() <= CALIBRATION_TOLERANCE {
            return Ok((a, meffs, it));
        }
        let next = sidak_level(alpha, m);
        if next == a {
            break;
        }
        a = next;
    }

    // g(a) = bound(a) − α is ≤ 0 at the Šidák level (M_eff ≤ M) and ≥ 0 at α (M_eff ≥ 1).
    let (mut lo, mut hi) = (sidak_level(alpha, dim as f64), alpha);
    let mut steps = MAX_ITERATIONS;
    while hi - lo > f64::EPSILON * hi {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        let meffs = block_meffs(u, blocks, settings, mid)?;
        let m: f64 = meffs.iter().sum();
        let g = sidak_bound(mid, m) - alpha;
        trace += &format!("bisection {steps}: alpha_loc = {mid:.12e}, M_eff = {m:.6}, bound - alpha = {g:.3e}\n");
        if g.abs() <= CALIBRATION_TOLERANCE {
            return Ok((mid, meffs, steps));
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration {
        message: format!("no local level reaches |bound - alpha| <= {CALIBRATION_TOLERANCE}"),
        trace,
    })
}

/// Outcome of a calibrated multiple test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub reject: Vec<bool>,
    pub global: bool,
}

/// Rejects H_j iff t_j > c_j; the global null iff any H_j is rejected.
pub fn decide(t: &[f64], calibration: &Calibration) -> Result<Decision> {
    let c = &calibration.critical_values;
    if t.len() != c.len() {
        return Err(Error::Config(format!("{} statistics for {} critical values", t.len(), c.len())));
    }
    let reject: Vec<bool> = t.iter().zip(c).map(|(t, c)| t > c).collect();
    let global = reject.iter().any(|&r| r);
    Ok(Decision { reject, global })
}

#[cfg(test)]
mod tests;

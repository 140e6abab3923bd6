//! The two simulation studies: data-generating processes, the full
//! fit → group → calibrate → decide pipeline per run, and aggregation into
//! result tables for the Šidák, fixed-groups and chosen-groups comparators.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissmann::{pseudo_obs, select_structure};
use crate::error::{Error, Result};
use crate::grouping::{greedy_grouping, Fill, Grouping};
use crate::matrix::Matrix;
use crate::meff::{calibrate, calibrate_with_sample, decide, CalibrationSettings, MarginalNull};
use crate::numerics::{qnorm, RngStream};
use crate::pair_copulas::{default_candidates, Family, PairCopula, Rotation};
use crate::sampler::sample;
use crate::vine_model::{VineModel, VineStructure};

/// Mean shift of every coordinate with a false null hypothesis.
pub const EFFECT: f64 = 0.15;

/// One of the two simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// 15-variate normal with three interleaved blocks of correlation 0.9;
    /// two-sided tests of zero means.
    Gauss15,
    /// 9-variate D-vine with three independent blocks and normal marginals;
    /// one-sided tests of non-positive means.
    Vine9,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Gauss15 => "gauss15",
            Study::Vine9 => "vine9",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Study::Gauss15 => 15,
            Study::Vine9 => 9,
        }
    }

    /// Null distribution of every test statistic.
    pub fn marginal(self) -> MarginalNull {
        match self {
            Study::Gauss15 => MarginalNull::HalfNormal,
            Study::Vine9 => MarginalNull::StdNormal,
        }
    }

    /// 0-based coordinates whose mean is shifted by [`EFFECT`].
    pub fn false_nulls(self) -> std::ops::Range<usize> {
        match self {
            Study::Gauss15 => 11..15,
            Study::Vine9 => 5..9,
        }
    }

    /// The naive partition into consecutive coordinates.
    pub fn fixed_groups(self) -> Grouping {
        let size = self.dim() / 3;
        Grouping {
            blocks: (0..3).map(|b| (b * size..(b + 1) * size).collect()).collect(),
            target_size: size,
            leftovers_assigned: false,
        }
    }

    /// The blocks of dependent coordinates in the data-generating process.
    pub fn true_blocks(self) -> Vec<Vec<usize>> {
        (0..3).map(|r| (r..self.dim()).step_by(3).collect()).collect()
    }

    /// Draws n rows; `under_null` leaves every mean at zero.
    pub fn generate(self, n: usize, under_null: bool, rng: RngStream) -> Result<Matrix> {
        match self {
            Study::Gauss15 => gen_gauss15(n, under_null, rng),
            Study::Vine9 => gen_vine9(n, under_null, rng),
        }
    }

    /// T_j = |√n x̄_j| for gauss15 and √n x̄_j for vine9.
    pub fn statistics(self, x: &Matrix) -> Vec<f64> {
        let n = x.rows() as f64;
        let mut sums = vec![0.0; x.cols()];
        for row in x.row_iter() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums.iter()
            .map(|s| {
                let t = s / n.sqrt();
                match self {
                    Study::Gauss15 => t.abs(),
                    Study::Vine9 => t,
                }
            })
            .collect()
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss15" => Ok(Study::Gauss15),
            "vine9" => Ok(Study::Vine9),
            _ => Err(Error::Config(format!("unknown study '{s}' (expected gauss15 or vine9)"))),
        }
    }
}

/// A way of choosing the blocks for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// M singleton blocks.
    Sidak,
    /// Consecutive coordinates, ignoring the data.
    FixedGroups,
    /// Greedy grouping on the fitted vine.
    ChosenGroups,
}

impl Comparator {
    pub const ALL: [Comparator; 3] = [Comparator::Sidak, Comparator::FixedGroups, Comparator::ChosenGroups];

    pub fn name(self) -> &'static str {
        match self {
            Comparator::Sidak => "sidak",
            Comparator::FixedGroups => "fixed_groups",
            Comparator::ChosenGroups => "chosen_groups",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Comparator::Sidak => "Sidak correction",
            Comparator::FixedGroups => "fixed groups",
            Comparator::ChosenGroups => "chosen groups",
        }
    }
}

impl FromStr for Comparator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Comparator::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown comparator '{s}'")))
    }
}

/// Settings of one study at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub study: Study,
    /// Sample size per run.
    pub n: usize,
    pub runs: usize,
    pub n_blocks: usize,
    pub truncation: usize,
    pub alpha: f64,
    pub mc_size: usize,
    pub seed: u64,
    pub optimized: bool,
    pub comparators: Vec<Comparator>,
}

impl ExperimentConfig {
    /// Three blocks, truncation 2, α = 5%, 20 000 Monte Carlo draws and 400 runs.
    pub fn new(study: Study, n: usize) -> Self {
        Self {
            study,
            n,
            runs: 400,
            n_blocks: 3,
            truncation: 2,
            alpha: 0.05,
            mc_size: 20_000,
            seed: 42,
            optimized: true,
            comparators: Comparator::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.study.dim();
        if self.runs == 0 {
            return Err(Error::Config("at least one run is required".into()));
        }
        if self.n < 10 {
            return Err(Error::Config(format!("sample size {} is below 10", self.n)));
        }
        if self.comparators.is_empty() {
            return Err(Error::Config("no comparator selected".into()));
        }
        if self.n_blocks == 0 || self.n_blocks > dim {
            return Err(Error::Config(format!("number of blocks {} outside [1, {dim}]", self.n_blocks)));
        }
        if self.truncation == 0 || self.truncation >= dim {
            return Err(Error::Config(format!("truncation level {} outside [1, {}]", self.truncation, dim - 1)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.mc_size == 0 {
            return Err(Error::Config("Monte Carlo size must be positive".into()));
        }
        Ok(())
    }

    fn settings(&self) -> CalibrationSettings {
        CalibrationSettings {
            alpha: self.alpha,
            order: 2,
            optimized: self.optimized,
            mc_size: self.mc_size,
        }
    }

    /// Configuration fields shared by all sample sizes, as `key=value` pairs.
    fn echo(&self) -> String {
        let comparators: Vec<&str> = self.comparators.iter().map(|c| c.name()).collect();
        format!(
            "study={} runs={} blocks={} truncation={} alpha={} mc_size={} seed={} optimized={} comparators={}",
            self.study,
            self.runs,
            self.n_blocks,
            self.truncation,
            self.alpha,
            self.mc_size,
            self.seed,
            self.optimized,
            comparators.join(",")
        )
    }
}

/// Σ_jk = 1 if j = k, 0.9 if j ≡ k (mod 3), 0 otherwise.
pub fn gauss15_covariance() -> Matrix {
    let mut s = Matrix::zeros(15, 15);
    for j in 0..15 {
        for k in 0..15 {
            let v = if j == k {
                1.0
            } else if j % 3 == k % 3 {
                0.9
            } else {
                0.0
            };
            s.set(j, k, v);
        }
    }
    s
}

/// n rows from N(ϑ, Σ) with ϑ_j = 0.15 on coordinates 12..15 (1-based).
pub fn gen_gauss15(n: usize, under_null: bool, rng: RngStream) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::Config(format!("sample size {n} is below 2")));
    }
    let sigma = gauss15_covariance();
    let l = DMatrix::from_fn(15, 15, |j, k| sigma.get(j, k))
        .cholesky()
        .expect("the fixed covariance is positive definite")
        .unpack();
    let shift = shift(Study::Gauss15, under_null);
    let mut gen = rng.generator();
    let mut x = Matrix::zeros(n, 15);
    let mut z = [0.0; 15];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut gen);
        }
        let row = x.row_mut(i);
        for j in 0..15 {
            row[j] = shift[j] + (0..=j).map(|k| l[(j, k)] * z[k]).sum::<f64>();
        }
    }
    Ok(x)
}

fn shift(study: Study, under_null: bool) -> Vec<f64> {
    let mut s = vec![0.0; study.dim()];
    if !under_null {
        s[study.false_nulls()].fill(EFFECT);
    }
    s
}

/// The nine-dimensional D-vine along 1-4-7-2-5-8-3-6-9 truncated at level 2:
/// three blocks (1,4,7), (2,5,8), (3,6,9) joined by Independence edges.
pub fn vine9_model() -> VineModel {
    let c = |family, theta| PairCopula::new(family, Rotation::R0, theta).expect("valid fixed parameter");
    let ind = PairCopula::independence;
    let order = [0, 3, 6, 1, 4, 7, 2, 5, 8];
    let tree1 = vec![
        c(Family::Clayton, 11.0), // 1,4
        c(Family::Clayton, 12.0), // 4,7
        ind(),                    // 7,2
        c(Family::Clayton, 12.0), // 2,5
        c(Family::Gumbel, 8.0),   // 5,8
        ind(),                    // 8,3
        c(Family::Gumbel, 7.0),   // 3,6
        c(Family::Clayton, 8.0),  // 6,9
    ];
    let tree2 = vec![
        c(Family::Gumbel, 2.0),   // 1,7 | 4
        ind(),                    // 4,2 | 7
        ind(),                    // 7,5 | 2
        c(Family::Clayton, 11.0), // 2,8 | 5
        ind(),                    // 5,3 | 8
        ind(),                    // 8,6 | 3
        c(Family::Gumbel, 2.0),   // 3,9 | 6
    ];
    VineModel::new(VineStructure::dvine(&order, &[tree1, tree2], 2)).expect("the fixed D-vine is valid")
}

/// n rows with copula [`vine9_model`], standard normal marginals and mean
/// 0.15 on coordinates 6..9 (1-based).
pub fn gen_vine9(n: usize, under_null: bool, rng: RngStream) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::Config(format!("sample size {n} is below 2")));
    }
    let u = sample(&vine9_model(), n, rng)?;
    let shift = shift(Study::Vine9, under_null);
    let mut x = Matrix::zeros(n, 9);
    for i in 0..n {
        for (j, (v, s)) in x.row_mut(i).iter_mut().zip(&shift).enumerate() {
            *v = qnorm(u.get(i, j)) + s;
        }
    }
    Ok(x)
}

/// What one comparator produced in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorOutcome {
    pub comparator: Comparator,
    pub total_meff: f64,
    /// Common critical value of all statistics.
    pub critical_value: f64,
    /// Fraction of false nulls rejected on the shifted data.
    pub power: f64,
    /// Whether any hypothesis was rejected on the null data.
    pub null_rejection: bool,
}

/// One simulation run: the chosen grouping (when fitted) and every comparator's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub chosen_groups: Option<Grouping>,
    pub outcomes: Vec<ComparatorOutcome>,
}

/// Executes run `r`. The null data and the shifted data share their noise,
/// so the fitted vine (rank based, hence shift invariant) and the Monte Carlo
/// sample serve both; every comparator sees the same data and sample.
pub fn run_once(config: &ExperimentConfig, r: u64) -> Result<RunOutcome> {
    config.validate()?;
    let base = RngStream::new(config.seed, r);
    run_attempt(config, base.child(0)).or_else(|_| run_attempt(config, base.child(1)))
}

fn run_attempt(config: &ExperimentConfig, rng: RngStream) -> Result<RunOutcome> {
    let study = config.study;
    let dim = study.dim();
    let settings = config.settings();
    let marginals = vec![study.marginal(); dim];

    let null_data = study.generate(config.n, true, rng.child(0))?;
    let t_null = study.statistics(&null_data);
    let t_alt = study.statistics(&shifted(&null_data, &shift(study, false)));

    let needs_fit = config.comparators.iter().any(|&c| c != Comparator::Sidak);
    let fitted = if needs_fit {
        let model = select_structure(&pseudo_obs(&null_data)?, config.truncation, &default_candidates())?;
        let u = sample(&model, config.mc_size, rng.child(1))?;
        Some((model, u))
    } else {
        None
    };

    let mut chosen_groups = None;
    let mut outcomes = Vec::with_capacity(config.comparators.len());
    for &comparator in &config.comparators {
        let calibration = match (comparator, &fitted) {
            (Comparator::Sidak, _) => {
                let singletons = Grouping {
                    blocks: (0..dim).map(|j| vec![j]).collect(),
                    target_size: 1,
                    leftovers_assigned: false,
                };
                let independence = VineModel::new(VineStructure::dvine(&(0..dim).collect::<Vec<_>>(), &[], 1))?;
                calibrate(&singletons, &marginals, &independence, &settings, rng.child(1))?
            }
            (Comparator::FixedGroups, Some((_, u))) => {
                calibrate_with_sample(&study.fixed_groups(), &marginals, u, &settings, rng.child(1))?
            }
            (Comparator::ChosenGroups, Some((model, u))) => {
                let target = dim / config.n_blocks;
                let g = greedy_grouping(model, config.n_blocks, target, rng.child(2), Fill::Random)?;
                let cal = calibrate_with_sample(&g, &marginals, u, &settings, rng.child(1))?;
                chosen_groups = Some(g);
                cal
            }
            (_, None) => unreachable!("a vine is fitted whenever a grouping comparator is present"),
        };
        let on_null = decide(&t_null, &calibration)?;
        let on_alt = decide(&t_alt, &calibration)?;
        let false_nulls = study.false_nulls();
        let hits = false_nulls.clone().filter(|&j| on_alt.reject[j]).count();
        outcomes.push(ComparatorOutcome {
            comparator,
            total_meff: calibration.total_meff,
            critical_value: calibration.critical_values[0],
            power: hits as f64 / false_nulls.len() as f64,
            null_rejection: on_null.global,
        });
    }
    Ok(RunOutcome { chosen_groups, outcomes })
}

fn shifted(x: &Matrix, shift: &[f64]) -> Matrix {
    let mut y = x.clone();
    for i in 0..y.rows() {
        for (v, s) in y.row_mut(i).iter_mut().zip(shift) {
            *v += s;
        }
    }
    y
}

/// A run average with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

/// Averages over all runs for one comparator. Power and FWER are in per cent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorRow {
    pub comparator: Comparator,
    pub total_meff: Estimate,
    pub critical_value: Estimate,
    pub power: Estimate,
    pub fwer: Estimate,
}

/// Definition of empirical power recorded with every result.
pub const POWER_DEFINITION: &str = "mean over runs of the fraction of false nulls rejected, in per cent";

/// Aggregated results of one study at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub power_definition: String,
    pub rows: Vec<ComparatorRow>,
    /// Fraction of runs whose chosen grouping equals the true blocks as sets.
    pub chosen_blocks_recovered: Option<f64>,
}

impl ResultTable {
    pub fn row(&self, comparator: Comparator) -> Option<&ComparatorRow> {
        self.rows.iter().find(|r| r.comparator == comparator)
    }
}

/// Whether `g` equals `truth` as a set of sets.
pub fn same_partition(g: &Grouping, truth: &[Vec<usize>]) -> bool {
    let normalize = |blocks: &[Vec<usize>]| {
        let mut out: Vec<Vec<usize>> = blocks
            .iter()
            .map(|b| {
                let mut b = b.clone();
                b.sort_unstable();
                b
            })
            .collect();
        out.sort();
        out
    };
    normalize(&g.blocks) == normalize(truth)
}

/// Runs `config.runs` simulations in parallel (run r on stream r) and
/// averages them in run order.
pub fn run_study(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let runs: Vec<RunOutcome> = (0..config.runs as u64)
        .into_par_iter()
        .map(|r| {
            run_once(config, r).map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Numeric(format!("run {r} failed twice: {other}")),
            })
        })
        .collect::<Result<_>>()?;

    let rows = config
        .comparators
        .iter()
        .enumerate()
        .map(|(k, &comparator)| {
            let pick = |f: &dyn Fn(&ComparatorOutcome) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r.outcomes[k])).collect() };
            ComparatorRow {
                comparator,
                total_meff: Estimate::of(&pick(&|o| o.total_meff)),
                critical_value: Estimate::of(&pick(&|o| o.critical_value)),
                power: Estimate::of(&pick(&|o| 100.0 * o.power)),
                fwer: Estimate::of(&pick(&|o| if o.null_rejection { 100.0 } else { 0.0 })),
            }
        })
        .collect();
    let truth = config.study.true_blocks();
    let chosen_blocks_recovered = config.comparators.contains(&Comparator::ChosenGroups).then(|| {
        let hits = runs
            .iter()
            .filter(|r| r.chosen_groups.as_ref().is_some_and(|g| same_partition(g, &truth)))
            .count();
        hits as f64 / runs.len() as f64
    });
    Ok(ResultTable {
        config: config.clone(),
        power_definition: POWER_DEFINITION.to_string(),
        rows,
        chosen_blocks_recovered,
    })
}

/// The four table kinds written by [`emit_tables`].
const TABLES: [(&str, &str); 4] = [
    ("meff", "average total effective number of tests"),
    ("critical_values", "average critical value c"),
    ("power", "empirical power in per cent"),
    ("fwer", "empirical FWER in per cent under the global null"),
];

fn table_value(row: &ComparatorRow, kind: &str) -> Estimate {
    match kind {
        "meff" => row.total_meff,
        "critical_values" => row.critical_value,
        "power" => row.power,
        _ => row.fwer,
    }
}

/// Writes `<study>_{meff,critical_values,power,fwer}.csv` (comparator rows by
/// sample-size columns), `<study>_report.txt` and `<study>_results.json`
/// into `dir`. All tables must come from one study with one comparator list.
pub fn emit_tables(results: &[ResultTable], dir: &Path) -> Result<Vec<PathBuf>> {
    let first = results.first().ok_or_else(|| Error::Config("no results to write".into()))?;
    if first.rows.is_empty() {
        return Err(Error::Config("no comparator selected".into()));
    }
    let echo = first.config.echo();
    if let Some(r) = results.iter().find(|r| r.config.echo() != echo) {
        return Err(Error::Config(format!(
            "results differ in more than the sample size: '{}' vs '{echo}'",
            r.config.echo()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sizes: Vec<String> = results.iter().map(|r| r.config.n.to_string()).collect();
    let header = format!("# {echo} sizes={} power={POWER_DEFINITION}\n", sizes.join(","));
    let study = first.config.study;
    let mut written = Vec::new();
    let write = |name: String, text: String, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };

    let mut report = header.clone();
    for (kind, title) in TABLES {
        let mut csv = header.clone();
        csv += &format!("comparator,{}\n", sizes.join(","));
        let _ = writeln!(report, "\n{title}\n{:<18}{}", "sample size", pad(&sizes));
        for (k, row) in first.rows.iter().enumerate() {
            let values: Vec<Estimate> = results.iter().map(|r| table_value(&r.rows[k], kind)).collect();
            let cells: Vec<String> = values.iter().map(|e| format!("{:.4}", e.mean)).collect();
            csv += &format!("{},{}\n", row.comparator.name(), cells.join(","));
            let shown: Vec<String> = values.iter().map(|e| format!("{:.3} ({:.3})", e.mean, e.se)).collect();
            let _ = writeln!(report, "{:<18}{}", row.comparator.label(), pad(&shown));
        }
        write(format!("{study}_{kind}.csv"), csv, &mut written)?;
    }
    if results.iter().any(|r| r.chosen_blocks_recovered.is_some()) {
        let rates: Vec<String> = results
            .iter()
            .map(|r| r.chosen_blocks_recovered.map_or("-".into(), |x| format!("{:.1}%", 100.0 * x)))
            .collect();
        let _ = writeln!(report, "\nchosen groups equal to the true blocks\n{:<18}{}", "", pad(&rates));
    }
    report += "\nstandard errors over runs in parentheses\n";
    write(format!("{study}_report.txt"), report, &mut written)?;
    write(format!("{study}_results.json"), serde_json::to_string_pretty(results)?, &mut written)?;
    Ok(written)
}

fn pad(cells: &[String]) -> String {
    cells.iter().map(|c| format!("{c:>20}")).collect()
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vine_meff::dissmann::{pseudo_obs, select_structure_with_report, write_edge_report};
use vine_meff::experiments::{emit_tables, run_study, Comparator, ExperimentConfig, Study};
use vine_meff::grouping::{greedy_grouping, Fill, Grouping};
use vine_meff::io::read_matrix_csv;
use vine_meff::meff::{calibrate, decide, Calibration, CalibrationSettings, MarginalNull};
use vine_meff::numerics::RngStream;
use vine_meff::pair_copulas::{candidates_for, Family};
use vine_meff::vine_model::VineModel;
use vine_meff::{Error, Result};

/// Vine-copula fitting and family-wise error calibration of multiple tests.
#[derive(Parser)]
#[command(name = "vine-meff", version)]
struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a truncated R-vine to the pseudo-observations of a data matrix.
    Fit(FitArgs),
    /// Split the coordinates of a fitted vine into blocks.
    Group(GroupArgs),
    /// Calibrate the local level for family-wise error control.
    Calibrate(CalibrateArgs),
    /// Apply a calibration to one vector of test statistics.
    Test(TestArgs),
    /// Run a simulation study and write its result tables.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Data matrix, one observation per row.
    #[arg(long)]
    input: PathBuf,
    /// The first CSV line is a header.
    #[arg(long)]
    header: bool,
    /// Truncation level K.
    #[arg(long, default_value_t = 2)]
    trunc: usize,
    /// Comma-separated candidate families (default: all).
    #[arg(long, value_delimiter = ',')]
    families: Vec<Family>,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-edge report CSV (default: next to the model, suffixed `_edges.csv`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GroupArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of blocks B.
    #[arg(long)]
    blocks: usize,
    /// Target block size (default: M / B rounded down).
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Place leftover coordinates deterministically instead of at random.
    #[arg(long)]
    deterministic_fill: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Null distribution of every statistic: std_normal or half_normal.
    #[arg(long, default_value = "std_normal")]
    marginal: MarginalNull,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Use the optimized second-order effective number.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    optimized: bool,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 100_000)]
    mc: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TestArgs {
    /// CSV with one row of M test statistics.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    calib: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    study: Study,
    #[arg(long, default_value_t = 400)]
    runs: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,200,300")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    mc: usize,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 2)]
    trunc: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    optimized: bool,
    /// Comma-separated subset of sidak, fixed_groups, chosen_groups.
    #[arg(long, value_delimiter = ',', default_value = "sidak,fixed_groups,chosen_groups")]
    comparators: Vec<Comparator>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Group(a) => group(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Test(a) => test(a),
        Command::Reproduce(a) => reproduce(a),
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let x = read_matrix_csv(&a.input, a.header)?;
    if x.rows() < 10 {
        return Err(Error::Config(format!("{} has {} rows; at least 10 are required", a.input.display(), x.rows())));
    }
    let families = if a.families.is_empty() { Family::ALL.to_vec() } else { a.families };
    let (model, report) = select_structure_with_report(&pseudo_obs(&x)?, a.trunc, &candidates_for(&families))?;
    model.write(&a.out)?;
    let report_path = a.report.unwrap_or_else(|| sibling(&a.out, "_edges.csv"));
    write_edge_report(&report_path, &report)?;
    for (level, tree) in model.trees().iter().enumerate().take(model.truncation()) {
        println!("tree {}:", level + 1);
        for (i, e) in tree.iter().enumerate() {
            println!("  {e}  tau = {:.3}", model.tau(level + 1, i));
        }
    }
    Ok(())
}

/// `dir/stem<suffix>` for `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn group(a: GroupArgs) -> Result<()> {
    let model = VineModel::read(&a.model)?;
    if a.blocks == 0 || a.blocks > model.dim() {
        return Err(Error::Config(format!("number of blocks {} outside [1, {}]", a.blocks, model.dim())));
    }
    let target = a.target_size.unwrap_or(model.dim() / a.blocks);
    let fill = if a.deterministic_fill { Fill::Deterministic } else { Fill::Random };
    let g = greedy_grouping(&model, a.blocks, target, RngStream::new(a.seed, 0), fill)?;
    g.write(&a.out)?;
    for (b, block) in g.blocks.iter().enumerate() {
        let members: Vec<String> = block.iter().map(|x| (x + 1).to_string()).collect();
        let taus: Vec<f64> = model.trees()[0]
            .iter()
            .enumerate()
            .filter(|(_, e)| block.contains(&e.conditioned[0]) && block.contains(&e.conditioned[1]))
            .map(|(i, _)| model.tau(1, i).abs())
            .collect();
        let mean = if taus.is_empty() { 0.0 } else { taus.iter().sum::<f64>() / taus.len() as f64 };
        println!(
            "block {}: {}  ({} first-tree edges inside, mean |tau| = {mean:.3})",
            b + 1,
            members.join(" "),
            taus.len()
        );
    }
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let model = VineModel::read(&a.model)?;
    let groups = Grouping::read(&a.groups)?;
    let settings = CalibrationSettings {
        alpha: a.alpha,
        order: a.order,
        optimized: a.optimized,
        mc_size: a.mc,
    };
    let marginals = vec![a.marginal; model.dim()];
    let cal = calibrate(&groups, &marginals, &model, &settings, RngStream::new(a.seed, 0))?;
    cal.write(&a.out)?;
    print!("{}", cal.summary());
    Ok(())
}

fn test(a: TestArgs) -> Result<()> {
    let cal = Calibration::read(&a.calib)?;
    let stats = read_matrix_csv(&a.stats, a.header)?;
    if stats.rows() != 1 {
        return Err(Error::Config(format!("expected one row of statistics, found {}", stats.rows())));
    }
    let d = decide(stats.row(0), &cal)?;
    for (j, (&t, &reject)) in stats.row(0).iter().zip(&d.reject).enumerate() {
        let verdict = if reject { "reject" } else { "retain" };
        println!("H{}: T = {t:.4}, c = {:.4}: {verdict}", j + 1, cal.critical_values[j]);
    }
    println!("global: {}", if d.global { "reject" } else { "retain" });
    Ok(())
}

fn reproduce(a: ReproduceArgs) -> Result<()> {
    if a.sizes.is_empty() {
        return Err(Error::Config("no sample size given".into()));
    }
    let mut results = Vec::with_capacity(a.sizes.len());
    for &n in &a.sizes {
        let config = ExperimentConfig {
            runs: a.runs,
            n_blocks: a.blocks,
            truncation: a.trunc,
            alpha: a.alpha,
            mc_size: a.mc,
            seed: a.seed,
            optimized: a.optimized,
            comparators: a.comparators.clone(),
            ..ExperimentConfig::new(a.study, n)
        };
        let table = run_study(&config)?;
        eprintln!("{} n = {n}: {} runs done", a.study, a.runs);
        results.push(table);
    }
    let files = emit_tables(&results, &a.out)?;
    let report = std::fs::read_to_string(files.iter().find(|p| p.to_string_lossy().ends_with("_report.txt")).expect("report written"))
        .map_err(|e| Error::Io {
            path: a.out.clone(),
            source: e,
        })?;
    print!("{report}");
    Ok(())
}

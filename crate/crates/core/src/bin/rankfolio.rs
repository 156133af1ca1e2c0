use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use rankfolio::aggregation::{aggregate, kt_score, AggregationMethod, Mc4Config};
use rankfolio::estimator::{ebl_posterior_seeded, SamplerConfig};
use rankfolio::harness::{report, run_grid, ExperimentGrid, RunOptions, SyntheticSpec};
use rankfolio::io::{format_order, read_matrix_file, read_panel_file, read_profile_file, write_panel, PanelFormat};
use rankfolio::model::{estimate_covariance, reverse_optimize_prior, CovarianceMatrix, ModelConfig, Portfolio};
use rankfolio::solvers::{ScenarioSet, SolveMethod, SolverOptions};
use rankfolio::{harness, Error, Result};

#[derive(Parser)]
#[command(name = "rankfolio", version, about = "Portfolio selection from ordinal views")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate a profile of total orders; prints the consensus and its
    /// Kendall-Tau score.
    Aggregate(AggregateArgs),
    /// Posterior expected returns for one or more ordinal views.
    Estimate(EstimateArgs),
    /// Solve a robust portfolio problem over a scenario set.
    Solve(SolveArgs),
    /// Run the monthly horse race over a parameter grid.
    Simulate(SimulateArgs),
    /// Write a synthetic return panel as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct AggregateArgs {
    /// One order per line, asset labels best first, comma separated.
    #[arg(long)]
    profile: PathBuf,
    /// borda, footrule, copeland, bestofk, mc4 or kemeny.
    #[arg(long)]
    method: AggregationMethod,
    /// Apply local improvement to the consensus.
    #[arg(long)]
    local_improve: bool,
}

#[derive(Args)]
struct PanelArgs {
    /// CSV panel: date column, one column per asset, optional rf column.
    #[arg(long)]
    panel: PathBuf,
    /// Cells are price or index levels rather than returns.
    #[arg(long)]
    levels: bool,
}

impl PanelArgs {
    fn format(&self) -> PanelFormat {
        if self.levels {
            PanelFormat::Levels
        } else {
            PanelFormat::Returns
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Orders over the panel's asset ids, one per line.
    #[arg(long)]
    orders: PathBuf,
    /// View confidence parameter.
    #[arg(long)]
    c: f64,
    /// Prior uncertainty; defaults to 1 - c.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    delta: f64,
    #[arg(long, default_value_t = SamplerConfig::default().n_samples)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    /// One expected-return scenario per row; optional header of asset ids.
    #[arg(long)]
    scenarios: PathBuf,
    /// Covariance matrix, one row per line.
    #[arg(long)]
    sigma: PathBuf,
    /// mvo, maxmin, minregret, soft or soft_<gamma>.
    #[arg(long)]
    method: SolveMethod,
    /// Quantile level for the soft method; overrides a soft_<gamma> suffix.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    delta: f64,
    #[arg(long, default_value_t = SolverOptions::default().tol)]
    tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// CSV return panel.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    panel: Option<PathBuf>,
    /// Synthetic panel instead, e.g. `n=10,T=120` (optional `seed=`).
    #[arg(long)]
    synthetic: Option<String>,
    /// Panel cells are levels rather than returns.
    #[arg(long)]
    levels: bool,
    /// Grid configuration file (TOML); defaults to the full grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory for the reports.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Gibbs samples per truncated mean.
    #[arg(long, default_value_t = SamplerConfig::default().n_samples)]
    samples: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long = "periods", short = 'T')]
    periods: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn cmd_aggregate(a: AggregateArgs) -> Result<()> {
    let (ids, profile) = read_profile_file(&a.profile, None)?;
    let order = aggregate(&profile, a.method, &Mc4Config::default(), a.local_improve)?;
    println!("{}", format_order(&order, &ids));
    println!("kt_score {}", kt_score(&order, &profile)?);
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let panel = read_panel_file(&a.panel.panel, a.panel.format())?;
    let ids = panel.asset_ids().to_vec();
    let (_, profile) = read_profile_file(&a.orders, Some(&ids))?;
    let sigma = estimate_covariance(&panel, RunOptions::default().covariance_jitter)?;
    let pi = reverse_optimize_prior(&sigma, &Portfolio::equal_weight(ids.len()), a.delta)?;
    let cfg = ModelConfig::new(a.delta, a.c, a.tau.unwrap_or(1.0 - a.c))?;
    let sampler = SamplerConfig::with_samples(a.samples);
    let posts = profile
        .orders()
        .iter()
        .map(|o| ebl_posterior_seeded(&pi, &sigma, o, &cfg, &sampler, a.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut wtr = csv::Writer::from_writer(io::stdout().lock());
    let mut header = vec!["asset".to_string(), "prior".to_string()];
    for k in 1..=posts.len() {
        header.push(format!("mu_{k}"));
        header.push(format!("se_{k}"));
    }
    wtr.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone(), pi.as_slice()[i].to_string()];
        for p in &posts {
            row.push(p.mu[i].to_string());
            row.push(p.se[i].to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let (header, mus) = read_matrix_file(&a.scenarios)?;
    let (_, rows) = read_matrix_file(&a.sigma)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("covariance matrix must be square".into()));
    }
    let sigma = CovarianceMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))?;
    let ids = header.unwrap_or_else(|| (1..=n).map(|i| format!("w{i}")).collect());
    let method = match (a.method, a.gamma) {
        (SolveMethod::Soft(_), Some(g)) => SolveMethod::Soft(g),
        (_, Some(_)) => return Err(Error::InvalidArgument("--gamma only applies to the soft method".into())),
        (m, None) => m,
    };
    let report = match method {
        SolveMethod::Mvo if mus.len() != 1 => {
            return Err(Error::InvalidArgument("mvo takes exactly one scenario".into()))
        }
        m => m.solve(&ScenarioSet::new(mus, sigma, a.delta)?, &SolverOptions::with_tol(a.tol))?,
    };
    let mut out = io::stdout().lock();
    writeln!(out, "asset,weight")?;
    for (id, w) in ids.iter().zip(report.w.weights()) {
        writeln!(out, "{id},{w}")?;
    }
    log::info!(
        "{method}: objective {} (kkt residual {:.2e}, {} iterations)",
        report.objective,
        report.kkt_residual,
        report.iterations
    );
    if let Some(r) = report.max_regret {
        log::info!("maximum regret {r}");
    }
    Ok(())
}

/// Parses `n=10,T=120[,seed=3]`.
fn parse_synthetic(s: &str, default_seed: u64) -> Result<SyntheticSpec> {
    let (mut n, mut t, mut seed) = (None, None, default_seed);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value, got {part:?}")))?;
        let num = |v: &str| v.trim().parse::<u64>().map_err(|_| Error::Parse(format!("bad number {v:?} for {k}")));
        match k.trim() {
            "n" => n = Some(num(v)? as usize),
            "T" | "t" => t = Some(num(v)? as usize),
            "seed" => seed = num(v)?,
            other => return Err(Error::Parse(format!("unknown synthetic key {other:?}"))),
        }
    }
    match (n, t) {
        (Some(n), Some(t)) => Ok(SyntheticSpec::new(n, t, seed)),
        _ => Err(Error::Parse("--synthetic needs both n= and T=".into())),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    if let Some(threads) = a.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let mut grid = match &a.grid {
        Some(p) => ExperimentGrid::load(p)?,
        None => ExperimentGrid::default(),
    };
    if let Some(s) = a.seed {
        grid.seed = s;
    }
    let panel = match (&a.panel, &a.synthetic) {
        (Some(p), _) => {
            let format = if a.levels { PanelFormat::Levels } else { PanelFormat::Returns };
            read_panel_file(p, format)?
        }
        (None, Some(s)) => harness::generate_synthetic_panel(&parse_synthetic(s, grid.seed)?)?,
        (None, None) => unreachable!("clap requires one panel source"),
    };
    log::info!(
        "{} assets, {} periods, {} cells, {} methods",
        panel.n_assets(),
        panel.n_periods(),
        grid.n_cells(),
        grid.methods.len()
    );
    let opts = RunOptions {
        sampler: SamplerConfig::with_samples(a.samples),
        ..RunOptions::default()
    };
    let res = run_grid(panel, grid, opts)?;
    report::write_reports(&res, &a.out)?;
    print!("{}", report::summary(&res));
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let panel = harness::generate_synthetic_panel(&SyntheticSpec::new(a.n, a.periods, a.seed))?;
    match a.out {
        Some(p) => rankfolio::io::write_panel_file(&panel, &p),
        None => write_panel(&panel, io::stdout().lock()),
    }
}

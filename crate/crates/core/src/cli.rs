//! Command-line front end.
//!
//! Exit status is 0 on success, 1 for usage or input errors and 2 when
//! training aborts on divergence. Set `DIVIDER_LOG` to `error`, `warn` or
//! `info` to control logging on stderr.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::env::{rollout, Controller, RolloutOptions, State, TrajectoryMetrics};
use crate::net::PolicyNet;
use crate::oracle::{self, BangBang};
use crate::raster::{rasterize, RasterMode, RasterSpec};
use crate::report;
use crate::textio::sig9;
use crate::train::{self, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "divider", version, about = "Train and dissect double-integrator policy networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an actor from a TOML config.
    Train(TrainArgs),
    /// Sample the state-action pattern to CSV and PGM.
    Raster(RasterArgs),
    /// Division analysis report.
    Analyze(AnalyzeArgs),
    /// Overshoot and deceleration metrics against the bang-bang oracle.
    Compare(CompareArgs),
    /// One trajectory to CSV.
    Rollout(RolloutArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Weight file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Learning curve CSV; defaults to the weight path with extension `curve.csv`.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RasterArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Output stem; `.csv` and `.pgm` are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_range, default_value = "-100,100", allow_hyphen_values = true)]
    pub p_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "-100,100", allow_hyphen_values = true)]
    pub v_range: (f64, f64),
    #[arg(long, default_value_t = 512)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value_t = RasterMode::Sign)]
    pub mode: RasterMode,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Report path; crossings go to the same stem with extension `crossings.csv`.
    /// Prints to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Required unless `--oracle` is given.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Initial positions, comma separated; every start has v = 0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 0..)]
    pub starts: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Roll out only the oracle.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 5.0)]
    pub action_bound: f64,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub p0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v0: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Drive the plant with the bang-bang oracle instead of a network.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 5.0)]
    pub action_bound: f64,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    #[arg(long, default_value_t = 40.0)]
    pub horizon: f64,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

/// Parses `std::env::args`, runs the command and returns the exit status.
pub fn main() -> i32 {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<TrainError>() {
                Some(TrainError::Diverged { .. }) => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("DIVIDER_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Raster(args) => cmd_raster(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Rollout(args) => cmd_rollout(&args),
    }
}

fn load_net(path: &Path) -> Result<PolicyNet> {
    PolicyNet::load(path).with_context(|| format!("loading weights from {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn with_suffix(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = TrainConfig::load(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        config.episodes = episodes;
    }
    log::info!("training {:?} seed {} for {} episodes", config.algorithm, config.seed, config.episodes);
    let outcome = train::train(&config)?;
    outcome
        .actor
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let curve_path = args.curve.clone().unwrap_or_else(|| with_suffix(&args.out, "curve.csv"));
    let mut out = create(&curve_path)?;
    outcome.write_curve(&mut out)?;
    out.flush()?;
    log::info!("wrote {} and {}", args.out.display(), curve_path.display());
    Ok(())
}

pub fn cmd_raster(args: &RasterArgs) -> Result<()> {
    let net = load_net(&args.weights)?;
    let spec = RasterSpec {
        p_range: args.p_range,
        v_range: args.v_range,
        resolution: args.resolution,
        mode: args.mode,
    };
    let raster = rasterize(&net, spec, net.action_bound())?;
    let mut csv = create(&with_suffix(&args.out, "csv"))?;
    raster.write_csv(&mut csv)?;
    csv.flush()?;
    let mut pgm = create(&with_suffix(&args.out, "pgm"))?;
    raster.write_pgm(&mut pgm)?;
    pgm.flush()?;
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let net = load_net(&args.weights)?;
    let report = report::analyze(&net)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, report.to_text()).with_context(|| format!("writing {}", path.display()))?;
            let mut csv = create(&with_suffix(path, "crossings.csv"))?;
            report.write_crossings_csv(&mut csv)?;
            csv.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(report.to_text().as_bytes())?;
        }
    }
    Ok(())
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub controller: &'static str,
    pub p0: f64,
    pub metrics: TrajectoryMetrics,
    pub optimal_time: f64,
    pub ideal_decel: State,
    /// Positive when the controller starts braking after the ideal point.
    pub decel_gap: Option<f64>,
}

pub const COMPARE_HEADER: &str = "controller,p0,overshoot,settling_time,arrival_time,optimal_time,\
ideal_decel_p,ideal_decel_v,actual_decel_p,actual_decel_v,decel_gap,final_error";

pub fn compare_row<C: Controller + ?Sized>(
    name: &'static str,
    controller: &C,
    p0: f64,
    action_bound: f64,
    sim: &SimArgs,
) -> Result<CompareRow> {
    let s0 = State::new(p0, 0.0);
    let opts = RolloutOptions {
        action_bound,
        ..RolloutOptions::default()
    }
    .with_dt(sim.dt)
    .with_horizon(sim.horizon);
    let traj = rollout(controller, s0, &opts)?;
    let metrics = traj.metrics(action_bound);
    let ideal_decel = oracle::ideal_decel_point(s0, action_bound);
    let toward = -crate::env::sign(p0);
    let decel_gap = metrics.actual_decel_point.map(|s| toward * (s.p - ideal_decel.p));
    Ok(CompareRow {
        controller: name,
        p0,
        metrics,
        optimal_time: oracle::optimal_time(s0, action_bound),
        ideal_decel,
        decel_gap,
    })
}

impl CompareRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or(String::new(), sig9);
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.controller,
            sig9(self.p0),
            sig9(m.overshoot),
            opt(m.settling_time),
            opt(m.arrival_time),
            sig9(self.optimal_time),
            sig9(self.ideal_decel.p),
            sig9(self.ideal_decel.v),
            opt(m.actual_decel_point.map(|s| s.p)),
            opt(m.actual_decel_point.map(|s| s.v)),
            opt(self.decel_gap),
            sig9(m.final_error),
        )
    }
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    if args.starts.is_empty() {
        bail!("no initial positions given");
    }
    let net = match (&args.weights, args.oracle) {
        (Some(path), _) => Some(load_net(path)?),
        (None, true) => None,
        (None, false) => bail!("--weights is required unless --oracle is given"),
    };
    let bound = net.as_ref().map_or(args.action_bound, |n| n.action_bound());
    let bang = BangBang::new(bound);
    let mut out = create(&args.out)?;
    writeln!(out, "{COMPARE_HEADER}")?;
    for &p0 in &args.starts {
        if let Some(net) = &net {
            writeln!(out, "{}", compare_row("net", net, p0, bound, &args.sim)?.to_csv())?;
        }
        writeln!(out, "{}", compare_row("oracle", &bang, p0, bound, &args.sim)?.to_csv())?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_rollout(args: &RolloutArgs) -> Result<()> {
    let s0 = State::new(args.p0, args.v0);
    let traj = match (&args.weights, args.oracle) {
        (_, true) => {
            let opts = RolloutOptions {
                action_bound: args.action_bound,
                ..RolloutOptions::default()
            };
            rollout(&BangBang::new(args.action_bound), s0, &opts.with_dt(args.sim.dt).with_horizon(args.sim.horizon))?
        }
        (Some(path), false) => {
            let net = load_net(path)?;
            let opts = RolloutOptions {
                action_bound: net.action_bound(),
                ..RolloutOptions::default()
            };
            rollout(&net, s0, &opts.with_dt(args.sim.dt).with_horizon(args.sim.horizon))?
        }
        (None, false) => bail!("--weights is required unless --oracle is given"),
    };
    log::info!("rollout ended with {:?} after {} s", traj.termination, traj.horizon());
    let mut out = create(&args.out)?;
    traj.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("-100,100"), Ok((-100.0, 100.0)));
        assert!(parse_range("3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn oracle_rows_track_closed_form() {
        let sim = SimArgs { dt: 1e-3, horizon: 20.0 };
        for p0 in [-10.0, -20.0, -40.0] {
            let row = compare_row("oracle", &BangBang::new(5.0), p0, 5.0, &sim).unwrap();
            assert!(row.metrics.overshoot < 0.05);
            let t = row.metrics.arrival_time.unwrap();
            assert!((t - row.optimal_time).abs() < 0.02 * row.optimal_time, "{t} vs {}", row.optimal_time);
        }
    }
}

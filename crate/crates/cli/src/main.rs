mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autobid::bestresponse::{
    best_response_dynamics, diagnose_equilibrium, poa_ratio, verify_equilibrium, DeviationFamily,
};
use autobid::bounds::{certify_rfpa, qp_local_optimality_bid_lb, qp_poa_bound, qp_spend_lowerbound, DEFAULT_BETA_GRID};
use autobid::optimum::{opt_fractional, opt_integral_with_cap, DEFAULT_NODE_CAP};
use autobid::paperlab::{replicate_all, worst_case_search, ReplicationConfig, SuiteSizes};
use autobid::{BidProfile, Instance, Mechanism, TieBreak};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "autobid",
    version,
    about = "Equilibria and welfare bounds for auto-bidding auctions"
)]
struct Cli {
    /// Worker threads for parallel work; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal liquid welfare of an instance.
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = OptMode::Fractional)]
        mode: OptMode,
        /// Branch-and-bound node limit for the integral optimum.
        #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
        node_cap: u64,
    },
    /// Equilibrium verification, dynamics and diagnostics.
    #[command(subcommand)]
    Eq(EqCommand),
    /// Opt/LW and I-Opt/LW of a bid profile.
    Poa {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        bids: PathBuf,
    },
    /// Certificate functions behind the welfare bounds.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Run the replication table.
    Replicate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated row names or groups to keep.
        #[arg(long, value_delimiter = ',')]
        rows: Option<Vec<String>>,
        /// Small sample counts.
        #[arg(long)]
        quick: bool,
        /// Record wall-clock time per row.
        #[arg(long)]
        timings: bool,
        /// Override a row tolerance, as `name=value`; repeatable.
        #[arg(long = "tolerance", value_parser = parse_tolerance)]
        tolerances: Vec<(String, f64)>,
    },
    /// Largest ratios over random instances.
    Search {
        #[command(flatten)]
        mechanism: MechanismArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Search over uniform (multiplier) bidding.
        #[arg(long)]
        uniform: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptMode {
    Fractional,
    Integral,
    Both,
}

#[derive(Debug, Subcommand)]
enum EqCommand {
    /// Check feasibility and the best deviation of every bidder.
    Verify {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        bids: PathBuf,
    },
    /// Round-robin best responses from a starting profile.
    Dynamics {
        #[command(flatten)]
        game: GameArgs,
        /// Starting profile; all-zero bids when absent.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Start from zero multipliers instead of zero bids.
        #[arg(long, conflicts_with = "init")]
        uniform: bool,
        #[arg(long, default_value_t = 200)]
        max_rounds: usize,
    },
    /// Verification plus the inequality checks against the optimum.
    Diagnose {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        bids: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum BoundsCommand {
    /// Minimize the randomized first-price certificate over beta.
    CertifyRfpa {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        eta: f64,
        /// Defaults to `1 - eta`.
        #[arg(long)]
        gamma: Option<f64>,
        /// Use the uniform-bidding spend term.
        #[arg(long)]
        uniform: bool,
        #[arg(long, default_value_t = DEFAULT_BETA_GRID)]
        grid: usize,
    },
    /// Quasi-proportional welfare and spend bounds.
    Qp {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        /// Bidder value for the per-bidder bounds.
        #[arg(long)]
        v: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismKind {
    Fpa,
    Rfpa,
    Qpfpa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Tie {
    Lowest,
    Highest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyKind {
    FpaSubset,
    UniformScan,
    GridPerQuery,
    ScaleAll,
    GridAndScale,
}

#[derive(Debug, Args)]
struct MechanismArgs {
    #[arg(long, value_enum, default_value_t = MechanismKind::Fpa)]
    mechanism: MechanismKind,
    /// Required for rfpa and qpfpa.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = Tie::Lowest)]
    tie: Tie,
    /// Comma-separated priority order; overrides --tie.
    #[arg(long, value_delimiter = ',')]
    permutation: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct GameArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    mechanism: MechanismArgs,
    #[arg(long, value_enum)]
    family: Option<FamilyKind>,
    #[arg(long, default_value_t = DeviationFamily::DEFAULT_GRID_STEPS)]
    grid_steps: usize,
    #[arg(long, default_value_t = DeviationFamily::DEFAULT_SCALE_STEPS)]
    scale_steps: usize,
    /// Defaults to 1e-6 times the instance's welfare cap.
    #[arg(long)]
    epsilon: Option<f64>,
}

enum CliError {
    Usage(String),
    Core(autobid::Error),
    Internal(String),
}

impl From<autobid::Error> for CliError {
    fn from(e: autobid::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value.parse().map_err(|e| format!("bad tolerance `{value}`: {e}"))?;
    if !(value >= 0.0 && value.is_finite()) {
        return Err(format!("tolerance must be finite and non-negative, got {value}"));
    }
    Ok((name.to_string(), value))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> CliResult<Instance> {
    Ok(Instance::from_json(&read_text(path)?)?)
}

fn load_bids(path: &Path, instance: &Instance) -> CliResult<BidProfile> {
    Ok(BidProfile::from_json(&read_text(path)?, instance)?)
}

impl MechanismArgs {
    fn build(&self) -> CliResult<Mechanism> {
        let alpha = || {
            self.alpha
                .ok_or_else(|| CliError::Usage(format!("--alpha is required for {:?}", self.mechanism).to_lowercase()))
        };
        if self.mechanism != MechanismKind::Fpa && self.permutation.is_some() {
            return Err(CliError::Usage("--permutation only applies to fpa".into()));
        }
        Ok(match self.mechanism {
            MechanismKind::Fpa => {
                if self.alpha.is_some() {
                    return Err(CliError::Usage("--alpha does not apply to fpa".into()));
                }
                let tie = match (&self.permutation, self.tie) {
                    (Some(order), _) => TieBreak::Permutation(order.clone()),
                    (None, Tie::Lowest) => TieBreak::LowestIndex,
                    (None, Tie::Highest) => TieBreak::HighestIndex,
                };
                Mechanism::Fpa { tie }
            }
            MechanismKind::Rfpa => Mechanism::Rfpa { alpha: alpha()? },
            MechanismKind::Qpfpa => Mechanism::Qpfpa { alpha: alpha()? },
        })
    }
}

impl GameArgs {
    fn family(&self, mechanism: &Mechanism, bids: &BidProfile) -> DeviationFamily {
        match self.family {
            None => DeviationFamily::default_for(mechanism, bids),
            Some(FamilyKind::FpaSubset) => DeviationFamily::FpaSubset,
            Some(FamilyKind::UniformScan) => DeviationFamily::UniformScan,
            Some(FamilyKind::GridPerQuery) => DeviationFamily::GridPerQuery { steps: self.grid_steps },
            Some(FamilyKind::ScaleAll) => DeviationFamily::ScaleAll {
                steps: self.scale_steps,
            },
            Some(FamilyKind::GridAndScale) => DeviationFamily::GridAndScale {
                grid_steps: self.grid_steps,
                scale_steps: self.scale_steps,
            },
        }
    }

    fn epsilon(&self, instance: &Instance) -> f64 {
        self.epsilon.unwrap_or_else(|| instance.default_epsilon())
    }
}

enum Rendered {
    Json(serde_json::Value),
    Csv(String),
}

fn json_of<T: serde::Serialize>(value: &T) -> CliResult<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| CliError::Internal(format!("serialization failed: {e}")))
}

fn run_opt(instance: &Path, mode: OptMode, node_cap: u64) -> CliResult<serde_json::Value> {
    let inst = load_instance(instance)?;
    Ok(match mode {
        OptMode::Fractional => json_of(&opt_fractional(&inst)?)?,
        OptMode::Integral => json_of(&opt_integral_with_cap(&inst, node_cap)?)?,
        OptMode::Both => json!({
            "fractional": json_of(&opt_fractional(&inst)?)?,
            "integral": json_of(&opt_integral_with_cap(&inst, node_cap)?)?,
        }),
    })
}

fn run_eq(cmd: &EqCommand) -> CliResult<serde_json::Value> {
    match cmd {
        EqCommand::Verify { game, bids } | EqCommand::Diagnose { game, bids } => {
            let inst = load_instance(&game.instance)?;
            let mech = game.mechanism.build()?;
            let bids = load_bids(bids, &inst)?;
            let family = game.family(&mech, &bids);
            let eps = game.epsilon(&inst);
            let report = if matches!(cmd, EqCommand::Verify { .. }) {
                verify_equilibrium(&inst, &mech, &bids, &family, eps)?
            } else {
                diagnose_equilibrium(&inst, &mech, &bids, &family, eps)?
            };
            json_of(&report)
        }
        EqCommand::Dynamics {
            game,
            init,
            uniform,
            max_rounds,
        } => {
            let inst = load_instance(&game.instance)?;
            let mech = game.mechanism.build()?;
            let start = match init {
                Some(path) => load_bids(path, &inst)?,
                None if *uniform => BidProfile::uniform(&inst, vec![0.0; inst.num_bidders()])?,
                None => BidProfile::zeros(inst.num_bidders(), inst.num_queries()),
            };
            let family = game.family(&mech, &start);
            let eps = game.epsilon(&inst);
            let dynamics = best_response_dynamics(&inst, &mech, &family, &start, *max_rounds, eps)?;
            let report = verify_equilibrium(&inst, &mech, &dynamics.bids, &family, eps)?;
            Ok(json!({
                "bids": json_of(&dynamics.bids)?,
                "converged": dynamics.converged,
                "rounds": dynamics.rounds,
                "report": json_of(&report)?,
            }))
        }
    }
}

fn run_bounds(cmd: &BoundsCommand) -> CliResult<serde_json::Value> {
    match *cmd {
        BoundsCommand::CertifyRfpa {
            alpha,
            eta,
            gamma,
            uniform,
            grid,
        } => json_of(&certify_rfpa(alpha, eta, gamma, uniform, grid)?),
        BoundsCommand::Qp { eta, alpha, n, v } => {
            let mut out = json!({
                "eta": eta,
                "alpha": alpha,
                "n": n,
                "poa_bound": qp_poa_bound(eta, alpha, n)?,
            });
            if let Some(v) = v {
                out["v"] = json!(v);
                out["spend_lowerbound"] = json!(qp_spend_lowerbound(v, eta, alpha, n)?);
                out["local_optimality_bid_lb"] = json!(qp_local_optimality_bid_lb(v, eta, alpha)?);
            }
            Ok(out)
        }
    }
}

fn run(cli: &Cli) -> CliResult<Rendered> {
    if cli.format == Format::Csv && !matches!(cli.command, Command::Replicate { .. }) {
        return Err(CliError::Usage("--format csv is only available for replicate".into()));
    }
    let value = match &cli.command {
        Command::Opt {
            instance,
            mode,
            node_cap,
        } => run_opt(instance, *mode, *node_cap)?,
        Command::Eq(cmd) => run_eq(cmd)?,
        Command::Poa { game, bids } => {
            let inst = load_instance(&game.instance)?;
            let mech = game.mechanism.build()?;
            let bids = load_bids(bids, &inst)?;
            json_of(&poa_ratio(&inst, &mech, &bids)?)?
        }
        Command::Bounds(cmd) => run_bounds(cmd)?,
        Command::Replicate {
            seed,
            rows,
            quick,
            timings,
            tolerances,
        } => {
            let cfg = ReplicationConfig {
                seed: *seed,
                rows: rows.clone(),
                tolerances: tolerances.iter().cloned().collect::<BTreeMap<_, _>>(),
                sizes: if *quick {
                    SuiteSizes::quick()
                } else {
                    SuiteSizes::default()
                },
                timings: *timings,
            };
            let table = replicate_all(&cfg);
            if cli.format == Format::Csv {
                let text = output::replication_csv(&table).map_err(|e| CliError::Internal(e.to_string()))?;
                return Ok(Rendered::Csv(text));
            }
            json!({
                "all_pass": table.iter().all(|r| r.pass),
                "config": json_of(&cfg)?,
                "rows": json_of(&table)?,
            })
        }
        Command::Search {
            mechanism,
            n,
            q,
            samples,
            seed,
            uniform,
        } => {
            let mech = mechanism.build()?;
            json_of(&worst_case_search(&mech, *uniform, *n, *q, *samples, *seed)?)?
        }
    };
    Ok(Rendered::Json(value))
}

fn emit(cli: &Cli, rendered: Rendered) -> CliResult<()> {
    let text = match rendered {
        Rendered::Csv(text) => text,
        Rendered::Json(value) => {
            output::to_canonical_string(&value).map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?
        }
    };
    match &cli.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli).and_then(|r| emit(&cli, r)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

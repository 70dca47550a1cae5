//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
//! failure, 3 non-finite values during training or evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use microgrid_core::config::RunConfig;
use microgrid_core::env::Stress;
use microgrid_core::harness::{rerun, run, Invocation, Method, PolicySpec, RunManifest};
use microgrid_core::Error;

#[derive(Parser, Debug)]
#[command(name = "microgrid", version, about = "Islandable microgrid energy management experiments")]
struct Cli {
    /// Repeat the run recorded in a manifest (file or run directory).
    #[arg(long, global = true, value_name = "PATH")]
    from_manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a learned controller and save its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// proposed or ddpg.
        #[arg(long, default_value = "proposed")]
        method: Method,
    },
    /// Evaluate a checkpoint or a baseline on the test days.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Train and evaluate several methods on identical scenarios.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "proposed,ddpg,rule_based")]
        methods: Vec<Method>,
        /// Comma-separated training seeds; defaults to the run seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Also retrain across the configured shedding prices.
        #[arg(long)]
        lambda_sweep: bool,
    },
    /// Check every replayed slot against the feeder's power flow.
    Audit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Write the configured dataset as CSV plus a checksummed cache.
    SynthData {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Named evaluation scenario: base, stress or fail-K.
    #[arg(long)]
    scenario: Option<String>,
    /// Hold the first K ESS at 0 MW during evaluation.
    #[arg(long, value_name = "K")]
    fail_agents: Option<usize>,
    /// Evaluation stress factors, e.g. `pv=0.85,load=1.15`.
    #[arg(long, value_parser = parse_stress)]
    stress: Option<Stress>,
    /// Shedding price in $/MWh.
    #[arg(long)]
    lambda_load: Option<f64>,
}

#[derive(Args, Debug)]
struct PolicyArgs {
    /// Checkpoint written by `train`.
    #[arg(long, conflicts_with = "method")]
    checkpoint: Option<PathBuf>,
    /// Baseline to run instead: rule_based or dp_oracle.
    #[arg(long)]
    method: Option<Method>,
}

impl PolicyArgs {
    fn spec(&self) -> Result<PolicySpec, Error> {
        match (&self.checkpoint, self.method) {
            (Some(path), _) => Ok(PolicySpec::Checkpoint { path: std::path::absolute(path)? }),
            (None, Some(method)) => Ok(PolicySpec::Baseline { method }),
            (None, None) => Err(Error::InvalidInput("give --checkpoint or --method".into())),
        }
    }
}

fn parse_stress(s: &str) -> Result<Stress, String> {
    let mut stress = Stress::default();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
        match k.trim() {
            "pv" => stress.pv = v,
            "load" => stress.load = v,
            other => return Err(format!("unknown stress key `{other}` (pv, load)")),
        }
    }
    Ok(stress)
}

fn apply_scenario(cfg: &mut RunConfig, name: &str) -> Result<(), Error> {
    match name {
        "base" => {
            cfg.eval.stress = Stress::default();
            cfg.eval.fail_agents = 0;
        }
        "stress" => cfg.eval.stress = Stress { pv: 0.85, load: 1.15 },
        _ => {
            let k = name
                .strip_prefix("fail-")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("unknown scenario `{name}` (base, stress, fail-K)")))?;
            cfg.eval.fail_agents = k;
        }
    }
    Ok(())
}

fn resolve(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Validation(vec![format!("config {}: {io}", p.display())]),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(name) = &common.scenario {
        apply_scenario(&mut cfg, name)?;
    }
    if let Some(k) = common.fail_agents {
        cfg.eval.fail_agents = k;
    }
    if let Some(s) = common.stress {
        cfg.eval.stress = s;
    }
    if let Some(l) = common.lambda_load {
        cfg.microgrid.costs.lambda_load = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(RunManifest, PathBuf), Error> {
    if let Some(manifest) = &cli.from_manifest {
        let out = match &cli.command {
            Some(Command::Train { common, .. })
            | Some(Command::Eval { common, .. })
            | Some(Command::Compare { common, .. })
            | Some(Command::Audit { common, .. })
            | Some(Command::SynthData { common }) => common.out.clone(),
            None => PathBuf::from("runs/rerun"),
        };
        return Ok((rerun(manifest, &out)?, out));
    }
    let Some(command) = cli.command else {
        return Err(Error::InvalidInput("no subcommand given (see --help)".into()));
    };
    let (common, invocation) = match command {
        Command::Train { common, method } => (common, Invocation::Train { method }),
        Command::Eval { common, policy } => {
            let spec = policy.spec()?;
            (common, Invocation::Eval { policy: spec })
        }
        Command::Compare { common, methods, seeds, lambda_sweep } => {
            let seeds = if seeds.is_empty() { vec![resolve(&common)?.run.seed] } else { seeds };
            (common, Invocation::Compare { methods, seeds, lambda_sweep })
        }
        Command::Audit { common, policy } => {
            let spec = policy.spec()?;
            (common, Invocation::Audit { policy: spec })
        }
        Command::SynthData { common } => (common, Invocation::SynthData),
    };
    let cfg = resolve(&common)?;
    Ok((run(&cfg, &invocation, &common.out)?, common.out))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Parse(_) | Error::InvalidInput(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

fn summarize(m: &RunManifest, out: &Path) {
    println!("{}", serde_json::to_string_pretty(&m.outcome).unwrap_or_default());
    println!("wrote {} ({:.1} s)", out.display(), m.wall_clock_s);
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Bad arguments are a validation failure; help and version are not.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok((m, out)) => {
            summarize(&m, &out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

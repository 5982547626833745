use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fusim::{
    cmd_report, cmd_simulate, cmd_train, cmd_unlearn, CliResult, ExperimentConfig, RunManifest, MANIFEST_FILE,
};
use fusim_core::fed::StorageMode;
use fusim_core::unlearn::Method;

#[derive(Parser)]
#[command(name = "fusim", version, about = "Sharded federated unlearning with coded parameter storage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Uncoded,
    Coded,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Se,
    Fr,
    Fe,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Se => Method::Se,
            MethodArg::Fr => Method::Fr,
            MethodArg::Fe => Method::Fe,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// History storage mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory, overriding the config.
    #[arg(long, env = "FUSIM_OUT")]
    out: Option<PathBuf>,
    /// Rerun even when an intact manifest exists.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.storage = match m {
                ModeArg::Uncoded => StorageMode::Uncoded,
                ModeArg::Coded => StorageMode::Coded,
            };
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every shard and persist histories and models.
    Train(Common),
    /// Serve the configured unlearning workload against a trained run.
    Unlearn {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "se")]
        method: MethodArg,
    },
    /// Compare the analytical time models with Monte Carlo.
    Simulate(Common),
    /// Merge unlearning manifests into one CSV/JSON report.
    Report {
        #[arg(long, env = "FUSIM_OUT", default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<(PathBuf, RunManifest)> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.config()?;
            Ok((cfg.train_dir(), cmd_train(&cfg, c.force)?))
        }
        Command::Unlearn { common, method } => {
            let cfg = common.config()?;
            let method = Method::from(method);
            Ok((cfg.unlearn_dir(method), cmd_unlearn(&cfg, method, common.force)?))
        }
        Command::Simulate(c) => {
            let cfg = c.config()?;
            let m = cmd_simulate(&cfg, c.force)?;
            Ok((cfg.out_dir.join(format!("seed-{}", cfg.seed)).join("simulate"), m))
        }
        Command::Report { out, force, manifests } => Ok((out.join("report"), cmd_report(&manifests, &out, force)?)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok((dir, m)) => {
            println!("{}", dir.join(MANIFEST_FILE).display());
            for a in &m.artifacts {
                println!("  {} {}", &a.sha256[..16], a.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

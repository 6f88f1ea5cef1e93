use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metastab::config::{apply_document, Command, RunConfig};
use metastab::run::{execute, replay, resolve_out_dir, RunError};

/// Experiments on a bistable diffusion with one shared Brownian motion.
#[derive(Parser)]
#[command(name = "metastab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check parameters and report the forbidden noise angles.
    Validate(RunArgs),
    /// Euler–Maruyama path of the stochastic system.
    Simulate(RunArgs),
    /// Noiseless flow (RK4).
    Flow(RunArgs),
    /// Control system driven by a zero, extremal or constant input.
    Control(RunArgs),
    /// Drift-condition certificate for W = 1 + x⁴ + αy².
    Lyapunov(RunArgs),
    /// Action of a flow or reverse-flow extremal.
    Action(RunArgs),
    /// Cost matrix between the bands and global W-graph costs.
    Costs(RunArgs),
    /// Small-noise limit of the invariant measure.
    Classify(RunArgs),
    /// Occupation fractions of an ensemble after burn-in.
    Invariant(RunArgs),
    /// Re-run the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: $METASTAB_OUT, then ./metastab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    t_final: Option<String>,
    #[arg(long)]
    n_paths: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    burn_in_fraction: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, RunError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            apply_document(&mut config, &text)?;
        }
        config.apply_overrides(&self.set)?;
        let flags = [
            ("method", &self.method),
            ("seed", &self.seed),
            ("dt", &self.dt),
            ("t_final", &self.t_final),
            ("n_paths", &self.n_paths),
            ("delta", &self.delta),
            ("nodes", &self.nodes),
            ("burn_in_fraction", &self.burn_in_fraction),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        Ok(config)
    }
}

fn run_with(command: Command, args: RunArgs) -> Result<(PathBuf, Vec<String>), RunError> {
    let config = args.resolve()?;
    let out = resolve_out_dir(args.out);
    let files = execute(command, &config, &out)?;
    Ok((out, files))
}

fn report(out: &Path, files: &[String]) {
    for f in files {
        println!("{}", out.join(f).display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Sub::Validate(a) => run_with(Command::Validate, a),
        Sub::Simulate(a) => run_with(Command::Simulate, a),
        Sub::Flow(a) => run_with(Command::Flow, a),
        Sub::Control(a) => run_with(Command::Control, a),
        Sub::Lyapunov(a) => run_with(Command::Lyapunov, a),
        Sub::Action(a) => run_with(Command::Action, a),
        Sub::Costs(a) => run_with(Command::Costs, a),
        Sub::Classify(a) => run_with(Command::Classify, a),
        Sub::Invariant(a) => run_with(Command::Invariant, a),
        Sub::Replay { manifest, out } => {
            let out = out.unwrap_or_else(|| {
                manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            replay(&manifest, &out).map(|files| (out, files))
        }
    };
    match result {
        Ok((out, files)) => {
            report(&out, &files);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprint!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dac_cli::commands::{self, CliError};
use dac_cli::config::DataKind;

#[derive(Parser)]
#[command(
    name = "dac",
    version,
    about = "Divide-and-contrast source-free adaptation on vector data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Moons,
    Blobs,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: Option<usize>,
        /// Moons: Gaussian noise stddev.
        #[arg(long)]
        noise: Option<f64>,
        /// Blobs: within-cluster stddev.
        #[arg(long)]
        spread: Option<f64>,
        /// Rotation about the origin in degrees (2-D only).
        #[arg(long)]
        rotation: Option<f64>,
        /// Translation, comma separated, one value per dimension.
        #[arg(long, allow_hyphen_values = true)]
        shift: Option<String>,
        /// Blobs: number of classes.
        #[arg(long)]
        classes: Option<usize>,
        /// Blobs: dimension.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "source")]
        domain: String,
        /// Optional config whose data_* keys and seed act as defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the source model on a labeled CSV.
    TrainSource {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapt a source model to an unlabeled (or labeled, for evaluation) target CSV.
    Adapt {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        source_model: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the bound report for an adapted model.
    Analyze {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory of an adapt run; supplies model and state defaults.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData {
            kind,
            n,
            noise,
            spread,
            rotation,
            shift,
            classes,
            dim,
            seed,
            domain,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            let mut p = cfg.data.clone();
            p.kind = match kind {
                Kind::Moons => DataKind::Moons,
                Kind::Blobs => DataKind::Blobs,
            };
            if let Some(v) = n {
                p.n = v;
            }
            if let Some(v) = noise {
                p.noise = v;
            }
            if let Some(v) = spread {
                p.spread = v;
            }
            if let Some(v) = rotation {
                p.rotation = v;
            }
            if let Some(v) = classes {
                p.classes = v;
            }
            if let Some(v) = dim {
                p.dim = v;
            }
            if let Some(s) = shift {
                let mut tmp = cfg.clone();
                tmp.set("data_shift", &s)
                    .map_err(|e| CliError::Usage(format!("--shift: {}", e)))?;
                p.shift = tmp.data.shift;
            }
            commands::gen_data(&p, seed.unwrap_or(cfg.adapt.seed), &domain, &out)
        }
        Command::TrainSource { config, source, out } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_train_source(&cfg, source, out)
        }
        Command::Adapt {
            config,
            source_model,
            target,
            out,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_adapt(&cfg, source_model, target, out)
        }
        Command::Analyze {
            config,
            run,
            model,
            state,
            target,
            out,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_analyze(&cfg, run, model, state, target, out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}

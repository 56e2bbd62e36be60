mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{merge, preset_layer, Layer, RunConfig};

/// Path loss in 2D site-percolation channels.
///
/// Exit codes: 0 ok, 2 config or input error, 3 domain error, 4 failed
/// check, 5 I/O error.
#[derive(Parser, Debug)]
#[command(name = "perc-channel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Path-loss curves as CSV.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV to calibrate against at the reference distance.
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// Calibration reference distance in metres.
        #[arg(long = "ref")]
        reference: Option<f64>,
    },
    /// Cross-route consistency checks, optionally against Monte Carlo.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also compare a fixed-step walk with the random-walk series.
        #[arg(long)]
        mc: bool,
        #[arg(long)]
        rays: Option<u64>,
    },
    /// Fit the reflection loss to measurements.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV, or a `predict` CSV together with --select.
        #[arg(long)]
        data: Option<PathBuf>,
        /// `model` or `model:route` to pick from a predict CSV.
        #[arg(long)]
        select: Option<String>,
        #[arg(long = "L-min")]
        l_min: Option<f64>,
        #[arg(long = "L-max")]
        l_max: Option<f64>,
    },
    /// Monte Carlo power estimates on annuli of the r grid.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rays: Option<u64>,
        #[arg(long)]
        collisions: Option<u32>,
        /// Cells per lattice side.
        #[arg(long)]
        n: Option<usize>,
        /// Annulus width in metres (default: the cell side).
        #[arg(long)]
        width: Option<f64>,
        /// `lattice` or `walk` (obstacle-free fixed step d_bar).
        #[arg(long)]
        medium: Option<String>,
        /// Per-collision losses uniform in L +- spread dB.
        #[arg(long)]
        loss_spread: Option<f64>,
    },
    /// Write a percolation lattice as text.
    Lattice {
        #[command(flatten)]
        common: Common,
        /// Cells per side.
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// outdoor-prati or indoor-60ghz.
    #[arg(long)]
    preset: Option<String>,
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rw, g05, g10, a comma list, or all.
    #[arg(long)]
    model: Option<String>,
    /// series, integral, closed, asymptotic, a comma list, or all.
    #[arg(long)]
    route: Option<String>,
    /// Cell side in metres.
    #[arg(long)]
    a: Option<f64>,
    /// Open probability.
    #[arg(long)]
    p: Option<f64>,
    /// Reflection loss in dB, for every model.
    #[arg(long = "L")]
    loss: Option<f64>,
    #[arg(long)]
    r_start: Option<f64>,
    #[arg(long)]
    r_stop: Option<f64>,
    #[arg(long)]
    r_count: Option<usize>,
    /// log or linear.
    #[arg(long)]
    r_scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Domain(perc_channel::Error),
    Check(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Check(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Domain(e) => write!(f, "domain error: {e}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<perc_channel::Error> for CliError {
    fn from(e: perc_channel::Error) -> Self {
        match e {
            perc_channel::Error::Parse { .. } => CliError::Config(e.to_string()),
            other => CliError::Domain(other),
        }
    }
}

fn resolve(common: Common, extra: Layer) -> Result<RunConfig, CliError> {
    let mut layers = Vec::new();
    if let Some(name) = &common.preset {
        layers.push(preset_layer(name)?);
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        layers.push(Layer::parse(&text, &path.display().to_string())?);
    }
    let mut flags = Layer::default();
    flags.set_opt("model", common.model);
    flags.set_opt("route", common.route);
    flags.set_opt("a", common.a);
    flags.set_opt("p", common.p);
    flags.set_opt("L", common.loss);
    flags.set_opt("r_start", common.r_start);
    flags.set_opt("r_stop", common.r_stop);
    flags.set_opt("r_count", common.r_count);
    flags.set_opt("r_scale", common.r_scale);
    flags.set_opt("seed", common.seed);
    flags.set_opt("out", common.out.map(|p| p.display().to_string()));
    layers.push(Layer::from_assignments(&common.set)?);
    layers.push(flags);
    layers.push(extra);
    RunConfig::from_map(&merge(&layers)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut extra = Layer::default();
    match cli.command {
        Command::Predict {
            common,
            measurements,
            reference,
        } => {
            extra.set_opt("measurements", measurements.map(|p| p.display().to_string()));
            extra.set_opt("ref", reference);
            commands::predict(&resolve(common, extra)?)
        }
        Command::Validate { common, mc, rays } => {
            if mc {
                extra.set("mc", "true");
            }
            extra.set_opt("rays", rays);
            commands::validate(&resolve(common, extra)?)
        }
        Command::Fit {
            common,
            data,
            select,
            l_min,
            l_max,
        } => {
            extra.set_opt("measurements", data.map(|p| p.display().to_string()));
            extra.set_opt("select", select);
            extra.set_opt("L_min", l_min);
            extra.set_opt("L_max", l_max);
            commands::fit(&resolve(common, extra)?)
        }
        Command::Simulate {
            common,
            rays,
            collisions,
            n,
            width,
            medium,
            loss_spread,
        } => {
            extra.set_opt("rays", rays);
            extra.set_opt("collisions", collisions);
            extra.set_opt("n", n);
            extra.set_opt("width", width);
            extra.set_opt("medium", medium);
            extra.set_opt("loss_spread", loss_spread);
            commands::simulate(&resolve(common, extra)?)
        }
        Command::Lattice { common, n } => {
            extra.set_opt("n", n);
            commands::lattice(&resolve(common, extra)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("perc-channel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

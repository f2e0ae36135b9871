//! `beamswitch` command line: one subcommand per experiment, all outputs
//! under a run directory next to a manifest echoing the resolved config.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use beamswitch::{Execution, Result};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "beamswitch", version, about = "Sub-symbol beam switching experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON run configuration; missing sections take defaults.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for all outputs.
    #[arg(long, short, default_value = "run")]
    pub out: PathBuf,
    /// Disable data parallelism.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a codebook (and optionally update it for moved users); prints a gains table.
    Codebook {
        #[command(flatten)]
        common: Common,
        /// Start from an existing codebook file instead of building one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Beam-pattern CSV of the codebook over an azimuth grid.
    Pattern {
        #[command(flatten)]
        common: Common,
    },
    /// Epsilon sweep CSV and the OPT-Base/OPT-Accel comparison.
    Tradeoff {
        #[command(flatten)]
        common: Common,
    },
    /// One scene end to end: EVM per user and sensing CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Azimuth/elevation heatmap as CSV and 8-bit PGM.
    Image {
        #[command(flatten)]
        common: Common,
    },
    /// Calibrate SP weights and evaluate on held-out runs.
    Localize {
        #[command(flatten)]
        common: Common,
    },
    /// Codebook maintenance under user motion.
    Mobility {
        #[command(flatten)]
        common: Common,
    },
    /// Sliding-DFT operation counts and latency.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Codebook { .. } => "codebook",
            Command::Pattern { .. } => "pattern",
            Command::Tradeoff { .. } => "tradeoff",
            Command::Simulate { .. } => "simulate",
            Command::Image { .. } => "image",
            Command::Localize { .. } => "localize",
            Command::Mobility { .. } => "mobility",
            Command::Bench { .. } => "bench",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Codebook { common, .. }
            | Command::Pattern { common }
            | Command::Tradeoff { common }
            | Command::Simulate { common }
            | Command::Image { common }
            | Command::Localize { common }
            | Command::Mobility { common }
            | Command::Bench { common } => common,
        }
    }
}

/// Output directory plus the list of files written, for the manifest.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(p, bytes)?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s)
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<fs::File>> {
        let p = self.path(name);
        Ok(csv::Writer::from_path(p)?)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    outputs: &'a [String],
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &common.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    cfg.resolve_seed(common.seed);
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common().clone();
    let cfg = load(&common)?;
    let exec = if common.sequential { Execution::Sequential } else { Execution::default() };
    let mut dir = RunDir::create(&common.out)?;
    match &cli.command {
        Command::Codebook { input, .. } => commands::codebook(&cfg, input.as_deref(), &mut dir, exec)?,
        Command::Pattern { .. } => commands::pattern(&cfg, &mut dir, exec)?,
        Command::Tradeoff { .. } => commands::tradeoff(&cfg, &mut dir, exec)?,
        Command::Simulate { .. } => commands::simulate(&cfg, &mut dir, exec)?,
        Command::Image { .. } => commands::image(&cfg, &mut dir, exec)?,
        Command::Localize { .. } => commands::localize(&cfg, &mut dir, exec)?,
        Command::Mobility { .. } => commands::mobility(&cfg, &mut dir, exec)?,
        Command::Bench { .. } => commands::bench(&cfg, &mut dir)?,
    }
    let mut outputs = dir.files.clone();
    outputs.sort();
    outputs.dedup();
    let manifest = Manifest {
        tool: "beamswitch",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: &cfg,
        outputs: &outputs,
    };
    dir.json("manifest.json", &manifest)?;
    println!("wrote {} files to {}", outputs.len() + 1, common.out.display());
    Ok(())
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qrc_core::states::{StateKind, StateSpec};

use crate::commands::{Run, CONFIG};
use crate::config::ExperimentConfig;
use crate::error::CliError;

const DEFAULT_OUT: &str = "qrc-run";

#[derive(Debug, Parser)]
#[command(
    name = "qrc-sensor",
    version,
    about = "Reservoir sensing experiments: simulate, featurise, train, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML). Stages after `simulate` fall back to
    /// the copy stored in the run directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; defaults to `out_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "QRC_SENSOR_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the datasets and simulate reference and sample responses.
    Simulate,
    /// Bin reference-subtracted responses into feature tables.
    Features,
    /// Fit every configured readout and write checkpoints.
    Train,
    /// Score checkpoints on the test split and write result tables.
    Evaluate,
    /// Sweep the Kerr strength or lattice size.
    Sweep,
    /// All stages in one go.
    Run,
    /// Write the Wigner grid of one state.
    Wigner(WignerArgs),
}

#[derive(Debug, Args)]
pub struct WignerArgs {
    #[arg(long)]
    pub state: StateKind,
    /// Coherent or cat amplitude magnitude.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Coherent or cat amplitude phase.
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    /// Squeezing magnitude.
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Squeezing phase.
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    /// Relative phase of the cat superposition.
    #[arg(long, default_value_t = 0.0)]
    pub cat_phase: f64,
    /// Grid points per axis.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub extent: Option<f64>,
    /// Fock cutoff; chosen from the state when absent.
    #[arg(long)]
    pub cutoff: Option<usize>,
}

impl WignerArgs {
    fn spec(&self) -> StateSpec {
        match self.state {
            StateKind::Coherent => StateSpec::coherent(self.beta, self.phase),
            StateKind::SqueezedVacuum => StateSpec::squeezed(self.r, self.theta),
            StateKind::Cat => StateSpec::cat_with_phase(self.beta, self.phase, self.cat_phase),
        }
    }
}

fn resolve_config(common: &Common) -> Result<Option<ExperimentConfig>, CliError> {
    let mut config = match (&common.config, &common.out) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(out)) if out.join(CONFIG).is_file() => {
            ExperimentConfig::load(&out.join(CONFIG))?
        }
        _ => return Ok(None),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(Some(config))
}

fn out_dir(common: &Common, config: Option<&ExperimentConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn install_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    install_threads(cli.common.threads)?;
    let config = resolve_config(&cli.common)?;
    let out = out_dir(&cli.common, config.as_ref());
    if let Command::Wigner(args) = &cli.command {
        let grid = config
            .as_ref()
            .map(ExperimentConfig::grid)
            .unwrap_or_default();
        let size = args.size.unwrap_or(grid.size);
        let extent = args.extent.unwrap_or(grid.extent);
        let (path, _) =
            crate::commands::write_wigner(&out, &args.spec(), size, extent, args.cutoff)?;
        println!("{}", path.display());
        return Ok(());
    }
    let config = config.ok_or_else(|| {
        CliError::Usage("--config is required (no config.toml in the run directory)".into())
    })?;
    let run = Run::open(config, out)?;
    let result = match cli.command {
        Command::Simulate => run.simulate(),
        Command::Features => run.features(),
        Command::Train => run.train(),
        Command::Evaluate => run.evaluate(),
        Command::Sweep => run.sweep(),
        Command::Run => run.run(),
        Command::Wigner(_) => unreachable!("handled above"),
    };
    if let Err(e) = &result {
        run.mark_failed(e);
    } else {
        println!("{}", run.root.display());
    }
    result
}

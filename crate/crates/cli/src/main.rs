use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taxoprobe::attention::Direction;
use taxoprobe_cli::{
    cmd_build_dataset, cmd_extract, cmd_probe, cmd_visualize, describe_build, exit, CliError,
    CliResult, RunConfig,
};

#[derive(Parser)]
#[command(name = "taxoprobe", version, about = "Probe transformer attention for hypernymy")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (probe split; seed of a bare `stub` backend).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace an existing matrix store.
    #[arg(long, global = true)]
    force: bool,
    /// Attention direction fed to the probe: forward, backward or average.
    #[arg(long, global = true)]
    direction: Option<Direction>,
    /// Root directory for all outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the positive, negative and sister sentence sets.
    BuildDataset {
        #[command(flatten)]
        inputs: DatasetInputs,
    },
    /// Extract attention matrices into the matrix store.
    Extract {
        /// Backend spec: stub, stub:SEED, stub:SEED:LxH or transformers:MODEL_DIR.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Train and evaluate the four probing experiments.
    Probe {
        /// Also report stratified k-fold cross-validated accuracy.
        #[arg(long)]
        cv_folds: Option<usize>,
        /// Restrict to a single pattern.
        #[arg(long)]
        pattern: Option<u8>,
    },
    /// Render averaged heatmaps and skewness figures.
    Visualize,
    /// Run build-dataset, extract, probe and visualize in order.
    All {
        #[command(flatten)]
        inputs: DatasetInputs,
        #[arg(long)]
        backend: Option<String>,
    },
}

#[derive(clap::Args)]
struct DatasetInputs {
    /// Feature-norms table.
    #[arg(long)]
    norms: Option<PathBuf>,
    /// WordNet dict directory or taxonomy fixture file.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Norms column layout: tsv or mcrae.
    #[arg(long)]
    norms_preset: Option<String>,
}

impl DatasetInputs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(p) = &self.norms {
            config.paths.norms = Some(p.clone());
        }
        if let Some(p) = &self.lexicon {
            config.paths.lexicon = Some(p.clone());
        }
        if let Some(p) = &self.norms_preset {
            config.norms.preset = p.clone();
        }
    }
}

fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|m| CliError::new(exit::INPUT, m))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(d) = cli.direction {
        config.direction = d;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    match &cli.command {
        Command::BuildDataset { inputs } => inputs.apply(&mut config),
        Command::Extract { backend } => {
            if let Some(b) = backend {
                config.backend.spec = b.clone();
            }
        }
        Command::Probe { cv_folds, pattern } => {
            if cv_folds.is_some() {
                config.probe.cv_folds = *cv_folds;
            }
            if pattern.is_some() {
                config.probe.pattern = *pattern;
            }
        }
        Command::Visualize => {}
        Command::All { inputs, backend } => {
            inputs.apply(&mut config);
            if let Some(b) = backend {
                config.backend.spec = b.clone();
            }
        }
    }
    Ok(config)
}

fn build(config: &RunConfig) -> CliResult<()> {
    let report = cmd_build_dataset(config)?;
    print!("{}", describe_build(&report, &config.dataset_dir()));
    Ok(())
}

fn extract(config: &RunConfig, force: bool) -> CliResult<()> {
    let report = cmd_extract(config, force)?;
    println!(
        "wrote {} matrices to {} ({})",
        report.matrices_written,
        config.store_dir().display(),
        report.backend
    );
    print!("{}", report.to_tsv());
    Ok(())
}

fn probe(config: &RunConfig) -> CliResult<()> {
    let report = cmd_probe(config)?;
    print!("{}", report.to_table());
    Ok(())
}

fn visualize(config: &RunConfig) -> CliResult<()> {
    let s = cmd_visualize(config)?;
    println!(
        "wrote {} heatmaps, {} panel grids and {} skewness figures under {}",
        s.heatmaps,
        s.composites,
        s.skewness_figures,
        taxoprobe_cli::figures_dir(config).display()
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let config = effective_config(cli)?;
    match &cli.command {
        Command::BuildDataset { .. } => build(&config),
        Command::Extract { .. } => extract(&config, cli.force),
        Command::Probe { .. } => probe(&config),
        Command::Visualize => visualize(&config),
        Command::All { .. } => {
            build(&config)?;
            extract(&config, cli.force)?;
            probe(&config)?;
            visualize(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.code).unwrap_or(1))
        }
    }
}

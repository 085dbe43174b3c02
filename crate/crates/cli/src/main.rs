use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brainmesh_cli::{stages, sweep, CliError, Config, Stage};

#[derive(Parser)]
#[command(name = "brainmesh", version, about = "Multi-resolution mesh network pipeline")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,

    /// Overrides the top-level `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run only the named stage; its upstream artifacts must already exist.
    #[arg(long, global = true)]
    stage_only: bool,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Generate synthetic sessions
    Synth,
    /// Wavelet sub-band signals
    Decompose,
    /// Mesh arc descriptors per window
    Mesh,
    /// Train autoencoders and write codes
    Encode,
    /// Hierarchical clustering of every representation
    Cluster,
    /// RI / ARI per subject and the mean report
    Evaluate,
    /// Medoid networks, precision and edge lists
    Netstats,
    /// Grid search over (p, lambda) then (rho, lambda2)
    Sweep,
    /// Print the evaluation report, running the pipeline as needed
    Report,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation(vec!["--threads: must be >= 1".into()]));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let stage = match cli.verb {
        Verb::Synth => Stage::Synth,
        Verb::Decompose => Stage::Decompose,
        Verb::Mesh => Stage::Mesh,
        Verb::Encode => Stage::Encode,
        Verb::Cluster => Stage::Cluster,
        Verb::Evaluate => Stage::Evaluate,
        Verb::Netstats => Stage::Netstats,
        Verb::Sweep => {
            let path = sweep::run(&config, &cli.run_dir)?;
            println!("{}", path.display());
            return Ok(());
        }
        Verb::Report => {
            stages::run(&config, &cli.run_dir, Stage::Evaluate, cli.stage_only)?;
            let path = stages::compare_representations(&cli.run_dir)?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io { path, source: e })?;
            print!("{text}");
            return Ok(());
        }
    };
    stages::run(&config, &cli.run_dir, stage, cli.stage_only)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

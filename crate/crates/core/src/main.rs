use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use attrakt::config::ExperimentConfig;
use attrakt::pipeline::{self, Stage};
use attrakt::report;
use attrakt::systems::SystemKind;
use attrakt::{Error, Result};

#[derive(Parser)]
#[command(name = "attrakt", version, about = "Sample an attractor, embed it and build an ODE in R^m that reproduces it")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML). Without it the PlanarCycle defaults are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; overrides `[sampling] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// First stage to execute for `run`; earlier artifacts are read from `--out`.
    #[arg(long, global = true)]
    stage_from: Option<Stage>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the attractor.
    Sample,
    /// Estimate the dimension and check the gates.
    Dimension,
    /// Draw and verify the linear embedding.
    Embed,
    /// Fit the modulus extension.
    Extend,
    /// Build the Lyapunov surrogate and run the β ladder.
    Lyapunov,
    /// Integrate the combined field and check every property.
    Verify,
    /// All stages in order.
    Run,
    /// Rebuild summary.json from the artifacts in `--out`.
    Report,
    /// Print the resolved config.
    Config,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::defaults(SystemKind::PlanarCycle),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = seed;
    }
    cfg.validate()?;
    cfg.resolve_static();
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ATTRAKT_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("ATTRAKT_THREADS={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<i32> {
    init_threads()?;
    let cfg = load_config(cli)?;
    let dir = cfg.output.dir.clone();
    let single = |stage: Stage| pipeline::run_stages(&cfg, &dir, stage, stage);
    let arts = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            return Ok(0);
        }
        Command::Report => {
            let s = report::write_summary(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            return Ok(0);
        }
        Command::Run => pipeline::run_stages(&cfg, &dir, cli.stage_from.unwrap_or(Stage::Sample), Stage::Verify)?,
        Command::Sample => single(Stage::Sample)?,
        Command::Dimension => single(Stage::Dimension)?,
        Command::Embed => single(Stage::Embed)?,
        Command::Extend => single(Stage::Extend)?,
        Command::Lyapunov => single(Stage::Lyapunov)?,
        Command::Verify => single(Stage::Verify)?,
    };
    for s in &arts.completed {
        eprintln!("stage {s}: ok");
    }
    match arts.failure {
        Some(f) => {
            eprintln!("stage {}: failed ({}): {}", f.stage, f.cause, f.message);
            Ok(f.exit_code)
        }
        None => {
            let r = &arts.summary["results"];
            if !r["hausdorff_X_LA"].is_null() {
                eprintln!(
                    "hausdorff(X, LA) = {}  reproduction = {}  captured = {}  invariance violations = {}",
                    r["hausdorff_X_LA"], r["reproduction_error"], r["all_captured"], r["invariance_violations"]
                );
            }
            eprintln!("summary: {}", dir.join("summary.json").display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaitsada_core::config::ExperimentConfig;
use gaitsada_core::dataset::load_split;
use gaitsada_core::eval::{evaluate, export_run_plots, run_ablation};
use gaitsada_core::experiment::{simulate_into, RunDir, CONFIG_FILE};
use gaitsada_core::model::ModelState;
use gaitsada_core::sim::DomainPreset;
use gaitsada_core::train::{train_stage1, train_stage2};
use gaitsada_core::{Error, Result};

/// Synthetic mmWave gait radar and two-stage domain adaptation experiments.
#[derive(Debug, Parser)]
#[command(name = "gaitsada", version)]
struct Cli {
    /// Worker threads for simulation and training (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (JSON). Defaults to the run directory's config.json,
    /// or the built-in desk benchmark for `simulate`.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Run directory (default: the config's output_root).
    #[arg(long)]
    run: Option<PathBuf>,

    /// Overrides the experiment and training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every (subject, domain, day, direction) cell and write the dataset.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        subjects: Option<usize>,
        /// Recording days for every domain.
        #[arg(long)]
        days: Option<u32>,
        /// Comma-separated domain presets, e.g. `source,office`.
        #[arg(long, value_delimiter = ',')]
        domains: Option<Vec<DomainPreset>>,
        /// Walks per (subject, domain, day, direction).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train stage 1 from scratch or stage 2 from the stage-1 checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
    },
    /// Target-test accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to the newest of checkpoints/stage2.json and stage1.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the ablation table over the configured rows, columns and seeds.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Export spectrogram grids, curves, bars and saliency overlays.
    Plots {
        #[command(flatten)]
        run: RunArgs,
        /// Number of saliency overlays.
        #[arg(long, default_value_t = 4)]
        saliency: usize,
    },
}

/// Config precedence: `--config`, then the run directory's config.json
/// (unless `fresh`), then the built-in defaults. The environment and
/// `--seed` override seed and output root on top.
fn resolve(args: &RunArgs, fresh: bool) -> Result<(ExperimentConfig, RunDir)> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    let root = args.run.clone().unwrap_or_else(|| cfg.output_root.clone());
    let embedded = root.join(CONFIG_FILE);
    if args.config.is_none() && !fresh && embedded.exists() {
        cfg = ExperimentConfig::load(&embedded)?;
        cfg.apply_env()?;
    }
    if let Some(seed) = args.seed {
        cfg.apply_overrides(Some(&seed.to_string()), None)?;
    }
    cfg.validate()?;
    Ok((cfg, RunDir::open(&root)))
}

fn newest_checkpoint(run: &RunDir) -> Result<PathBuf> {
    ["stage2", "stage1"]
        .iter()
        .map(|n| run.checkpoint(n))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Orchestration(format!("no checkpoint under {}", run.checkpoints().display())))
}

fn require_dataset(run: &RunDir) -> Result<()> {
    if !run.root.join(gaitsada_core::dataset::MANIFEST_FILE).exists() {
        return Err(Error::Orchestration(format!(
            "no dataset in {}; run `gaitsada simulate` first",
            run.root.display()
        )));
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            run,
            subjects,
            days,
            domains,
            samples,
        } => {
            let (mut cfg, dir) = resolve(&run, true)?;
            if let Some(n) = subjects {
                cfg.roster.subjects = n;
            }
            if let Some(d) = days {
                cfg.days = d;
                cfg.source_days = None;
            }
            if let Some(d) = domains {
                cfg.domains = d;
            }
            if let Some(n) = samples {
                cfg.walk.samples_per_direction = n;
            }
            cfg.output_root = dir.root.clone();
            cfg.validate()?;
            let dir = RunDir::create(&dir.root, &cfg)?;
            let manifest = simulate_into(&dir, &cfg)?;
            println!("simulated {} spectrograms into {}", manifest.entries.len(), dir.root.display());
        }
        Command::Train { run, stage } => {
            let (cfg, dir) = resolve(&run, false)?;
            require_dataset(&dir)?;
            let stage1 = dir.checkpoint("stage1");
            if stage == 2 && !stage1.exists() {
                return Err(Error::Orchestration(format!(
                    "stage 2 needs the stage-1 checkpoint {}; run `gaitsada train --stage 1` first",
                    stage1.display()
                )));
            }
            let data = load_split(&dir.root, &cfg.split)?;
            let (model, report) = if stage == 1 {
                train_stage1(cfg.encoder.clone(), &data, &cfg.augment, &cfg.train)?
            } else {
                train_stage2(Some(ModelState::load(&stage1)?), &data, &cfg.augment, &cfg.train)?
            };
            let name = format!("stage{stage}");
            model.save(&dir.checkpoint(&name))?;
            report.write(&dir.reports().join(format!("{name}.jsonl")))?;
            let acc = evaluate(&model, &data)?;
            println!("stage {stage}: target-test accuracy {acc:.2}%");
        }
        Command::Eval { run, checkpoint } => {
            let (cfg, dir) = resolve(&run, false)?;
            require_dataset(&dir)?;
            let path = match checkpoint {
                Some(p) => p,
                None => newest_checkpoint(&dir)?,
            };
            let data = load_split(&dir.root, &cfg.split)?;
            let acc = evaluate(&ModelState::load(&path)?, &data)?;
            println!("{}: target-test accuracy {acc:.2}%", path.display());
        }
        Command::Ablate { run } => {
            let (cfg, dir) = resolve(&run, false)?;
            require_dataset(&dir)?;
            let outcome = run_ablation(&cfg, &dir.root, &dir.root.join("ablation"))?;
            outcome.table.save(&dir.reports(), "ablation")?;
            print!("{}", outcome.table.to_text());
        }
        Command::Plots { run, saliency } => {
            let (_, dir) = resolve(&run, false)?;
            let files = export_run_plots(&dir, saliency)?;
            println!("wrote {} figures to {}", files.len(), dir.plots().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssml::image_ops::AugmentationPipeline;
use ssml::pipeline::{
    cmd_augment_preview, cmd_compare, cmd_eval, cmd_pretrain, cmd_prob, cmd_sweep_temperature, cmd_train,
    PipelineError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "ssml",
    version,
    about = "Semi-supervised meta-learning: unsupervised pretraining, then few-shot training"
)]
struct Cli {
    /// `key = value` config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for checkpoints and CSVs.
    #[arg(long, global = true, default_value = "ssml-out")]
    out: PathBuf,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unsupervised meta-training on unlabeled images.
    Pretrain,
    /// Supervised meta-training from random, pretrained or checkpoint init.
    Train,
    /// Held-out accuracy of a checkpoint.
    Eval,
    /// Random init against transferred init over several seeds.
    Compare {
        /// Second arm's config; without it the second arm pretrains.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Probability that sampled images all come from distinct classes.
    Prob {
        classes: usize,
        per_class: usize,
        n: usize,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Pretraining accuracy across inner-loop temperatures.
    SweepTemp {
        /// Comma-separated list; defaults to the config's `temperatures`.
        #[arg(long)]
        temperatures: Option<String>,
    },
    /// Augmented samples of one PNG with pixel histograms.
    AugmentPreview {
        image: PathBuf,
        /// Preset name or explicit step list.
        #[arg(long, default_value = "ours_rgb")]
        preset: String,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<RunConfig, PipelineError> {
    let mut cfg = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = || load_config(cli.config.as_deref(), cli.seed, &cli.overrides);
    match cli.command {
        Command::Pretrain => println!("{}", cmd_pretrain(&cfg()?, &cli.out)?),
        Command::Train => println!("{}", cmd_train(&cfg()?, &cli.out)?),
        Command::Eval => {
            let rec = cmd_eval(&cfg()?, &cli.out)?;
            println!(
                "accuracy {:.4} ± {:.4} over {} episodes",
                rec.accuracy, rec.ci95, rec.episodes
            );
        }
        Command::Compare { ref against } => {
            let mut configs = vec![cfg()?];
            if let Some(b) = against {
                configs.push(load_config(Some(b), cli.seed, &cli.overrides)?);
            }
            println!("{}", cmd_compare(&configs, &cli.out)?);
        }
        Command::Prob {
            classes,
            per_class,
            n,
            trials,
        } => {
            let seed = match (&cli.config, cli.seed) {
                (_, Some(s)) => s,
                (Some(_), None) => cfg()?.seed,
                (None, None) => 0,
            };
            println!("{}", cmd_prob(classes, per_class, n, trials, seed)?);
        }
        Command::SweepTemp { ref temperatures } => {
            let mut cfg = cfg()?;
            if let Some(t) = temperatures {
                cfg.set("temperatures", t)?;
            }
            for (t, rec) in cmd_sweep_temperature(&cfg, &cfg.temperatures, &cli.out)? {
                println!("T={t}: accuracy {:.4} ± {:.4}", rec.accuracy, rec.ci95);
            }
        }
        Command::AugmentPreview {
            ref image,
            ref preset,
            count,
        } => {
            let pipeline: AugmentationPipeline = preset
                .parse()
                .map_err(|e| PipelineError::Config(format!("preset: {e}")))?;
            let seed = cli.seed.unwrap_or(0);
            let rep = cmd_augment_preview(image, &pipeline, count, seed, &cli.out)?;
            println!("wrote {} samples and {}", rep.images.len(), rep.histograms.display());
            if let Some(d) = rep.dispersion {
                println!("histogram dispersion {d:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `nlosloc` — NLOS-aware UWB localization toolkit.

use std::path::PathBuf;

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand};

use nlosloc::commands::{self, LocalizeOptions};
use nlosloc::geom::Point2;
use nlosloc::nn::InputSet;

#[derive(Parser)]
#[command(
    name = "nlosloc",
    version,
    about = "Simulate UWB ranging, classify NLOS measurements, localize and evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario or pipeline config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a ranging campaign: dataset CSV plus ground-truth poses
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset CSV
        #[arg(long)]
        out: PathBuf,
        /// Output ground-truth CSV (default: <out stem>_truth.csv)
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Train the LOS classifier on a labelled dataset (seeded 80/20 split)
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Labelled dataset CSV
        #[arg(long)]
        dataset: PathBuf,
        /// Output model file
        #[arg(long)]
        out: PathBuf,
        /// Input subset: all, no_fp_rssi, no_rx_rssi, no_rssd, no_std
        #[arg(long, default_value = "all", value_parser = parse_input_set)]
        inputs: InputSet,
    },
    /// Write per-measurement LOS probabilities for a dataset
    Classify {
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV
        #[arg(long)]
        dataset: PathBuf,
        /// Output probabilities CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the trajectory from a dataset, weighted or not
    Localize {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset CSV
        #[arg(long)]
        dataset: PathBuf,
        /// Model file providing LOS probabilities as weights
        #[arg(long, conflicts_with = "nwls")]
        model: Option<PathBuf>,
        /// Unweighted baseline (every weight 1)
        #[arg(long)]
        nwls: bool,
        /// Start position "x,y" (default: scenario start)
        #[arg(long, value_parser = parse_point)]
        start: Option<Point2>,
        /// Output estimates CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare estimate files against ground truth
    Evaluate {
        /// Ground-truth poses CSV
        #[arg(long)]
        truth: PathBuf,
        /// Baseline estimates CSV (reported as improvement `Nil`)
        #[arg(long)]
        baseline: PathBuf,
        /// Candidate estimates CSVs, named by file stem
        #[arg(required = true)]
        estimates: Vec<PathBuf>,
        /// Output directory for report.txt, report.csv and CDF files
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full experiment: simulate, train, localize, evaluate
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_input_set(s: &str) -> Result<InputSet, String> {
    InputSet::parse(s).ok_or_else(|| {
        format!(
            "unknown input subset {s:?}; expected one of: {}",
            InputSet::ALL_SETS
                .iter()
                .map(|v| v.name())
                .collect::<Vec<_>>()
                .join(", ")
        )
    })
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected \"x,y\", got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad coordinate {v:?}"))
    };
    Ok(Point2::new(parse(x)?, parse(y)?))
}

fn stem_name(path: &std::path::Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out, truth } => {
            let truth = truth.unwrap_or_else(|| {
                let stem = stem_name(&out);
                out.with_file_name(format!("{stem}_truth.csv"))
            });
            let n = commands::cmd_simulate(&config.config, &out, &truth, config.seed)
                .map_err(|e| anyhow!(commands::describe_error(&e)))?;
            println!(
                "wrote {n} samples to {} (truth: {})",
                out.display(),
                truth.display()
            );
        }
        Command::Train {
            config,
            dataset,
            out,
            inputs,
        } => {
            let outcome = commands::cmd_train(&config.config, &dataset, &out, inputs, config.seed)
                .map_err(|e| anyhow!(commands::describe_error(&e)))?;
            println!(
                "trained `{}` model on {} samples; held-out ({} samples): accuracy {:.2}%, precision {:.4}",
                outcome.input_set,
                outcome.train_samples,
                outcome.held_out_samples,
                outcome.metrics.accuracy,
                outcome.metrics.precision
            );
            println!("model written to {}", out.display());
        }
        Command::Classify {
            model,
            dataset,
            out,
        } => {
            let n = commands::cmd_classify(&model, &dataset, &out)
                .map_err(|e| anyhow!(commands::describe_error(&e)))?;
            println!("wrote {n} probabilities to {}", out.display());
        }
        Command::Localize {
            config,
            dataset,
            model,
            nwls,
            start,
            out,
        } => {
            if model.is_none() && !nwls {
                bail!("choose a weighting: --model <file> or --nwls");
            }
            let opts = LocalizeOptions {
                model_path: model,
                start,
            };
            let n = commands::cmd_localize(&config.config, &dataset, &opts, &out)
                .map_err(|e| anyhow!(commands::describe_error(&e)))?;
            println!("wrote {n} estimates to {}", out.display());
        }
        Command::Evaluate {
            truth,
            baseline,
            estimates,
            out,
        } => {
            let candidates: Vec<(String, PathBuf)> = estimates
                .iter()
                .map(|p| (stem_name(p), p.clone()))
                .collect();
            let report = commands::cmd_evaluate(
                &truth,
                (&stem_name(&baseline), &baseline),
                &candidates,
                &out,
            )
            .map_err(|e| anyhow!(commands::describe_error(&e)))?;
            print!("{report}");
            println!("report written under {}", out.display());
        }
        Command::Pipeline { config, out } => {
            let outcome = commands::cmd_pipeline(&config.config, &out, config.seed)
                .map_err(|e| anyhow!(commands::describe_error(&e)))?;
            for (set, metrics) in &outcome.train_metrics {
                println!(
                    "model {set}: held-out accuracy {:.2}%, precision {:.4}",
                    metrics.accuracy, metrics.precision
                );
            }
            for (label, report) in &outcome.reports {
                println!("\n== {label} ==");
                print!("{report}");
            }
            println!(
                "\n{} artifacts; manifest: {}",
                outcome.files.len(),
                outcome.manifest_path.display()
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

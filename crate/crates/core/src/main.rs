use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sepred::channel::{generate_range, load_dataset, save_dataset, ScenarioConfig, ScenarioKind, UserCount};
use sepred::features::{FeatureScheme, FeatureSpec};
use sepred::harness::{
    bench_csv, build_frame, compare_models, comparison_csv, label_objects, run_benchmark, score, BenchConfig,
    ExperimentConfig, Frame, LabelSet, TargetMode,
};
use sepred::mimo::{DetectorKind, PrecoderKind};
use sepred::models::{mape, Model, ModelFamily};
use sepred::table::Table;
use sepred::{Error, ErrorClass, Result};

/// Spectral-efficiency ground truth and learned predictors for multi-user
/// MIMO downlink.
#[derive(Parser)]
#[command(name = "sepred", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel dataset.
    Gen {
        #[arg(long, default_value = "urban")]
        scenario: ScenarioKind,
        /// Fixed count like `4` or a set like `{2,4,8}`.
        #[arg(long, default_value = "4")]
        users: UserCount,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// First sample index; disjoint ranges give disjoint samples.
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute ground-truth SE for every object of a dataset.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "zf")]
        precoder: PrecoderKind,
        #[arg(long, default_value = "mmse")]
        detector: DetectorKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a dataset (and optionally its labels) into a feature CSV.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "sorted")]
        scheme: FeatureScheme,
        /// Append the SUSINR feature.
        #[arg(long)]
        susinr: bool,
        /// Append the noise variance feature.
        #[arg(long)]
        sigma2: bool,
        #[arg(long, default_value = "average")]
        target: TargetMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a feature CSV with a `target` column.
    Train {
        #[arg(long)]
        feats: PathBuf,
        #[arg(long)]
        model: ModelFamily,
        #[arg(long, default_value_t = 228)]
        seed: u64,
        /// Hyperparameter override such as `gbdt.depth=4`; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on a labeled feature CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        feats: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Run a full experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Time ground truth against preprocessing and inference.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several configurations on shared data and tabulate MAPE.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            scenario,
            users,
            n,
            seed,
            start,
            out,
        } => {
            let cfg = ScenarioConfig::preset(scenario, seed);
            let objects = generate_range(&cfg, start, n, &users)?;
            save_dataset(&objects, &out)?;
            eprintln!("wrote {} objects to {}", objects.len(), out.display());
        }
        Command::Label {
            input,
            precoder,
            detector,
            out,
        } => {
            let objects = load_dataset(&input)?;
            let labels = label_objects(&objects, precoder, detector)?;
            labels.to_table(true).write_csv(&out)?;
            eprintln!(
                "labeled {} objects ({} dropped as ill-conditioned)",
                labels.labels.len(),
                labels.dropped.len()
            );
        }
        Command::Featurize {
            input,
            labels,
            scheme,
            susinr,
            sigma2,
            target,
            out,
        } => {
            let objects = load_dataset(&input)?;
            let labels = labels
                .map(|p| Table::read_csv(p).and_then(|t| LabelSet::from_table(&t)))
                .transpose()?;
            let spec = FeatureSpec::new(scheme).with_susinr(susinr).with_sigma2(sigma2);
            let frame = build_frame(&objects, labels.as_ref(), &spec, target)?;
            frame.to_table().write_csv(&out)?;
            eprintln!("wrote {} rows x {} features", frame.len(), frame.features.n_cols());
        }
        Command::Train {
            feats,
            model,
            seed,
            params,
            out,
        } => {
            let frame = Frame::from_table(&Table::read_csv(&feats)?)?;
            if !frame.has_targets() {
                return Err(Error::Format(format!("{} has no target column", feats.display())));
            }
            let mut text = format!("seed = {seed}\n");
            for p in &params {
                text.push_str(p);
                text.push('\n');
            }
            let train = ExperimentConfig::from_str_config(&text)?.train;
            let m = Model::train(model, &frame.features, &frame.targets, &train)?;
            m.save(&out)?;
            let fit = mape(&m.predict(&frame.features)?, &frame.targets)?;
            eprintln!("trained {model} on {} rows, train MAPE {fit:.4}", frame.len());
        }
        Command::Eval {
            model,
            feats,
            report,
            predictions,
        } => {
            let m = Model::load(&model)?;
            let frame = Frame::from_table(&Table::read_csv(&feats)?)?;
            if !frame.has_targets() {
                return Err(Error::Format(format!("{} has no target column", feats.display())));
            }
            let pred = m.predict(&frame.features)?;
            let (overall, per_k) = score(&frame, &pred)?;
            let mut s = format!("scope,k,rows,mape\nall,,{},{overall:?}\n", frame.len());
            for g in per_k.iter().filter(|g| g.num_users > 0) {
                s.push_str(&format!("k,{},{},{:?}\n", g.num_users, g.rows, g.mape));
            }
            fs::write(&report, s)?;
            if let Some(p) = predictions {
                fs::write(p, sepred::harness::experiment::predictions_csv(&frame, &pred))?;
            }
            println!("MAPE {overall:.6}");
        }
        Command::Run { config, out_dir } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out_dir.is_some() {
                cfg.out_dir = out_dir;
            }
            let report = sepred::harness::run_experiment(&cfg)?;
            print!("{}", report.to_csv());
        }
        Command::Bench { config, out } => {
            let base = config.parent().unwrap_or(Path::new("."));
            let cfg = BenchConfig::from_str_config(&fs::read_to_string(&config)?, base)?;
            let rows = run_benchmark(&cfg)?;
            write_or_print(out.as_deref(), &bench_csv(&rows))?;
        }
        Command::Compare { configs, out } => {
            let cfgs = configs.iter().map(ExperimentConfig::load).collect::<Result<Vec<_>>>()?;
            let rows = compare_models(&cfgs)?;
            write_or_print(out.as_deref(), &comparison_csv(&rows))?;
        }
    }
    Ok(())
}

/// Caps the worker pool when `SEPRED_THREADS` is set.
fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SEPRED_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("SEPRED_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}

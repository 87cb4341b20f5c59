use clap::{Args, Parser, Subcommand};
use scribbleseg::data::{
    labeled_pixel_stats, synthesize_dataset, DatasetManifest, Split, SynthConfig,
};
use scribbleseg::error::{Error, Result};
use scribbleseg::eval::evaluate;
use scribbleseg::model::{EncoderConfig, ModelConfig, Role, SegModel};
use scribbleseg::rng::Rng;
use scribbleseg::train::{
    ablation_sweep, generate_pseudo_labels, prepare_train_samples, train_semi_stage,
    train_weak_stage, PseudoLabelCache, SgdConfig, Stage, StagePlan, SweepConfig,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "scribbleseg",
    version,
    about = "Scribble-supervised segmentation: synthetic data, two-stage training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct ModelOpts {
    backbone_channels: Option<[usize; 3]>,
    use_dten: Option<bool>,
}

/// JSON config file: top-level keys `sgd`, `stage`, `encoder`, `model`.
/// Every key is optional; command-line flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct FileConfig {
    sgd: Option<SgdConfig>,
    stage: Option<StagePlan>,
    encoder: Option<EncoderConfig>,
    model: ModelOpts,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    /// JSON config file (keys: sgd, stage, encoder, model)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial learning rate (decays by 0.95 per epoch)
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Square training resolution, divisible by 16
    #[arg(long)]
    input_size: Option<usize>,
    /// Disable the deformable encoder neck (backbone + head baseline)
    #[arg(long)]
    no_dten: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scribble-annotated dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        /// Square image extent
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fraction of train images that receive scribbles
        #[arg(long)]
        labeled_fraction: Option<f64>,
    },
    /// Weakly-supervised teacher training on the labeled subset
    TrainWeak {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_ckpt: PathBuf,
        #[arg(long)]
        metrics_csv: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Teacher predictions for every train sample, written as a cache file
    Pseudo {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_cache: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Semi-supervised student training over the full train split
    TrainSemi {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        teacher_ckpt: PathBuf,
        #[arg(long)]
        out_ckpt: PathBuf,
        #[arg(long)]
        metrics_csv: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Dice/IoU evaluation of a checkpoint over a split
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Labeled-pixel statistics of the train split
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Hyperparameter grid sweeps (alpha and beta) with median rows
    Sweep {
        /// JSON grid file (keys: manifest, seeds, alpha_grid, beta_grid, threshold)
        #[arg(long)]
        grid_config: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        /// Directory for intermediate checkpoints (default: alongside the CSV)
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Full finite-difference gradient suite; exit 0 iff every check passes
    Gradcheck,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

struct Resolved {
    sgd: SgdConfig,
    plan: StagePlan,
    model: ModelConfig,
    threshold: f64,
}

fn resolve(args: &TrainArgs, stage: Stage, threshold_flag: Option<f64>) -> Result<Resolved> {
    let file: FileConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    let mut sgd = file.sgd.unwrap_or_default();
    let mut plan = file.stage.unwrap_or_default();
    plan.stage = stage;
    let mut model = ModelConfig {
        encoder: file.encoder.unwrap_or_default(),
        ..ModelConfig::default()
    };
    if let Some(bc) = file.model.backbone_channels {
        model.backbone_channels = bc;
    }
    if let Some(ud) = file.model.use_dten {
        model.use_dten = ud;
    }

    if let Some(v) = args.epochs {
        plan.epochs = v;
    }
    if let Some(v) = args.alpha {
        plan.alpha = v;
    }
    if let Some(v) = args.beta1 {
        plan.beta1 = v;
    }
    if let Some(v) = args.beta2 {
        plan.beta2 = v;
    }
    if let Some(v) = args.seed {
        plan.seed = v;
    }
    if let Some(v) = args.lr {
        sgd.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        sgd.batch_size = v;
    }
    if let Some(v) = args.input_size {
        plan.input_size = (v, v);
    }
    if args.no_dten {
        model.use_dten = false;
    }
    sgd.validate()?;
    plan.validate()?;
    model.validate()?;
    Ok(Resolved {
        sgd,
        plan,
        model,
        threshold: threshold_flag.unwrap_or(0.5),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Synth {
            out,
            n_train,
            n_test,
            size,
            seed,
            labeled_fraction,
        } => {
            let cfg = SynthConfig {
                n_train,
                n_test,
                size: (size, size),
                labeled_fraction: labeled_fraction.unwrap_or(SynthConfig::default().labeled_fraction),
            };
            let mut rng = Rng::new(seed);
            synthesize_dataset(&out, &cfg, &mut rng)?;
            println!(
                "wrote {} train / {} test samples at {}x{} under {}",
                n_train,
                n_test,
                size,
                size,
                out.display()
            );
        }
        Cmd::TrainWeak {
            manifest,
            out_ckpt,
            metrics_csv,
            train,
        } => {
            let r = resolve(&train, Stage::Weak, None)?;
            let manifest = DatasetManifest::load(&manifest)?;
            let summary =
                train_weak_stage(&manifest, &r.plan, &r.sgd, &r.model, &out_ckpt, metrics_csv.as_deref())?;
            println!(
                "weak stage: {} steps, loss {:.4} -> {:.4}, checkpoint {}",
                summary.steps,
                summary.epoch_losses.first().unwrap_or(&f64::NAN),
                summary.epoch_losses.last().unwrap_or(&f64::NAN),
                out_ckpt.display()
            );
        }
        Cmd::Pseudo {
            ckpt,
            manifest,
            out_cache,
            train,
        } => {
            let r = resolve(&train, Stage::Weak, None)?;
            let manifest = DatasetManifest::load(&manifest)?;
            let teacher = SegModel::load(&ckpt, r.model.clone(), Role::Teacher)?;
            let samples = prepare_train_samples(&manifest, r.plan.input_size)?;
            let cache = generate_pseudo_labels(&teacher, &samples)?;
            cache.save(&out_cache)?;
            println!("cached {} pseudo-labels at {}", cache.entries.len(), out_cache.display());
        }
        Cmd::TrainSemi {
            manifest,
            cache,
            teacher_ckpt,
            out_ckpt,
            metrics_csv,
            train,
        } => {
            let r = resolve(&train, Stage::Semi, None)?;
            let manifest = DatasetManifest::load(&manifest)?;
            // the teacher stays frozen; loading validates the architecture
            let _teacher = SegModel::load(&teacher_ckpt, r.model.clone(), Role::Teacher)?;
            let cache = PseudoLabelCache::load(&cache)?;
            let summary = train_semi_stage(
                &manifest,
                &cache,
                &r.plan,
                &r.sgd,
                &r.model,
                &out_ckpt,
                metrics_csv.as_deref(),
            )?;
            println!(
                "semi stage: {} steps ({} labeled / {} unlabeled batches), checkpoint {}",
                summary.steps,
                summary.labeled_batches,
                summary.unlabeled_batches,
                out_ckpt.display()
            );
        }
        Cmd::Eval {
            ckpt,
            manifest,
            split,
            out_csv,
            threshold,
            train,
        } => {
            let r = resolve(&train, Stage::Weak, threshold)?;
            let manifest = DatasetManifest::load(&manifest)?;
            let model = SegModel::load(&ckpt, r.model.clone(), Role::Teacher)?;
            let (h, w) = r.plan.input_size;
            let samples: Vec<_> = manifest
                .load_split(split.into())?
                .into_iter()
                .map(|mut s| {
                    s.image = scribbleseg::data::resize_image(&s.image, h, w);
                    s.dense_gt = s
                        .dense_gt
                        .map(|m| scribbleseg::data::resize_mask_nearest(&m, h, w));
                    s
                })
                .collect();
            let report = evaluate(&model, &samples, r.threshold, &ckpt.display().to_string())?;
            report.write_csv(&out_csv)?;
            println!(
                "checkpoint {} at threshold {}: mDice {:.4}, mIoU {:.4} over {} images -> {}",
                report.checkpoint_id,
                report.threshold,
                report.mdice,
                report.miou,
                report.rows.len(),
                out_csv.display()
            );
        }
        Cmd::Stats { manifest, out_csv } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let report = labeled_pixel_stats(&manifest)?;
            report.write_csv(&out_csv)?;
            println!(
                "train split: mean labeled {:.2}%, overall labeled {:.2}% -> {}",
                report.mean_percent,
                report.overall_percent,
                out_csv.display()
            );
        }
        Cmd::Sweep {
            grid_config,
            out_csv,
            work_dir,
            train,
        } => {
            let r = resolve(&train, Stage::Weak, None)?;
            let sweep: SweepConfig = serde_json::from_str(&std::fs::read_to_string(&grid_config)?)?;
            let work = work_dir.unwrap_or_else(|| {
                out_csv
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join("sweep_work")
            });
            ablation_sweep(&sweep, &r.plan, &r.sgd, &r.model, &work, &out_csv)?;
            println!("sweep written to {}", out_csv.display());
        }
        Cmd::Gradcheck => {
            let (outcomes, all_pass) = scribbleseg::gradcheck::run_full_suite(true)?;
            println!(
                "{} checks, worst rel err {:.3e}",
                outcomes.len(),
                outcomes
                    .iter()
                    .map(|o| o.max_rel_err)
                    .fold(0.0f64, f64::max)
            );
            if !all_pass {
                return Err(Error::numerics("gradient suite failed"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sad_core::attack::{
    attack_image, train_shape_classifier, AttackConfig, TinyClassifier, DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS, DEFAULT_OVERSHOOT,
};
use sad_core::codec::QualityList;
use sad_core::defense::{clean, DefenseConfig, SHIELD_DEFAULT_QUALITIES};
use sad_core::harness::{
    min_max_normalize, read_aggregate_csv, report_line, run_experiment_file, write_aggregate_csv,
    write_synthetic_corpus,
};
use sad_core::image::{load_image, save_image, FixationMap, SaliencyMap};
use sad_core::metrics::{evaluate_with, MetricReport, DEFAULT_EMD_DOWNSAMPLE};
use sad_core::saliency::{binarize_map, spectral_residual};

#[derive(Parser)]
#[command(name = "sad", version, about = "Saliency-aware adversarial image cleaning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefenseArg {
    Bitdepth,
    Jpeg,
    Shield,
    Sad,
}

#[derive(Clone, Copy, ValueEnum)]
enum SaliencyArg {
    Spectral,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    Fgsm,
    Deepfool,
}

#[derive(Subcommand)]
enum Command {
    /// Clean an image with one defense.
    Clean {
        #[arg(long, value_enum)]
        method: DefenseArg,
        #[arg(long, default_value_t = 3)]
        bits: u8,
        #[arg(long, default_value_t = 80)]
        quality: u8,
        /// Quality list for SHIELD/SAD, e.g. "50,70,90".
        #[arg(long)]
        qualities: Option<QualityList>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Saliency map for SAD (grayscale, same size as the image).
        #[arg(long, conflicts_with = "saliency")]
        saliency_map: Option<PathBuf>,
        /// Compute the SAD map instead of reading one.
        #[arg(long, value_enum)]
        saliency: Option<SaliencyArg>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Attack a square image with a trained classifier.
    Attack {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_enum)]
        method: AttackArg,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_OVERSHOOT)]
        overshoot: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// True class for FGSM; defaults to the model's prediction.
        #[arg(long)]
        label: Option<usize>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Spectral-residual saliency map of an image.
    Saliency {
        /// Binarize: values above the threshold become 255, the rest 0.
        #[arg(long)]
        threshold: Option<u8>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Compare a predicted map with ground truth; prints EMD,CC,NSS,KLD,SIM.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Fixation map: every nonzero pixel is a fixation.
        #[arg(long)]
        fixations: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EMD_DOWNSAMPLE)]
        emd_downsample: usize,
        /// Print the column names first.
        #[arg(long)]
        header: bool,
    },
    /// Train the shape classifier and write its weights.
    Train {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 600)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a TOML config.
    Run { config: PathBuf },
    /// Min-max normalize every metric column of an aggregate table.
    Normalize { input: PathBuf, output: PathBuf },
    /// Write a synthetic shape corpus (images/ and gt/).
    Synth {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Clean {
            method,
            bits,
            quality,
            qualities,
            seed,
            saliency_map,
            saliency,
            input,
            output,
        } => {
            let img = load_image(&input)?;
            let cfg = match method {
                DefenseArg::Bitdepth => DefenseConfig::BitDepth { bits },
                DefenseArg::Jpeg => DefenseConfig::Jpeg { quality },
                DefenseArg::Shield => DefenseConfig::Shield {
                    qualities: match qualities {
                        Some(q) => q,
                        None => QualityList::new(SHIELD_DEFAULT_QUALITIES.to_vec())?,
                    },
                    seed,
                },
                DefenseArg::Sad => DefenseConfig::Sad {
                    qualities: qualities.context("SAD needs --qualities")?,
                },
            };
            let map = match (saliency_map, saliency) {
                (Some(path), _) => Some(SaliencyMap::load(path)?),
                (None, Some(SaliencyArg::Spectral)) => Some(spectral_residual(&img)),
                (None, None) => None,
            };
            if matches!(method, DefenseArg::Sad) && map.is_none() {
                bail!("SAD needs --saliency-map or --saliency spectral");
            }
            let result = clean(&img, &cfg, map.as_ref())?;
            save_image(&result.image, &output)?;
        }
        Command::Attack {
            weights,
            method,
            epsilon,
            overshoot,
            max_iters,
            label,
            input,
            output,
        } => {
            let model = TinyClassifier::load(&weights)?;
            let img = load_image(&input)?;
            let cfg = match method {
                AttackArg::Fgsm => AttackConfig::Fgsm { epsilon },
                AttackArg::Deepfool => AttackConfig::DeepFool { overshoot, max_iters },
            };
            let adv = attack_image(&model, &img, &cfg, label)?;
            save_image(&adv, &output)?;
        }
        Command::Saliency {
            threshold,
            input,
            output,
        } => {
            let mut map = spectral_residual(&load_image(&input)?);
            if let Some(t) = threshold {
                map = binarize_map(&map, t);
            }
            map.save(&output)?;
        }
        Command::Evaluate {
            pred,
            gt,
            fixations,
            emd_downsample,
            header,
        } => {
            let pred = SaliencyMap::load(&pred)?;
            let gt = SaliencyMap::load(&gt)?;
            let fix = fixations.map(FixationMap::load).transpose()?;
            let report = evaluate_with(&pred, &gt, fix.as_ref(), emd_downsample)?;
            if header {
                println!("{}", MetricReport::COLUMNS.join(","));
            }
            println!("{}", report_line(&report));
        }
        Command::Train {
            seed,
            epochs,
            samples,
            side,
            out,
        } => {
            let (model, report) = train_shape_classifier(side, samples, epochs, seed)?;
            model.save(&out)?;
            let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
            eprintln!(
                "trained {} epochs: loss {last:.4}, train accuracy {:.3}",
                epochs, report.train_accuracy
            );
        }
        Command::Run { config } => {
            let out = run_experiment_file(&config)
                .with_context(|| format!("experiment {}", config.display()))?;
            for f in &out.files {
                println!("{}", f.display());
            }
        }
        Command::Normalize { input, output } => {
            let rows = read_aggregate_csv(&input)?;
            write_aggregate_csv(&output, &min_max_normalize(&rows)?)?;
        }
        Command::Synth {
            count,
            side,
            seed,
            dir,
        } => write_synthetic_corpus(&dir, count, side, seed)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

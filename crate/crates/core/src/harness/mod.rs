//! Experiment runner: baseline, attacked and cleaned conditions over a
//! corpus, evaluated with every metric and written as CSV tables.

mod config;
mod table;

pub use config::{
    resolve_path, AttackSpec, DefenseSpec, ExperimentConfig, ModelSpec, SaliencySpec,
};
pub use table::{
    aggregate, format_sig, min_max_normalize, read_aggregate_csv, report_line,
    write_aggregate_csv, write_per_image_csv, AggregateRow, PerImageRow,
};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{attack_image, classify_image, train_shape_classifier, AttackConfig, TinyClassifier};
use crate::defense::{clean, DefenseConfig};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, FixationMap, RasterImage, SaliencyMap};
use crate::metrics::{evaluate_with, MetricReport};
use crate::saliency::{get_saliency, resolve_template, SaliencySource};

pub const ORIGINAL_LABEL: &str = "Original";

pub const PER_IMAGE_CSV: &str = "per_image.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const NORMALIZED_CSV: &str = "aggregate_normalized.csv";
pub const MANIFEST: &str = "manifest.toml";

/// Lowercase alphanumeric words joined by `-`: `FGSM + SAD (50 70 90)`
/// becomes `fgsm-sad-50-70-90`.
pub fn slug(label: &str) -> String {
    label
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

/// Condition labels in table order: original, each attack, then each
/// (attack, defense) pair grouped by attack.
pub fn condition_labels(attacks: &[AttackConfig], defenses: &[DefenseConfig]) -> Vec<String> {
    let mut labels = vec![ORIGINAL_LABEL.to_string()];
    labels.extend(attacks.iter().map(|a| a.label().to_string()));
    for a in attacks {
        for d in defenses {
            labels.push(format!("{} + {}", a.label(), d.label()));
        }
    }
    labels
}

/// Sorted stems of the PNG/PPM/PGM files in `dir`.
pub fn corpus_ids(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "ppm" | "pgm")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push((stem.to_string(), path.clone()));
            }
        }
    }
    ids.sort();
    Ok(ids)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub per_image: Vec<PerImageRow>,
    pub aggregate: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    base: &'a Path,
    attacks: Vec<AttackConfig>,
    defenses: Vec<DefenseConfig>,
    model: Option<TinyClassifier>,
    eval_source: SaliencySource,
    defense_source: Option<SaliencySource>,
}

fn tagged(id: &str, condition: &str, e: Error) -> Error {
    Error::Experiment {
        image: id.to_string(),
        condition: condition.to_string(),
        source: Box::new(e),
    }
}

fn map_for(source: &SaliencySource, img: &RasterImage, id: &str, cond: &str) -> Result<SaliencyMap> {
    match source {
        SaliencySource::File { path_template } => {
            let path = resolve_template(path_template, id, &[("cond", cond)]);
            let map = SaliencyMap::load(&path)?;
            if map.dims() != img.dims() {
                return Err(Error::dims(img.dims(), map.dims()));
            }
            Ok(map)
        }
        other => get_saliency(img, other, id),
    }
}

impl Context<'_> {
    fn save(&self, img: &RasterImage, id: &str, label: &str) -> Result<()> {
        if !self.cfg.save_images {
            return Ok(());
        }
        let dir = self.out_dir().join("images").join(slug(label));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_image(img, dir.join(format!("{id}.png")))
    }

    fn out_dir(&self) -> PathBuf {
        resolve_path(self.base, &self.cfg.output_dir)
    }

    fn evaluate(
        &self,
        img: &RasterImage,
        id: &str,
        label: &str,
        gt: &SaliencyMap,
        fix: Option<&FixationMap>,
    ) -> Result<MetricReport> {
        self.save(img, id, label)?;
        let pred = map_for(&self.eval_source, img, id, &slug(label))?;
        evaluate_with(&pred, gt, fix, self.cfg.emd_downsample)
    }

    fn run_image(&self, id: &str, path: &Path) -> Result<Vec<PerImageRow>> {
        let original = load_image(path).map_err(|e| tagged(id, ORIGINAL_LABEL, e))?;
        let gt_path = resolve_template(
            &resolve_path(self.base, &self.cfg.gt_map_template).to_string_lossy(),
            id,
            &[],
        );
        let gt = SaliencyMap::load(&gt_path).map_err(|e| tagged(id, ORIGINAL_LABEL, e))?;
        if gt.dims() != original.dims() {
            return Err(tagged(id, ORIGINAL_LABEL, Error::dims(original.dims(), gt.dims())));
        }
        let fix = match &self.cfg.fixation_template {
            Some(t) => {
                let p = resolve_template(&resolve_path(self.base, t).to_string_lossy(), id, &[]);
                let f = FixationMap::load(&p).map_err(|e| tagged(id, ORIGINAL_LABEL, e))?;
                if f.dims() != original.dims() {
                    return Err(tagged(id, ORIGINAL_LABEL, Error::dims(original.dims(), f.dims())));
                }
                Some(f)
            }
            None => None,
        };

        let mut rows = Vec::new();
        let mut push = |label: String, report: MetricReport| {
            rows.push(PerImageRow {
                image_id: id.to_string(),
                label,
                report,
            })
        };
        let report = self
            .evaluate(&original, id, ORIGINAL_LABEL, &gt, fix.as_ref())
            .map_err(|e| tagged(id, ORIGINAL_LABEL, e))?;
        push(ORIGINAL_LABEL.to_string(), report);

        let mut attacked = Vec::with_capacity(self.attacks.len());
        if let Some(model) = &self.model {
            let label = classify_image(model, &original).map_err(|e| tagged(id, ORIGINAL_LABEL, e))?;
            for attack in &self.attacks {
                let name = attack.label();
                let adv = attack_image(model, &original, attack, Some(label))
                    .map_err(|e| tagged(id, name, e))?;
                let report = self
                    .evaluate(&adv, id, name, &gt, fix.as_ref())
                    .map_err(|e| tagged(id, name, e))?;
                push(name.to_string(), report);
                attacked.push(adv);
            }
        }

        for (attack, adv) in self.attacks.iter().zip(&attacked) {
            for defense in &self.defenses {
                let label = format!("{} + {}", attack.label(), defense.label());
                let run = || -> Result<MetricReport> {
                    let sal = match (defense, &self.defense_source) {
                        (DefenseConfig::Sad { .. }, Some(src)) => {
                            Some(map_for(src, adv, id, &slug(attack.label()))?)
                        }
                        _ => None,
                    };
                    let cleaned = clean(adv, defense, sal.as_ref())?;
                    self.evaluate(&cleaned.image, id, &label, &gt, fix.as_ref())
                };
                let report = run().map_err(|e| tagged(id, &label, e))?;
                push(label, report);
            }
        }
        Ok(rows)
    }
}

fn load_or_train_model(cfg: &ExperimentConfig, base: &Path, side: usize) -> Result<TinyClassifier> {
    match &cfg.model.weights {
        Some(w) => TinyClassifier::load(resolve_path(base, w)),
        None => Ok(train_shape_classifier(side, cfg.model.train_samples, cfg.model.train_epochs, cfg.seed)?.0),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: String,
    seed: u64,
    emd_downsample: usize,
    images: Vec<&'a str>,
    conditions: &'a [String],
    outputs: [&'static str; 3],
    config: &'a ExperimentConfig,
}

fn manifest(cfg: &ExperimentConfig, ids: &[(String, PathBuf)], labels: &[String]) -> String {
    let m = Manifest {
        generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        seed: cfg.seed,
        emd_downsample: cfg.emd_downsample,
        images: ids.iter().map(|(id, _)| id.as_str()).collect(),
        conditions: labels,
        outputs: [PER_IMAGE_CSV, AGGREGATE_CSV, NORMALIZED_CSV],
        config: cfg,
    };
    toml::to_string(&m).expect("manifest is always serializable")
}

/// Runs the full protocol. Relative paths in `cfg` resolve against `base`.
/// Output is byte-identical for identical inputs regardless of thread count.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let corpus = resolve_path(base, &cfg.corpus_dir);
    let ids = corpus_ids(&corpus)?;
    if ids.is_empty() {
        return Err(Error::Config(format!(
            "no PNG/PPM/PGM images in {}",
            corpus.display()
        )));
    }
    let attacks: Vec<AttackConfig> = cfg.attacks.iter().map(AttackSpec::to_config).collect();
    let defenses = cfg
        .defenses
        .iter()
        .map(|d| d.to_config(cfg.seed))
        .collect::<Result<Vec<_>>>()?;

    let model = if attacks.is_empty() {
        None
    } else {
        let first = load_image(&ids[0].1).map_err(|e| tagged(&ids[0].0, ORIGINAL_LABEL, e))?;
        if first.width() != first.height() {
            return Err(tagged(
                &ids[0].0,
                ORIGINAL_LABEL,
                Error::InvalidArgument("attacked corpus images must be square".into()),
            ));
        }
        Some(load_or_train_model(cfg, base, first.width())?)
    };

    let ctx = Context {
        cfg,
        base,
        attacks,
        defenses,
        model,
        eval_source: cfg.eval_saliency.to_source(base),
        defense_source: cfg.defense_saliency.as_ref().map(|s| s.to_source(base)),
    };
    let labels = condition_labels(&ctx.attacks, &ctx.defenses);

    let per_image: Vec<PerImageRow> = ids
        .par_iter()
        .map(|(id, path)| ctx.run_image(id, path))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let aggregate_rows: Vec<AggregateRow> = labels
        .iter()
        .map(|label| {
            let reports: Vec<MetricReport> = per_image
                .iter()
                .filter(|r| &r.label == label)
                .map(|r| r.report)
                .collect();
            aggregate(label, &reports)
        })
        .collect();

    let out_dir = ctx.out_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut files = vec![out_dir.join(PER_IMAGE_CSV), out_dir.join(AGGREGATE_CSV)];
    write_per_image_csv(&files[0], &per_image)?;
    write_aggregate_csv(&files[1], &aggregate_rows)?;
    if aggregate_rows.len() >= 2 {
        let path = out_dir.join(NORMALIZED_CSV);
        write_aggregate_csv(&path, &min_max_normalize(&aggregate_rows)?)?;
        files.push(path);
    }
    let manifest_path = out_dir.join(MANIFEST);
    std::fs::write(&manifest_path, manifest(cfg, &ids, &labels))
        .map_err(|e| Error::io(&manifest_path, e))?;
    files.push(manifest_path);

    Ok(ExperimentOutput {
        per_image,
        aggregate: aggregate_rows,
        files,
    })
}

/// Loads a config file and runs it with paths relative to the file.
pub fn run_experiment_file(path: impl AsRef<Path>) -> Result<ExperimentOutput> {
    let path = path.as_ref();
    let cfg = ExperimentConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_experiment(&cfg, base)
}

/// Writes `n` synthetic shape images with their masks as ground truth:
/// `images/{id}.png` and `gt/{id}.png` under `dir`.
pub fn write_synthetic_corpus(dir: &Path, n: usize, side: usize, seed: u64) -> Result<()> {
    let images = dir.join("images");
    let gt = dir.join("gt");
    for d in [&images, &gt] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for (i, s) in crate::attack::synthetic_shapes(n, side, seed).iter().enumerate() {
        let id = format!("shape{i:04}");
        save_image(&s.image, images.join(format!("{id}.png")))?;
        s.mask.save(gt.join(format!("{id}.png")))?;
    }
    Ok(())
}

//! Dataset-level evaluation: restoration quality against originals and the
//! filter-classification confusion matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{class_index, class_names, DatasetManifest, MANIFEST_FILE, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::filters::ORIGINAL;
use crate::image::{ColorSpace, RgbImage};
use crate::losses::{scalar, semantic_consistency};
use crate::metrics::{image_delta_e, psnr, ssim};
use crate::train::UnfilterModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// Also classify the originals (they are never scored).
    pub include_originals: bool,
    /// Restrict to these filters (plus originals when included).
    pub filters: Option<Vec<String>>,
    /// Use only the first N image ids (sorted).
    pub max_images: Option<usize>,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            include_originals: true,
            filters: None,
            max_images: None,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub ssim: f64,
    pub psnr: f64,
    pub delta_e: f64,
}

impl Scores {
    pub fn of(a: &RgbImage, b: &RgbImage) -> Result<Scores> {
        Ok(Scores {
            ssim: ssim(a, b)?,
            psnr: psnr(a, b)?,
            delta_e: image_delta_e(a, b)?,
        })
    }
}

/// One scored filtered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    pub filter: String,
    pub ssim: f64,
    pub psnr: f64,
    pub delta_e: f64,
    /// Mean squared backbone-feature distance to the original.
    pub feat_dist: f64,
    /// The filtered input scored against the original.
    pub baseline: Scores,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub count: usize,
    pub ssim: f64,
    pub psnr: f64,
    pub delta_e: f64,
    pub feat_dist: f64,
    pub baseline: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub image_id: String,
    pub filter: String,
    pub reason: String,
}

/// Evaluation output. `confusion[true][predicted]` counts classifications
/// over the class order in `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_image: Vec<ImageRow>,
    /// Means over `per_image`; null when nothing was scored.
    pub aggregates: Option<Aggregates>,
    /// `trace(confusion) / sum(confusion)`; null without predictions.
    pub accuracy: Option<f64>,
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub skipped: Vec<SkippedItem>,
    pub config_echo: serde_json::Value,
}

impl MetricsReport {
    pub fn empty(config_echo: serde_json::Value) -> MetricsReport {
        MetricsReport {
            per_image: Vec::new(),
            aggregates: None,
            accuracy: None,
            classes: class_names().iter().map(|s| s.to_string()).collect(),
            confusion: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
            skipped: Vec::new(),
            config_echo,
        }
    }

    pub fn record_prediction(&mut self, truth: usize, predicted: usize) {
        self.confusion[truth][predicted] += 1;
    }

    /// Recomputes `aggregates` and `accuracy` from rows and confusion.
    pub fn finalize(&mut self) {
        let n = self.per_image.len();
        self.aggregates = (n > 0).then(|| {
            let mean = |f: &dyn Fn(&ImageRow) -> f64| self.per_image.iter().map(f).sum::<f64>() / n as f64;
            Aggregates {
                count: n,
                ssim: mean(&|r| r.ssim),
                psnr: mean(&|r| r.psnr),
                delta_e: mean(&|r| r.delta_e),
                feat_dist: mean(&|r| r.feat_dist),
                baseline: Scores {
                    ssim: mean(&|r| r.baseline.ssim),
                    psnr: mean(&|r| r.baseline.psnr),
                    delta_e: mean(&|r| r.baseline.delta_e),
                },
            }
        });
        let total: u64 = self.confusion.iter().flatten().sum();
        let trace: u64 = (0..NUM_CLASSES).map(|i| self.confusion[i][i]).sum();
        self.accuracy = (total > 0).then(|| trace as f64 / total as f64);
    }

    pub fn class_counts(&self) -> Vec<u64> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Text confusion matrix: rows are true classes, columns predictions,
    /// restricted to classes that occur in either role.
    pub fn confusion_table(&self) -> String {
        let active: Vec<usize> = (0..NUM_CLASSES)
            .filter(|&i| (0..NUM_CLASSES).any(|j| self.confusion[i][j] + self.confusion[j][i] > 0))
            .collect();
        let width = active
            .iter()
            .map(|&i| self.classes[i].len())
            .max()
            .unwrap_or(4)
            .max(6);
        let mut s = String::new();
        let _ = write!(s, "{:>width$}", "true\\pred");
        for &j in &active {
            let _ = write!(s, " {:>width$}", self.classes[j]);
        }
        s.push('\n');
        for &i in &active {
            let _ = write!(s, "{:>width$}", self.classes[i]);
            for &j in &active {
                let _ = write!(s, " {:>width$}", self.confusion[i][j]);
            }
            s.push('\n');
        }
        s
    }
}

struct Item {
    image_id: String,
    filter: String,
    input: RgbImage,
    original: Option<RgbImage>,
}

/// Unfilters every selected image of the dataset at `dataset_dir` and
/// scores it against its original. A directory without a manifest yields an
/// empty report.
pub fn evaluate_dir(model: &UnfilterModel, dataset_dir: &Path, opts: &EvalOptions) -> Result<MetricsReport> {
    let echo = serde_json::json!({
        "dataset_dir": dataset_dir,
        "options": opts,
        "model": model.model_config(),
    });
    let mut report = MetricsReport::empty(echo);
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if !dataset_dir.join(MANIFEST_FILE).exists() {
        if dataset_dir.is_dir() {
            report.finalize();
            return Ok(report);
        }
        return Err(Error::Dataset(format!("{} is not a directory", dataset_dir.display())));
    }
    let manifest = DatasetManifest::load(dataset_dir)?;
    let mut ids: Vec<String> = manifest.image_ids().into_iter().map(String::from).collect();
    ids.sort();
    ids.dedup();
    if let Some(n) = opts.max_images {
        ids.truncate(n);
    }
    let mut filters: Vec<String> = match &opts.filters {
        Some(f) => f.iter().filter(|f| f.as_str() != ORIGINAL).cloned().collect(),
        None => manifest.filters.clone(),
    };
    for f in &filters {
        if class_index(f).is_none() {
            return Err(Error::UnknownFilter {
                name: f.clone(),
                valid: class_names().iter().map(|s| s.to_string()).collect(),
            });
        }
    }
    if opts.include_originals {
        filters.push(ORIGINAL.to_string());
    }

    let size = model.model_config().image_size;
    let load = |id: &str, filter: &str| -> std::result::Result<RgbImage, String> {
        let entry = manifest
            .entry(id, filter)
            .ok_or_else(|| format!("no `{filter}` entry in the manifest"))?;
        let img = RgbImage::load(dataset_dir.join(&entry.relative_path)).map_err(|e| e.to_string())?;
        if img.width() == size && img.height() == size {
            Ok(img)
        } else {
            img.resize(size, size).map_err(|e| e.to_string())
        }
    };

    let mut pending: Vec<Item> = Vec::new();
    for id in &ids {
        let original = load(id, ORIGINAL);
        for f in &filters {
            if manifest.entry(id, f).is_none() {
                continue;
            }
            let is_original = f == ORIGINAL;
            let original = match (&original, is_original) {
                (Ok(o), _) => Some(o.clone()),
                (Err(_), true) => None,
                (Err(reason), false) => {
                    report.skipped.push(SkippedItem {
                        image_id: id.clone(),
                        filter: f.clone(),
                        reason: format!("original unavailable: {reason}"),
                    });
                    continue;
                }
            };
            let input = if is_original {
                match &original {
                    Some(o) => o.clone(),
                    None => continue,
                }
            } else {
                match load(id, f) {
                    Ok(img) => img,
                    Err(reason) => {
                        report.skipped.push(SkippedItem {
                            image_id: id.clone(),
                            filter: f.clone(),
                            reason,
                        });
                        continue;
                    }
                }
            };
            pending.push(Item {
                image_id: id.clone(),
                filter: f.clone(),
                input,
                original,
            });
            if pending.len() == opts.batch_size {
                score_batch(model, &mut pending, &mut report)?;
            }
        }
    }
    score_batch(model, &mut pending, &mut report)?;
    report.finalize();
    Ok(report)
}

fn score_batch(model: &UnfilterModel, items: &mut Vec<Item>, report: &mut MetricsReport) -> Result<()> {
    if items.is_empty() {
        return Ok(());
    }
    let inputs: Vec<RgbImage> = items.iter().map(|i| i.input.clone()).collect();
    let outputs = model.unfilter_batch(&inputs)?;
    for (item, (output, predicted)) in items.drain(..).zip(outputs) {
        let truth = class_index(&item.filter).expect("validated filter");
        report.record_prediction(truth, class_index(&predicted).expect("known class"));
        if item.filter == ORIGINAL {
            continue;
        }
        let original = item.original.expect("filtered items carry their original");
        let scores = Scores::of(&output, &original)?;
        let feat_dist = feature_distance(model, &output, &original)?;
        report.per_image.push(ImageRow {
            image_id: item.image_id,
            filter: item.filter,
            ssim: scores.ssim,
            psnr: scores.psnr,
            delta_e: scores.delta_e,
            feat_dist,
            baseline: Scores::of(&item.input, &original)?,
            predicted,
        });
    }
    Ok(())
}

/// Mean squared distance between backbone features of two images, summed
/// over the semantic layers.
pub fn feature_distance(model: &UnfilterModel, a: &RgbImage, b: &RgbImage) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let ta = a.to_space(ColorSpace::SrgbUnit).to_tensor().unsqueeze(0);
    let tb = b.to_space(ColorSpace::SrgbUnit).to_tensor().unsqueeze(0);
    let d = tch::no_grad(|| semantic_consistency(model.backbone(), &ta, &tb))?;
    Ok(scalar(&d))
}

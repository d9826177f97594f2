//! Adversarial training loop and checkpointed inference.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::checkpoint::{checkpoint_path, Checkpoint, CheckpointMeta, RngState};
use crate::dataset::{class_index, class_names, DatasetManifest};
use crate::error::{Error, Result};
use crate::filters::{mix_seed, ORIGINAL};
use crate::image::{ColorSpace, RgbImage};
use crate::losses::{
    classification_loss, critic_loss, crop_batch, generator_adv_loss, gradient_penalty, scalar,
    semantic_consistency, texture_idmrf, total_loss, AdversarialForm, IdMrfParams,
    LossBreakdown, LossComponents, LossWeights,
};
use crate::model::{argmax_lowest, Backbone, Discriminators, Generator, ModelConfig};
use crate::optim::{Adam, AdamConfig};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_ECHO_FILE: &str = "train_config.json";

/// Training hyper-parameters and paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub flip_prob: f64,
    pub seed: u64,
    /// Write `ckpt_<step>.bin` every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Use only the first N image ids (sorted).
    pub max_images: Option<usize>,
    /// Restrict input filters to this list; originals are always included.
    pub filters: Option<Vec<String>>,
    pub adversarial: AdversarialForm,
    pub loss: LossWeights,
    pub idmrf: IdMrfParams,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 120_000,
            batch_size: 8,
            beta1: 0.5,
            beta2: 0.9,
            lr_gen: 2e-4,
            lr_disc: 1e-3,
            flip_prob: 0.5,
            seed: 0,
            checkpoint_every: 5_000,
            dataset_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("runs"),
            max_images: None,
            filters: None,
            adversarial: AdversarialForm::WganGp,
            loss: LossWeights::default(),
            idmrf: IdMrfParams::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Single-machine CPU profile: the reduced model, 2,000 steps, same
    /// optimizer settings.
    pub fn desk() -> Self {
        TrainConfig {
            steps: 2_000,
            checkpoint_every: 500,
            model: ModelConfig::desk(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob)));
        }
        self.gen_optimizer().validate("generator")?;
        self.disc_optimizer().validate("discriminator")?;
        self.loss.validate()?;
        if !(self.idmrf.bandwidth > 0.0 && self.idmrf.eps > 0.0) {
            return Err(Error::Config("idmrf bandwidth and eps must be positive".into()));
        }
        if let Some(fs) = &self.filters {
            for f in fs {
                if class_index(f).is_none() {
                    return Err(Error::UnknownFilter {
                        name: f.clone(),
                        valid: class_names().iter().map(|s| s.to_string()).collect(),
                    });
                }
            }
        }
        self.model.validate()
    }

    pub fn gen_optimizer(&self) -> AdamConfig {
        AdamConfig::new(self.lr_gen, self.beta1, self.beta2)
    }

    pub fn disc_optimizer(&self) -> AdamConfig {
        AdamConfig::new(self.lr_disc, self.beta1, self.beta2)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub tex: f64,
    pub sem: f64,
    /// Global critic objective.
    pub glo: f64,
    /// Local critic objective.
    pub loc: f64,
    pub gp: f64,
    pub cls: f64,
    pub total: f64,
    pub lr_gen: f64,
    pub lr_disc: f64,
}

/// A training sample: a filtered (or original) input and its original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairKey {
    pub image_id: String,
    pub filter: String,
}

/// Tensors of one batch, signed range, plus what produced them.
#[derive(Debug)]
pub struct Batch {
    pub input: Tensor,
    pub target: Tensor,
    pub labels: Tensor,
    pub keys: Vec<PairKey>,
    pub flipped: Vec<bool>,
}

const CACHE_BUDGET_FLOATS: usize = 256 << 20;

/// Paired images from a manifest, resized to the working resolution.
#[derive(Debug)]
pub struct PairSource {
    root: PathBuf,
    manifest: DatasetManifest,
    pairs: Vec<PairKey>,
    size: usize,
    cache: HashMap<String, RgbImage>,
    cached_floats: usize,
}

impl PairSource {
    pub fn open(config: &TrainConfig) -> Result<PairSource> {
        let manifest = DatasetManifest::load(&config.dataset_dir)?;
        manifest.validate()?;
        let mut ids: Vec<String> = manifest.image_ids().into_iter().map(String::from).collect();
        ids.sort();
        if let Some(n) = config.max_images {
            ids.truncate(n);
        }
        let mut filters: Vec<String> = match &config.filters {
            Some(f) => f.iter().filter(|f| f.as_str() != ORIGINAL).cloned().collect(),
            None => manifest.filters.clone(),
        };
        filters.push(ORIGINAL.to_string());
        let mut pairs = Vec::new();
        for id in &ids {
            for f in &filters {
                if manifest.entry(id, f).is_none() {
                    return Err(Error::Dataset(format!("image `{id}` has no `{f}` variant")));
                }
                pairs.push(PairKey {
                    image_id: id.clone(),
                    filter: f.clone(),
                });
            }
        }
        if ids.len() * filters.len() < config.batch_size || ids.is_empty() {
            return Err(Error::Dataset(format!(
                "{} pairs available but batch_size is {}",
                pairs.len(),
                config.batch_size
            )));
        }
        Ok(PairSource {
            root: config.dataset_dir.clone(),
            manifest,
            pairs,
            size: config.model.image_size,
            cache: HashMap::new(),
            cached_floats: 0,
        })
    }

    pub fn pairs(&self) -> &[PairKey] {
        &self.pairs
    }

    /// The image for `(image_id, filter)` in `srgb_unit` at working resolution.
    pub fn image(&mut self, image_id: &str, filter: &str) -> Result<RgbImage> {
        let entry = self
            .manifest
            .entry(image_id, filter)
            .ok_or_else(|| Error::Dataset(format!("no `{filter}` variant of `{image_id}`")))?;
        if let Some(img) = self.cache.get(&entry.relative_path) {
            return Ok(img.clone());
        }
        let mut img = RgbImage::load(self.root.join(&entry.relative_path))?;
        if img.width() != self.size || img.height() != self.size {
            img = img.resize(self.size, self.size)?;
        }
        let floats = img.data().len();
        if self.cached_floats + floats <= CACHE_BUDGET_FLOATS {
            self.cached_floats += floats;
            self.cache.insert(entry.relative_path.clone(), img.clone());
        }
        Ok(img)
    }
}

/// Shuffle-and-cycle sampler over pair indices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Sampler {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Sampler { order, cursor: 0 }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Owns the networks, optimizers, data and RNG of one training run.
pub struct Trainer {
    config: TrainConfig,
    generator: Generator,
    discs: Discriminators,
    backbone: Backbone,
    gen_opt: Adam,
    disc_opt: Adam,
    data: PairSource,
    rng: ChaCha8Rng,
    sampler: Sampler,
    step: u64,
    last_checkpoint: Option<PathBuf>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer").field("step", &self.step).finish_non_exhaustive()
    }
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Trainer> {
        config.validate()?;
        let data = PairSource::open(&config)?;
        let generator = Generator::new(&config.model, config.seed)?;
        let discs = Discriminators::new(&config.model, config.seed)?;
        let backbone = Backbone::new(&config.model.backbone)?;
        let gen_opt = Adam::new(generator.var_store(), config.gen_optimizer());
        let disc_opt = Adam::new(discs.var_store(), config.disc_optimizer());
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 3));
        let sampler = Sampler::new(data.pairs().len(), &mut rng);
        Ok(Trainer {
            config,
            generator,
            discs,
            backbone,
            gen_opt,
            disc_opt,
            data,
            rng,
            sampler,
            step: 0,
            last_checkpoint: None,
        })
    }

    /// Rebuilds a trainer from a training checkpoint. `steps` overrides the
    /// target step count.
    pub fn resume(path: &Path, steps: Option<u64>) -> Result<Trainer> {
        let ckpt = Checkpoint::load(path)?;
        let mut config = ckpt
            .meta
            .train
            .clone()
            .ok_or_else(|| Error::Checkpoint(format!("{} holds no training state", path.display())))?;
        if let Some(s) = steps {
            config.steps = s;
        }
        let mut t = Trainer::new(config)?;
        ckpt.load_var_store("generator", t.generator.var_store_mut())?;
        ckpt.load_var_store("discriminator", t.discs.var_store_mut())?;
        ckpt.load_var_store("backbone", t.backbone.var_store_mut())?;
        load_adam(&ckpt, "adam_gen", &mut t.gen_opt)?;
        load_adam(&ckpt, "adam_disc", &mut t.disc_opt)?;
        let rng = ckpt
            .meta
            .rng
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("missing rng state".into()))?;
        t.rng = rng.restore()?;
        let sampler = ckpt
            .get("sampler/order")
            .zip(ckpt.get("sampler/cursor"))
            .ok_or_else(|| Error::Checkpoint("missing sampler state".into()))?;
        let order: Vec<f32> = Vec::try_from(sampler.0.flatten(0, -1))?;
        t.sampler = Sampler {
            order: order.iter().map(|v| *v as usize).collect(),
            cursor: sampler.1.double_value(&[0]) as usize,
        };
        if t.sampler.order.len() != t.data.pairs().len() || t.sampler.cursor > t.sampler.order.len() {
            return Err(Error::Checkpoint("sampler state does not match the dataset".into()));
        }
        t.step = ckpt.meta.step;
        t.last_checkpoint = Some(path.to_path_buf());
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminators(&self) -> &Discriminators {
        &self.discs
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    /// Draws the next batch, applying the same flip to input and target.
    pub fn sample_batch(&mut self) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(self.config.batch_size);
        let mut targets = Vec::with_capacity(self.config.batch_size);
        let mut labels = Vec::with_capacity(self.config.batch_size);
        let mut keys = Vec::with_capacity(self.config.batch_size);
        let mut flipped = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let key = self.data.pairs()[self.sampler.next(&mut self.rng)].clone();
            let mut x = self.data.image(&key.image_id, &key.filter)?;
            let mut y = self.data.image(&key.image_id, ORIGINAL)?;
            let flip = self.rng.random::<f64>() < self.config.flip_prob;
            if flip {
                x = x.flip_horizontal();
                y = y.flip_horizontal();
            }
            inputs.push(x.to_space(ColorSpace::GeneratorSigned));
            targets.push(y.to_space(ColorSpace::GeneratorSigned));
            labels.push(class_index(&key.filter).expect("validated filter") as i64);
            keys.push(key);
            flipped.push(flip);
        }
        Ok(Batch {
            input: RgbImage::batch_to_tensor(&inputs)?,
            target: RgbImage::batch_to_tensor(&targets)?,
            labels: Tensor::from_slice(&labels),
            keys,
            flipped,
        })
    }

    /// One critic update on both discriminators followed by one generator
    /// update.
    pub fn train_step(&mut self) -> Result<LogRecord> {
        let step = self.step + 1;
        let batch = self.sample_batch()?;
        let n = batch.input.size()[0];
        let crop = self.config.model.local_crop as i64;
        let span = self.config.model.image_size as i64 - crop;
        let origins: Vec<(i64, i64)> = (0..n)
            .map(|_| (self.rng.random_range(0..=span), self.rng.random_range(0..=span)))
            .collect();
        let alpha: Vec<f32> = (0..n).map(|_| self.rng.random::<f32>()).collect();
        let alpha = Tensor::from_slice(&alpha);
        let w = self.config.loss;
        let form = self.config.adversarial;

        let out = self.generator.forward(&self.backbone, &batch.input)?;
        let fake = out.image;
        let real_crop = crop_batch(&batch.target, &origins, crop)?;
        let fake_crop = crop_batch(&fake, &origins, crop)?;

        // critic update
        let fake_d = fake.detach();
        let fake_crop_d = fake_crop.detach();
        let disc_glo = critic_loss(
            &self.discs.discriminate_global(&batch.target)?,
            &self.discs.discriminate_global(&fake_d)?,
            form,
        );
        let disc_loc = critic_loss(
            &self.discs.discriminate_local(&real_crop)?,
            &self.discs.discriminate_local(&fake_crop_d)?,
            form,
        );
        let discs = &self.discs;
        let gp = gradient_penalty(|x| discs.discriminate_global(x), &batch.target, &fake_d, &alpha)?
            + gradient_penalty(|x| discs.discriminate_local(x), &real_crop, &fake_crop_d, &alpha)?;
        let d_total = &disc_glo + &disc_loc + &gp * w.gp;
        self.check_finite(step, &[("glo", &disc_glo), ("loc", &disc_loc), ("gp", &gp)])?;
        self.disc_opt.zero_grad();
        d_total.backward();
        self.disc_opt.step();

        // generator update against the refreshed critics
        let fake_unit = (&fake + 1.0) * 0.5;
        let target_unit = (&batch.target + 1.0) * 0.5;
        let tex = texture_idmrf(&self.backbone, &fake_unit, &target_unit, &self.config.idmrf)?;
        let sem = semantic_consistency(&self.backbone, &fake_unit, &target_unit)?;
        let gen_adv = generator_adv_loss(&self.discs.discriminate_global(&fake)?)
            + generator_adv_loss(&self.discs.discriminate_local(&fake_crop)?);
        let cls = classification_loss(&out.logits, &batch.labels)?;
        self.check_finite(step, &[("tex", &tex), ("sem", &sem), ("adv", &gen_adv), ("cls", &cls)])?;
        let g_total = &tex * w.tex + &sem * w.sem + (&gen_adv + &cls * w.cls) * w.adv;
        self.gen_opt.zero_grad();
        g_total.backward();
        self.gen_opt.step();

        let LossBreakdown {
            tex,
            sem,
            glo,
            loc,
            gp,
            cls,
            total,
            ..
        } = total_loss(
            &LossComponents {
                tex: scalar(&tex),
                sem: scalar(&sem),
                glo: scalar(&disc_glo),
                loc: scalar(&disc_loc),
                gp: scalar(&gp),
                cls: scalar(&cls),
            },
            &w,
        )
        .map_err(|e| self.with_step(step, e))?;
        self.step = step;
        Ok(LogRecord {
            step,
            tex,
            sem,
            glo,
            loc,
            gp,
            cls,
            total,
            lr_gen: self.config.lr_gen,
            lr_disc: self.config.lr_disc,
        })
    }

    fn check_finite(&self, step: u64, terms: &[(&'static str, &Tensor)]) -> Result<()> {
        for (name, t) in terms {
            if !scalar(t).is_finite() {
                return Err(Error::Divergence {
                    step,
                    component: name,
                    last_checkpoint: self.last_checkpoint.clone(),
                });
            }
        }
        Ok(())
    }

    fn with_step(&self, step: u64, e: Error) -> Error {
        match e {
            Error::Divergence { component, .. } => Error::Divergence {
                step,
                component,
                last_checkpoint: self.last_checkpoint.clone(),
            },
            other => other,
        }
    }

    /// Full training state at the current step.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(CheckpointMeta {
            step: self.step,
            seed: self.config.seed,
            model: self.config.model.clone(),
            train: Some(self.config.clone()),
            rng: Some(RngState::capture(&self.rng)),
        });
        c.insert_var_store("generator", self.generator.var_store());
        c.insert_var_store("discriminator", self.discs.var_store());
        c.insert_var_store("backbone", self.backbone.var_store());
        store_adam(&mut c, "adam_gen", &self.gen_opt);
        store_adam(&mut c, "adam_disc", &self.disc_opt);
        let order: Vec<f32> = self.sampler.order.iter().map(|v| *v as f32).collect();
        c.insert("sampler/order".into(), &Tensor::from_slice(&order));
        c.insert("sampler/cursor".into(), &Tensor::from_slice(&[self.sampler.cursor as f32]));
        c
    }

    pub fn save_checkpoint(&mut self) -> Result<PathBuf> {
        let path = checkpoint_path(&self.config.output_dir, self.step);
        self.checkpoint().save(&path)?;
        self.last_checkpoint = Some(path.clone());
        Ok(path)
    }

    /// Trains until `config.steps`, logging every step and checkpointing on
    /// schedule and at the end. Returns the path of the final checkpoint.
    pub fn run(&mut self, mut on_step: impl FnMut(&LogRecord)) -> Result<PathBuf> {
        let out = self.config.output_dir.clone();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let echo = out.join(CONFIG_ECHO_FILE);
        fs::write(&echo, serde_json::to_vec_pretty(&self.config)?).map_err(|e| Error::io(&echo, e))?;
        let log_path = out.join(LOG_FILE);
        let file = if self.step == 0 {
            File::create(&log_path)
        } else {
            OpenOptions::new().create(true).append(true).open(&log_path)
        }
        .map_err(|e| Error::io(&log_path, e))?;
        let mut log = BufWriter::new(file);
        if self.step == 0 && self.config.checkpoint_every > 0 {
            self.save_checkpoint()?;
        }
        while self.step < self.config.steps {
            let rec = self.train_step()?;
            serde_json::to_writer(&mut log, &rec)?;
            writeln!(log).map_err(|e| Error::io(&log_path, e))?;
            on_step(&rec);
            let every = self.config.checkpoint_every;
            if every > 0 && self.step % every == 0 && self.step < self.config.steps {
                log.flush().map_err(|e| Error::io(&log_path, e))?;
                self.save_checkpoint()?;
            }
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        self.save_checkpoint()
    }
}

fn store_adam(c: &mut Checkpoint, prefix: &str, opt: &Adam) {
    for (name, m, v) in opt.state() {
        c.insert(format!("{prefix}/m/{name}"), m);
        c.insert(format!("{prefix}/v/{name}"), v);
    }
    c.insert(format!("{prefix}/step"), &Tensor::from_slice(&[opt.steps_taken() as f32]));
}

fn load_adam(c: &Checkpoint, prefix: &str, opt: &mut Adam) -> Result<()> {
    let step = c
        .get(&format!("{prefix}/step"))
        .ok_or_else(|| Error::Checkpoint(format!("missing `{prefix}/step`")))?
        .double_value(&[0]) as u64;
    opt.load_state(step, |name| {
        Some((
            c.get(&format!("{prefix}/m/{name}"))?.shallow_clone(),
            c.get(&format!("{prefix}/v/{name}"))?.shallow_clone(),
        ))
    })
}

/// Trains from scratch per `config`, returning the final checkpoint path.
pub fn train(config: TrainConfig) -> Result<PathBuf> {
    Trainer::new(config)?.run(|_| {})
}

/// Inference bundle restored from a checkpoint.
#[derive(Debug)]
pub struct UnfilterModel {
    generator: Generator,
    backbone: Backbone,
    model: ModelConfig,
}

impl UnfilterModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<UnfilterModel> {
        let model = ckpt.meta.model.clone();
        let mut generator = Generator::new(&model, ckpt.meta.seed)?;
        let mut backbone = Backbone::new(&model.backbone)?;
        ckpt.load_var_store("generator", generator.var_store_mut())?;
        ckpt.load_var_store("backbone", backbone.var_store_mut())?;
        Ok(UnfilterModel {
            generator,
            backbone,
            model,
        })
    }

    pub fn load(path: &Path) -> Result<UnfilterModel> {
        UnfilterModel::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    /// Unfilters a batch. Images are resized to the network resolution;
    /// outputs are `srgb_unit` at that resolution.
    pub fn unfilter_batch(&self, images: &[RgbImage]) -> Result<Vec<(RgbImage, String)>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let s = self.model.image_size;
        let inputs: Vec<RgbImage> = images
            .iter()
            .map(|img| {
                let img = if img.width() != s || img.height() != s {
                    img.resize(s, s)?
                } else {
                    img.clone()
                };
                Ok(img.to_space(ColorSpace::GeneratorSigned))
            })
            .collect::<Result<_>>()?;
        let x = RgbImage::batch_to_tensor(&inputs)?;
        let out = tch::no_grad(|| self.generator.forward(&self.backbone, &x))?;
        let names = class_names();
        let preds = argmax_lowest(&out.logits);
        (0..images.len())
            .map(|i| {
                let img = RgbImage::from_tensor(&out.image.get(i as i64), ColorSpace::GeneratorSigned)?
                    .to_space(ColorSpace::SrgbUnit);
                Ok((img, names[preds[i]].to_string()))
            })
            .collect()
    }

    pub fn unfilter(&self, img: &RgbImage) -> Result<(RgbImage, String)> {
        Ok(self.unfilter_batch(std::slice::from_ref(img))?.remove(0))
    }
}

/// Loads `ckpt` and unfilters one image.
pub fn unfilter(ckpt: &Checkpoint, img: &RgbImage) -> Result<(RgbImage, String)> {
    UnfilterModel::from_checkpoint(ckpt)?.unfilter(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_gen, 2e-4);
        assert_eq!(c.lr_disc, 1e-3);
        assert_eq!((c.beta1, c.beta2), (0.5, 0.9));
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.steps, 120_000);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["lr_gen"], 2e-4);
        assert_eq!(json["batch_size"], 8);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = TrainConfig::desk();
        c.flip_prob = 1.5;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk();
        c.lr_disc = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk();
        c.filters = Some(vec!["Gotham".into()]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn sampler_visits_every_index_per_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = Sampler::new(7, &mut rng);
        for _ in 0..3 {
            let mut seen: Vec<usize> = (0..7).map(|_| s.next(&mut rng)).collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }
}

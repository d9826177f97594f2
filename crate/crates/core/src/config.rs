//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! profile = desk            # desk | full, applied before any other key
//! dataset_dir = data/synth
//! output_dir = runs/desk
//! steps = 2000
//! filters = Lo-Fi, Toaster
//! loss.tex = 1e-3
//! generator.channels = 32, 64, 128, 128, 128, 128
//! ```
//!
//! Keys mirror the field names of [`TrainConfig`]; nested fields use dotted
//! paths. `UNFILTER_SEED` in the environment overrides `seed`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::AdversarialForm;
use crate::model::LayerTag;
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "UNFILTER_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected desk or full)"))),
        }
    }
}

impl Profile {
    pub fn train_config(self) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(),
            Profile::Full => TrainConfig::default(),
        }
    }
}

/// Parses `key = value` lines into `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Builds a training configuration from config text, starting from the
/// profile given by the `profile` key (desk when absent).
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let pairs = parse_pairs(text)?;
    let profile = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "profile")
        .map(|(_, v)| v.parse())
        .transpose()?
        .unwrap_or(Profile::Desk);
    let mut c = profile.train_config();
    for (k, v) in &pairs {
        if k != "profile" {
            set(&mut c, k, v)?;
        }
    }
    Ok(c)
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_train_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Applies `UNFILTER_SEED` when set.
pub fn apply_env(c: &mut TrainConfig) -> Result<()> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        c.seed = parse_num(SEED_ENV, &v)?;
    }
    Ok(())
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

/// Sets one dotted key.
pub fn set(c: &mut TrainConfig, key: &str, v: &str) -> Result<()> {
    let m = &mut c.model;
    match key {
        "steps" => c.steps = parse_num(key, v)?,
        "batch_size" => c.batch_size = parse_num(key, v)?,
        "beta1" => c.beta1 = parse_num(key, v)?,
        "beta2" => c.beta2 = parse_num(key, v)?,
        "lr_gen" => c.lr_gen = parse_num(key, v)?,
        "lr_disc" => c.lr_disc = parse_num(key, v)?,
        "flip_prob" => c.flip_prob = parse_num(key, v)?,
        "seed" => c.seed = parse_num(key, v)?,
        "checkpoint_every" => c.checkpoint_every = parse_num(key, v)?,
        "dataset_dir" => c.dataset_dir = PathBuf::from(v),
        "output_dir" => c.output_dir = PathBuf::from(v),
        "max_images" => c.max_images = optional(key, v)?,
        "filters" => {
            c.filters = if v.is_empty() || v == "all" {
                None
            } else {
                Some(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            }
        }
        "adversarial" => {
            c.adversarial = match v {
                "wgan_gp" => AdversarialForm::WganGp,
                "hinge" => AdversarialForm::Hinge,
                _ => return Err(Error::Config(format!("`{key}`: expected wgan_gp or hinge, got `{v}`"))),
            }
        }
        "loss.tex" => c.loss.tex = parse_num(key, v)?,
        "loss.sem" => c.loss.sem = parse_num(key, v)?,
        "loss.adv" => c.loss.adv = parse_num(key, v)?,
        "loss.gp" => c.loss.gp = parse_num(key, v)?,
        "loss.cls" => c.loss.cls = parse_num(key, v)?,
        "idmrf.bandwidth" => c.idmrf.bandwidth = parse_num(key, v)?,
        "idmrf.eps" => c.idmrf.eps = parse_num(key, v)?,
        "image_size" => m.image_size = parse_num(key, v)?,
        "local_crop" => m.local_crop = parse_num(key, v)?,
        "generator.channels" => {
            m.generator.channels = parse_list(key, v)?;
            m.generator.num_levels = m.generator.channels.len();
        }
        "generator.downsample" => {
            m.generator.downsample = v
                .split(',')
                .map(str::trim)
                .map(|s| parse_bool(key, s))
                .collect::<Result<_>>()?
        }
        "generator.style_hidden" => m.generator.style_hidden = parse_num(key, v)?,
        "generator.style_layers" => m.generator.style_layers = parse_num(key, v)?,
        "generator.classifier_hidden" => m.generator.classifier_hidden = parse_num(key, v)?,
        "generator.adain_eps" => m.generator.adain_eps = parse_num(key, v)?,
        "discriminator.base_channels" => m.discriminator.base_channels = parse_num(key, v)?,
        "discriminator.strided_layers" => m.discriminator.strided_layers = parse_num(key, v)?,
        "backbone.weights" => m.backbone.weights = optional(key, v)?,
        "backbone.seed" => m.backbone.seed = parse_num(key, v)?,
        "backbone.style_layer" => m.backbone.style_layer = v.parse::<LayerTag>()?,
        "backbone.texture_layer" => m.backbone.texture_layer = v.parse::<LayerTag>()?,
        "backbone.semantic_layers" => m.backbone.semantic_layers = parse_list(key, v)?,
        _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Renders every effective value in the same format [`parse_train_config`]
/// reads, so the echo reproduces the run.
pub fn render_train_config(c: &TrainConfig) -> String {
    let m = &c.model;
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    line("steps", c.steps.to_string());
    line("batch_size", c.batch_size.to_string());
    line("beta1", c.beta1.to_string());
    line("beta2", c.beta2.to_string());
    line("lr_gen", c.lr_gen.to_string());
    line("lr_disc", c.lr_disc.to_string());
    line("flip_prob", c.flip_prob.to_string());
    line("seed", c.seed.to_string());
    line("checkpoint_every", c.checkpoint_every.to_string());
    line("dataset_dir", c.dataset_dir.display().to_string());
    line("output_dir", c.output_dir.display().to_string());
    line("max_images", c.max_images.map_or("none".into(), |n| n.to_string()));
    line("filters", c.filters.as_ref().map_or("all".into(), |f| f.join(", ")));
    line(
        "adversarial",
        match c.adversarial {
            AdversarialForm::WganGp => "wgan_gp".into(),
            AdversarialForm::Hinge => "hinge".into(),
        },
    );
    line("loss.tex", c.loss.tex.to_string());
    line("loss.sem", c.loss.sem.to_string());
    line("loss.adv", c.loss.adv.to_string());
    line("loss.gp", c.loss.gp.to_string());
    line("loss.cls", c.loss.cls.to_string());
    line("idmrf.bandwidth", c.idmrf.bandwidth.to_string());
    line("idmrf.eps", c.idmrf.eps.to_string());
    line("image_size", m.image_size.to_string());
    line("local_crop", m.local_crop.to_string());
    line("generator.channels", join(&m.generator.channels));
    line("generator.downsample", join(&m.generator.downsample));
    line("generator.style_hidden", m.generator.style_hidden.to_string());
    line("generator.style_layers", m.generator.style_layers.to_string());
    line("generator.classifier_hidden", m.generator.classifier_hidden.to_string());
    line("generator.adain_eps", m.generator.adain_eps.to_string());
    line("discriminator.base_channels", m.discriminator.base_channels.to_string());
    line("discriminator.strided_layers", m.discriminator.strided_layers.to_string());
    line(
        "backbone.weights",
        m.backbone.weights.as_ref().map_or("none".into(), |p| p.display().to_string()),
    );
    line("backbone.seed", m.backbone.seed.to_string());
    line("backbone.style_layer", m.backbone.style_layer.to_string());
    line("backbone.texture_layer", m.backbone.texture_layer.to_string());
    line("backbone.semantic_layers", join(&m.backbone.semantic_layers));
    s
}

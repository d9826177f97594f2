//! Style extractor, AdaIN residual encoder, decoder and auxiliary classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::{nn, Device, Kind, Tensor};

use super::adain::{adain, AffineParams};
use super::backbone::{Backbone, BackboneEmbedding};
use super::config::{GeneratorConfig, ModelConfig};
use super::layers::{lrelu, Conv2d, InitKind, Linear};
use crate::error::{Error, Result};
use crate::filters::mix_seed;

const INIT: InitKind = InitKind::FanInUniform;

/// Maps the backbone embedding to one [`AffineParams`] per encoder level.
#[derive(Debug)]
struct StyleExtractor {
    trunk: Vec<Linear>,
    heads: Vec<Linear>,
    input_dim: usize,
}

impl StyleExtractor {
    fn new(path: &nn::Path, rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, input_dim: usize) -> Self {
        let trunk = (0..cfg.style_layers)
            .map(|i| {
                let d_in = if i == 0 { input_dim } else { cfg.style_hidden };
                Linear::new(&(path / "trunk" / i), rng, INIT, d_in, cfg.style_hidden)
            })
            .collect();
        let heads = cfg
            .channels
            .iter()
            .enumerate()
            .map(|(i, c)| Linear::new(&(path / "head" / i), rng, INIT, cfg.style_hidden, 2 * c))
            .collect();
        StyleExtractor {
            trunk,
            heads,
            input_dim,
        }
    }

    fn forward(&self, z: &Tensor) -> Result<Vec<AffineParams>> {
        let s = z.size();
        if s.len() != 2 || s[1] != self.input_dim as i64 {
            return Err(Error::Shape(format!(
                "style embedding must be N×{}, got {s:?}",
                self.input_dim
            )));
        }
        let h = self.trunk.iter().fold(z.shallow_clone(), |h, l| lrelu(&l.forward(&h)));
        self.heads
            .iter()
            .map(|head| {
                let out = head.forward(&h);
                let c = out.size()[1] / 2;
                AffineParams::new(out.narrow(1, 0, c), out.narrow(1, c, c).softplus())
            })
            .collect()
    }
}

/// One encoder level: `v = transition(x)`, `o = r(v, y) + v`.
#[derive(Debug)]
struct EncoderLevel {
    transition: Conv2d,
    conv_a: Conv2d,
    conv_b: Conv2d,
}

/// Input and output of one encoder level.
#[derive(Debug)]
pub struct LevelOutput {
    /// Feature map entering the residual block (`v_i`).
    pub input: Tensor,
    /// `r_i(v_i, y_i) + v_i`.
    pub output: Tensor,
}

#[derive(Debug)]
pub struct EncodeOutput {
    pub latent: Tensor,
    pub levels: Vec<LevelOutput>,
}

#[derive(Debug)]
struct ResBlock {
    conv_a: Conv2d,
    conv_b: Conv2d,
}

impl ResBlock {
    fn new(path: &nn::Path, rng: &mut ChaCha8Rng, c: usize) -> Self {
        ResBlock {
            conv_a: Conv2d::new(&(path / "conv_a"), rng, INIT, c, c, 3, 1, 1),
            conv_b: Conv2d::new(&(path / "conv_b"), rng, INIT, c, c, 3, 1, 1),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        x + self.conv_b.forward(&lrelu(&self.conv_a.forward(x)))
    }
}

#[derive(Debug)]
struct DecoderStage {
    res: ResBlock,
    upsample: bool,
    project: Option<Conv2d>,
}

/// Inference result of the full generator.
#[derive(Debug)]
pub struct GeneratorOutput {
    /// N×3×H×W in `[-1, 1]`.
    pub image: Tensor,
    /// N×17 classifier logits.
    pub logits: Tensor,
    pub latent: Tensor,
}

#[derive(Debug)]
pub struct Generator {
    vs: nn::VarStore,
    config: GeneratorConfig,
    style: StyleExtractor,
    levels: Vec<EncoderLevel>,
    stages: Vec<DecoderStage>,
    to_rgb: Conv2d,
    cls_hidden: Linear,
    cls_out: Linear,
}

impl Generator {
    /// Builds the generator with parameters drawn from `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Generator> {
        config.validate()?;
        let cfg = &config.generator;
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
        let style_dim = config.backbone.style_layer.channels();
        let style = StyleExtractor::new(&(&root / "style"), &mut rng, cfg, style_dim);

        let enc = &root / "encoder";
        let mut c_in = 3;
        let levels = cfg
            .channels
            .iter()
            .zip(&cfg.downsample)
            .enumerate()
            .map(|(i, (&c, &down))| {
                let p = &enc / format!("level{i}");
                let (k, s) = if down { (4, 2) } else { (3, 1) };
                let level = EncoderLevel {
                    transition: Conv2d::new(&(&p / "transition"), &mut rng, INIT, c_in, c, k, s, 1),
                    conv_a: Conv2d::new(&(&p / "conv_a"), &mut rng, INIT, c, c, 3, 1, 1),
                    conv_b: Conv2d::new(&(&p / "conv_b"), &mut rng, INIT, c, c, 3, 1, 1),
                };
                c_in = c;
                level
            })
            .collect();

        let dec = &root / "decoder";
        let stages = (0..cfg.num_levels)
            .rev()
            .map(|i| {
                let p = &dec / format!("stage{i}");
                let c = cfg.channels[i];
                let c_out = if i > 0 { cfg.channels[i - 1] } else { c };
                let upsample = cfg.downsample[i];
                let res = ResBlock::new(&(&p / "res"), &mut rng, c);
                let project = (upsample || c != c_out)
                    .then(|| Conv2d::new(&(&p / "project"), &mut rng, INIT, c, c_out, 3, 1, 1));
                DecoderStage {
                    res,
                    upsample,
                    project,
                }
            })
            .collect();
        let to_rgb = Conv2d::new(&(&dec / "to_rgb"), &mut rng, INIT, cfg.channels[0], 3, 3, 1, 1);

        let cls = &root / "classifier";
        let latent = cfg.latent_channels();
        let cls_hidden = Linear::new(&(&cls / "hidden"), &mut rng, INIT, latent, cfg.classifier_hidden);
        let cls_out = Linear::new(&(&cls / "out"), &mut rng, INIT, cfg.classifier_hidden, cfg.num_classes);

        Ok(Generator {
            vs,
            config: cfg.clone(),
            style,
            levels,
            stages,
            to_rgb,
            cls_hidden,
            cls_out,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn var_store(&self) -> &nn::VarStore {
        &self.vs
    }

    pub fn var_store_mut(&mut self) -> &mut nn::VarStore {
        &mut self.vs
    }

    /// One [`AffineParams`] per encoder level, in level order.
    pub fn extract_style(&self, embedding: &BackboneEmbedding) -> Result<Vec<AffineParams>> {
        self.style.forward(&embedding.z_vgg)
    }

    /// Runs the AdaIN encoder on an N×3×H×W batch in `[-1, 1]`.
    pub fn encode(&self, img: &Tensor, styles: &[AffineParams]) -> Result<EncodeOutput> {
        if styles.len() != self.levels.len() {
            return Err(Error::Config(format!(
                "encoder has {} levels but {} style vectors were supplied",
                self.levels.len(),
                styles.len()
            )));
        }
        let s = img.size();
        let r = self.config.reduction() as i64;
        if s.len() != 4 || s[1] != 3 || s[2] % r != 0 || s[3] % r != 0 || s[2] < r || s[3] < r {
            return Err(Error::Shape(format!(
                "encoder expects N×3×H×W with H, W multiples of {r}, got {s:?}"
            )));
        }
        let eps = self.config.adain_eps;
        let mut x = img.shallow_clone();
        let mut levels = Vec::with_capacity(self.levels.len());
        for (level, y) in self.levels.iter().zip(styles) {
            let v = lrelu(&level.transition.forward(&x));
            let h = adain(&level.conv_a.forward(&v), y, eps)?;
            let o = level.conv_b.forward(&lrelu(&h)) + &v;
            x = o.shallow_clone();
            levels.push(LevelOutput {
                input: v,
                output: o,
            });
        }
        Ok(EncodeOutput { latent: x, levels })
    }

    /// Decodes a latent into an N×3×H×W image in `[-1, 1]`.
    pub fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        self.check_latent(latent)?;
        let mut x = latent.shallow_clone();
        for stage in &self.stages {
            x = stage.res.forward(&x);
            if stage.upsample {
                let s = x.size();
                x = x.upsample_nearest2d([s[2] * 2, s[3] * 2], None, None);
            }
            if let Some(p) = &stage.project {
                x = lrelu(&p.forward(&x));
            }
        }
        Ok(self.to_rgb.forward(&x).tanh())
    }

    /// N×17 filter logits from the latent.
    pub fn classify(&self, latent: &Tensor) -> Result<Tensor> {
        self.check_latent(latent)?;
        let pooled = latent.mean_dim([2i64, 3].as_slice(), false, None::<Kind>);
        Ok(self.cls_out.forward(&lrelu(&self.cls_hidden.forward(&pooled))))
    }

    /// Full pass: style extraction from the frozen backbone, encode, decode, classify.
    pub fn forward(&self, backbone: &Backbone, img: &Tensor) -> Result<GeneratorOutput> {
        let embedding = tch::no_grad(|| backbone.embed(&((img.detach() + 1.0) * 0.5), &[]))?;
        let styles = self.extract_style(&embedding)?;
        let enc = self.encode(img, &styles)?;
        let image = self.decode(&enc.latent)?;
        let logits = self.classify(&enc.latent)?;
        Ok(GeneratorOutput {
            image,
            logits,
            latent: enc.latent,
        })
    }

    /// Zeroes the last convolution of every encoder residual branch, which
    /// turns each level into `o_i = v_i`.
    pub fn zero_residual_branches(&mut self) {
        tch::no_grad(|| {
            for level in &mut self.levels {
                let _ = level.conv_b.ws.zero_();
                let _ = level.conv_b.bs.zero_();
            }
        });
    }

    fn check_latent(&self, latent: &Tensor) -> Result<()> {
        let s = latent.size();
        if s.len() != 4 || s[1] != self.config.latent_channels() as i64 {
            return Err(Error::Shape(format!(
                "latent must be N×{}×h×w, got {s:?}",
                self.config.latent_channels()
            )));
        }
        Ok(())
    }
}

/// Index of the largest logit per row; ties resolve to the lowest index.
pub fn argmax_lowest(logits: &Tensor) -> Vec<usize> {
    let rows = Vec::<Vec<f64>>::try_from(logits.detach().to_kind(Kind::Double))
        .expect("2-D logits");
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                    if *v > best.1 {
                        (i, *v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

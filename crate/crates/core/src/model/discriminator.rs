//! PatchGAN critics for the whole image and for local crops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::{nn, Device, Tensor};

use super::config::{DiscriminatorConfig, ModelConfig};
use super::layers::{lrelu, Conv2d, InitKind};
use crate::error::{Error, Result};
use crate::filters::mix_seed;

/// A fully-convolutional critic emitting an N×1×h×w score map with no
/// output nonlinearity.
#[derive(Debug)]
pub struct PatchDiscriminator {
    layers: Vec<Conv2d>,
    input_size: usize,
}

impl PatchDiscriminator {
    fn new(path: &nn::Path, rng: &mut ChaCha8Rng, cfg: &DiscriminatorConfig, input_size: usize) -> Self {
        let cap = cfg.base_channels * 8;
        let mut layers = Vec::new();
        let mut c_in = 3;
        let mut c = cfg.base_channels;
        for i in 0..cfg.strided_layers {
            layers.push(Conv2d::new(&(path / i), rng, InitKind::FanInUniform, c_in, c, 4, 2, 1));
            c_in = c;
            c = (c * 2).min(cap);
        }
        let n = cfg.strided_layers;
        layers.push(Conv2d::new(&(path / n), rng, InitKind::FanInUniform, c_in, c, 4, 1, 1));
        layers.push(Conv2d::new(&(path / (n + 1)), rng, InitKind::FanInUniform, c, 1, 4, 1, 1));
        PatchDiscriminator { layers, input_size }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.size();
        let n = self.input_size as i64;
        if s.len() != 4 || s[1] != 3 || s[2] != n || s[3] != n {
            return Err(Error::Shape(format!(
                "critic expects N×3×{n}×{n}, got {s:?}"
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x.shallow_clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                h = lrelu(&h);
            }
        }
        Ok(h)
    }
}

/// The global and local critics, sharing a var store but no parameters.
#[derive(Debug)]
pub struct Discriminators {
    vs: nn::VarStore,
    pub global: PatchDiscriminator,
    pub local: PatchDiscriminator,
}

impl Discriminators {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Discriminators> {
        config.validate()?;
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
        let global = PatchDiscriminator::new(&(&root / "global"), &mut rng, &config.discriminator, config.image_size);
        let local = PatchDiscriminator::new(&(&root / "local"), &mut rng, &config.discriminator, config.local_crop);
        Ok(Discriminators { vs, global, local })
    }

    pub fn discriminate_global(&self, img: &Tensor) -> Result<Tensor> {
        self.global.forward(img)
    }

    pub fn discriminate_local(&self, crop: &Tensor) -> Result<Tensor> {
        self.local.forward(crop)
    }

    pub fn var_store(&self) -> &nn::VarStore {
        &self.vs
    }

    pub fn var_store_mut(&mut self) -> &mut nn::VarStore {
        &mut self.vs
    }
}

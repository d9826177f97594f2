//! Frozen VGG16-layout feature extractor.
//!
//! Parameter names follow torchvision (`features.<index>.weight`), so a
//! converted pretrained file can be loaded with [`Backbone::new`]. Without a
//! weights file the convolutions are Kaiming-normal from a recorded seed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{nn, Device, Kind, Tensor};

use super::config::BackboneConfig;
use super::layers::{Conv2d, InitKind};
use crate::error::{Error, Result};

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// `(block, index, torchvision feature index, out channels)` for the 13 convolutions.
const VGG16: [(u8, u8, usize, usize); 13] = [
    (1, 1, 0, 64),
    (1, 2, 2, 64),
    (2, 1, 5, 128),
    (2, 2, 7, 128),
    (3, 1, 10, 256),
    (3, 2, 12, 256),
    (3, 3, 14, 256),
    (4, 1, 17, 512),
    (4, 2, 19, 512),
    (4, 3, 21, 512),
    (5, 1, 24, 512),
    (5, 2, 26, 512),
    (5, 3, 28, 512),
];

/// A post-activation VGG16 layer, ordered by depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LayerTag(usize);

#[allow(non_upper_case_globals)]
impl LayerTag {
    pub const Relu1_1: LayerTag = LayerTag(0);
    pub const Relu1_2: LayerTag = LayerTag(1);
    pub const Relu2_1: LayerTag = LayerTag(2);
    pub const Relu2_2: LayerTag = LayerTag(3);
    pub const Relu3_1: LayerTag = LayerTag(4);
    pub const Relu3_2: LayerTag = LayerTag(5);

    pub fn all() -> impl Iterator<Item = LayerTag> {
        (0..VGG16.len()).map(LayerTag)
    }

    pub fn channels(self) -> usize {
        VGG16[self.0].3
    }

    /// Spatial downscale relative to the input (number of preceding poolings).
    pub fn stride(self) -> usize {
        1 << (VGG16[self.0].0 - 1)
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (b, i, _, _) = VGG16[self.0];
        write!(f, "relu{b}_{i}")
    }
}

impl FromStr for LayerTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerTag::all()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown backbone layer tag `{s}`")))
    }
}

impl TryFrom<String> for LayerTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LayerTag> for String {
    fn from(t: LayerTag) -> String {
        t.to_string()
    }
}

/// Backbone activations for one batch.
#[derive(Debug)]
pub struct BackboneEmbedding {
    /// Global-average-pooled style-layer activations, N×C.
    pub z_vgg: Tensor,
    pub per_layer: BTreeMap<LayerTag, Tensor>,
}

#[derive(Debug)]
pub struct Backbone {
    vs: nn::VarStore,
    convs: Vec<Conv2d>,
    config: BackboneConfig,
    mean: Tensor,
    std: Tensor,
}

impl Backbone {
    pub fn new(config: &BackboneConfig) -> Result<Backbone> {
        let mut vs = nn::VarStore::new(Device::Cpu);
        let depth = config.deepest().0 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let root = vs.root() / "features";
        let mut c_in = 3;
        let convs: Vec<Conv2d> = VGG16[..depth]
            .iter()
            .map(|&(_, _, idx, c_out)| {
                let conv = Conv2d::new(
                    &(&root / idx),
                    &mut rng,
                    InitKind::KaimingNormal,
                    c_in,
                    c_out,
                    3,
                    1,
                    1,
                );
                c_in = c_out;
                conv
            })
            .collect();
        if let Some(path) = &config.weights {
            let missing = vs.load_partial(path)?;
            if !missing.is_empty() {
                return Err(Error::Config(format!(
                    "backbone weights {} lack {missing:?}",
                    path.display()
                )));
            }
        }
        vs.freeze();
        Ok(Backbone {
            vs,
            convs,
            config: config.clone(),
            mean: Tensor::from_slice(&IMAGENET_MEAN).view([1, 3, 1, 1]),
            std: Tensor::from_slice(&IMAGENET_STD).view([1, 3, 1, 1]),
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn var_store(&self) -> &nn::VarStore {
        &self.vs
    }

    pub fn var_store_mut(&mut self) -> &mut nn::VarStore {
        &mut self.vs
    }

    pub fn deepest_built(&self) -> LayerTag {
        LayerTag(self.convs.len() - 1)
    }

    /// Activations at `tags` for an N×3×H×W batch in `[0, 1]`.
    pub fn features(&self, img: &Tensor, tags: &[LayerTag]) -> Result<BTreeMap<LayerTag, Tensor>> {
        check_image(img)?;
        let deepest = match tags.iter().max() {
            Some(t) => *t,
            None => return Ok(BTreeMap::new()),
        };
        if deepest > self.deepest_built() {
            return Err(Error::Config(format!(
                "layer tag `{deepest}` is deeper than the built backbone (`{}`)",
                self.deepest_built()
            )));
        }
        let kind = img.kind();
        let mut x = (img - self.mean.to_kind(kind)) / self.std.to_kind(kind);
        let mut out = BTreeMap::new();
        for (i, conv) in self.convs.iter().enumerate().take(deepest.0 + 1) {
            if i > 0 && VGG16[i].0 != VGG16[i - 1].0 {
                x = x.max_pool2d([2, 2], [2, 2], [0, 0], [1, 1], false);
            }
            x = conv.forward(&x).relu();
            if tags.contains(&LayerTag(i)) {
                out.insert(LayerTag(i), x.shallow_clone());
            }
        }
        Ok(out)
    }

    /// Style embedding plus the requested per-layer maps.
    pub fn embed(&self, img: &Tensor, tags: &[LayerTag]) -> Result<BackboneEmbedding> {
        let style = self.config.style_layer;
        let mut all: Vec<LayerTag> = tags.to_vec();
        all.push(style);
        let mut per_layer = self.features(img, &all)?;
        let z_vgg = per_layer[&style].mean_dim([2i64, 3].as_slice(), false, None::<Kind>);
        if !tags.contains(&style) {
            per_layer.remove(&style);
        }
        Ok(BackboneEmbedding { z_vgg, per_layer })
    }
}

fn check_image(img: &Tensor) -> Result<()> {
    let s = img.size();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::Shape(format!("backbone expects N×3×H×W, got {s:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_parse_and_order() {
        let t: LayerTag = "relu3_2".parse().unwrap();
        assert_eq!(t, LayerTag::Relu3_2);
        assert_eq!(t.channels(), 256);
        assert_eq!(t.stride(), 4);
        assert!(LayerTag::Relu1_1 < t);
        assert!("relu9_9".parse::<LayerTag>().is_err());
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "\"relu3_2\"");
    }
}

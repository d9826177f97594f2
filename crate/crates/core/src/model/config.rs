use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};

use super::backbone::LayerTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleMode {
    /// Nearest-neighbour ×2 followed by a 3×3 convolution.
    NearestConv,
}

/// Generator shape: style extractor, AdaIN encoder, decoder and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_levels: usize,
    /// Output channels of each encoder level.
    pub channels: Vec<usize>,
    /// Whether each level halves the spatial resolution.
    pub downsample: Vec<bool>,
    /// Width of the fully-connected style trunk.
    pub style_hidden: usize,
    /// Number of fully-connected trunk layers.
    pub style_layers: usize,
    pub classifier_hidden: usize,
    pub num_classes: usize,
    pub upsample: UpsampleMode,
    pub adain_eps: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_levels: 6,
            channels: vec![64, 128, 256, 256, 256, 256],
            downsample: vec![true, true, true, true, false, false],
            style_hidden: 512,
            style_layers: 5,
            classifier_hidden: 256,
            num_classes: NUM_CLASSES,
            upsample: UpsampleMode::NearestConv,
            adain_eps: 1e-5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_levels == 0 {
            return Err(Error::Config("generator needs at least one level".into()));
        }
        if self.channels.len() != self.num_levels || self.downsample.len() != self.num_levels {
            return Err(Error::Config(format!(
                "{} levels need {0} channel widths and {0} downsample flags (got {} and {}); \
                 one style head is built per normalization layer",
                self.num_levels,
                self.channels.len(),
                self.downsample.len()
            )));
        }
        if self.channels.contains(&0) || self.style_hidden == 0 || self.classifier_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.style_layers == 0 {
            return Err(Error::Config("style trunk needs at least one layer".into()));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "classifier must have {NUM_CLASSES} classes, got {}",
                self.num_classes
            )));
        }
        if !(self.adain_eps > 0.0) {
            return Err(Error::Config("adain_eps must be positive".into()));
        }
        Ok(())
    }

    /// Total spatial reduction factor of the encoder.
    pub fn reduction(&self) -> usize {
        1 << self.downsample.iter().filter(|d| **d).count()
    }

    pub fn latent_channels(&self) -> usize {
        *self.channels.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Channels of the first convolution; doubled per strided layer.
    pub base_channels: usize,
    /// Number of stride-2 layers.
    pub strided_layers: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            base_channels: 64,
            strided_layers: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    /// Optional weights file (`.ot` or `.safetensors`, torchvision VGG16 names
    /// such as `features.0.weight`). Random initialization when absent.
    pub weights: Option<PathBuf>,
    /// Seed of the random initialization.
    pub seed: u64,
    /// Layer whose global-average-pooled activations form the style embedding.
    pub style_layer: LayerTag,
    /// Layers summed in the semantic consistency loss.
    pub semantic_layers: Vec<LayerTag>,
    /// Layer whose 1×1 patches feed the ID-MRF texture loss.
    pub texture_layer: LayerTag,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            weights: None,
            seed: 0x5EED_0016,
            style_layer: LayerTag::Relu3_2,
            semantic_layers: vec![LayerTag::Relu3_2],
            texture_layer: LayerTag::Relu3_2,
        }
    }
}

impl BackboneConfig {
    /// Deepest layer any consumer needs.
    pub fn deepest(&self) -> LayerTag {
        self.semantic_layers
            .iter()
            .copied()
            .chain([self.style_layer, self.texture_layer])
            .max()
            .expect("non-empty")
    }
}

/// Everything needed to rebuild the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Square working resolution.
    pub image_size: usize,
    /// Edge of the square crops fed to the local discriminator.
    pub local_crop: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub backbone: BackboneConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 256,
            local_crop: 128,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            backbone: BackboneConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Reduced widths and resolution for single-core CPU runs. Same topology
    /// as the default: six AdaIN levels, 1/16 latent, three-stride critics.
    pub fn desk() -> Self {
        ModelConfig {
            image_size: 64,
            local_crop: 32,
            generator: GeneratorConfig {
                channels: vec![32, 64, 128, 128, 128, 128],
                style_hidden: 256,
                classifier_hidden: 128,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                base_channels: 32,
                strided_layers: 3,
            },
            backbone: BackboneConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        let r = self.generator.reduction();
        if self.image_size < 8 || self.image_size % r != 0 {
            return Err(Error::Config(format!(
                "image_size {} must be a multiple of the encoder reduction {r}",
                self.image_size
            )));
        }
        let d = 1 << self.discriminator.strided_layers;
        if self.local_crop == 0
            || self.local_crop > self.image_size
            || self.local_crop < 4 * d
        {
            return Err(Error::Config(format!(
                "local_crop {} must lie in [{}, {}]",
                self.local_crop,
                4 * d,
                self.image_size
            )));
        }
        if self.discriminator.base_channels == 0 || self.discriminator.strided_layers == 0 {
            return Err(Error::Config("discriminator widths must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_six_levels_and_sixteenth_latent() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.generator.num_levels, 6);
        assert_eq!(c.generator.reduction(), 16);
        ModelConfig::desk().validate().unwrap();
    }

    #[test]
    fn level_count_mismatch_is_rejected() {
        let mut g = GeneratorConfig::default();
        g.num_levels = 5;
        assert!(g.validate().is_err());
    }
}

//! Networks: frozen backbone, AdaIN generator and PatchGAN critics.

pub mod adain;
pub mod backbone;
pub mod config;
pub mod discriminator;
pub mod generator;
mod layers;

pub use adain::{adain, channel_stats, AffineParams};
pub use backbone::{Backbone, BackboneEmbedding, LayerTag};
pub use config::{BackboneConfig, DiscriminatorConfig, GeneratorConfig, ModelConfig, UpsampleMode};
pub use discriminator::{Discriminators, PatchDiscriminator};
pub use generator::{argmax_lowest, EncodeOutput, Generator, GeneratorOutput, LevelOutput};

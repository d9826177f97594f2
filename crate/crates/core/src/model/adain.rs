//! Adaptive instance normalization.

use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Target per-channel statistics for one encoder level.
///
/// `mean` and `std` are N×C (per sample) or C (shared by the batch).
#[derive(Debug)]
pub struct AffineParams {
    pub mean: Tensor,
    pub std: Tensor,
}

impl AffineParams {
    pub fn new(mean: Tensor, std: Tensor) -> Result<AffineParams> {
        if mean.size() != std.size() || !(1..=2).contains(&mean.dim()) {
            return Err(Error::Shape(format!(
                "affine mean {:?} and std {:?} must share a C or N×C shape",
                mean.size(),
                std.size()
            )));
        }
        Ok(AffineParams { mean, std })
    }

    /// Spatial statistics of `x` (population std), per sample and channel.
    pub fn of(x: &Tensor) -> AffineParams {
        let (mean, std) = channel_stats(x);
        AffineParams {
            mean: mean.squeeze_dims([2i64, 3].as_slice()),
            std: std.squeeze_dims([2i64, 3].as_slice()),
        }
    }

    pub fn channels(&self) -> i64 {
        *self.mean.size().last().expect("validated rank")
    }

    fn broadcast(t: &Tensor) -> Tensor {
        match t.dim() {
            1 => t.view([1, -1, 1, 1]),
            _ => t.unsqueeze(-1).unsqueeze(-1),
        }
    }
}

/// Per-sample, per-channel mean and population std over spatial positions,
/// both shaped N×C×1×1.
pub fn channel_stats(x: &Tensor) -> (Tensor, Tensor) {
    let dims = [2i64, 3];
    let mean = x.mean_dim(dims.as_slice(), true, None::<Kind>);
    let var = (x - &mean)
        .square()
        .mean_dim(dims.as_slice(), true, None::<Kind>);
    // The tiny floor keeps d(std)/d(var) finite on constant channels.
    (mean, (var + 1e-12).sqrt())
}

/// `std(y) * (x - mean(x)) / (std(x) + eps) + mean(y)`, statistics taken over
/// spatial positions of each sample and channel.
pub fn adain(x: &Tensor, y: &AffineParams, eps: f64) -> Result<Tensor> {
    let s = x.size();
    if s.len() != 4 {
        return Err(Error::Shape(format!("adain expects N×C×H×W, got {s:?}")));
    }
    if y.channels() != s[1] {
        return Err(Error::Shape(format!(
            "affine params have {} channels, feature map has {}",
            y.channels(),
            s[1]
        )));
    }
    if y.mean.dim() == 2 && y.mean.size()[0] != s[0] {
        return Err(Error::Shape(format!(
            "affine params for {} samples, feature map has {}",
            y.mean.size()[0],
            s[0]
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Config("adain epsilon must be positive".into()));
    }
    let (mu, sigma) = channel_stats(x);
    let normalized = (x - mu) / (sigma + eps);
    Ok(normalized * AffineParams::broadcast(&y.std) + AffineParams::broadcast(&y.mean))
}

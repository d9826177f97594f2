//! Convolution and linear layers whose parameters are drawn from a seeded
//! ChaCha stream instead of libtorch's global generator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tch::{nn, Tensor};

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum InitKind {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    FanInUniform,
    /// `N(0, 2/fan_in)` weights, zero biases.
    KaimingNormal,
}

fn sample(rng: &mut ChaCha8Rng, n: usize, init: InitKind, fan_in: usize, bias: bool) -> Vec<f32> {
    match init {
        InitKind::FanInUniform => {
            let bound = 1.0 / (fan_in as f32).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        }
        InitKind::KaimingNormal if bias => vec![0.0; n],
        InitKind::KaimingNormal => {
            let normal = Normal::new(0.0, (2.0 / fan_in as f32).sqrt()).expect("positive std");
            (0..n).map(|_| normal.sample(rng)).collect()
        }
    }
}

fn param(path: &nn::Path, name: &str, shape: &[i64], values: Vec<f32>) -> Tensor {
    path.var_copy(name, &Tensor::from_slice(&values).view(shape))
}

#[derive(Debug)]
pub struct Conv2d {
    pub ws: Tensor,
    pub bs: Tensor,
    stride: i64,
    padding: i64,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        path: &nn::Path,
        rng: &mut ChaCha8Rng,
        init: InitKind,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Conv2d {
        let fan_in = c_in * kernel * kernel;
        let shape = [c_out as i64, c_in as i64, kernel as i64, kernel as i64];
        let ws = param(
            path,
            "weight",
            &shape,
            sample(rng, c_out * fan_in, init, fan_in, false),
        );
        let bs = param(
            path,
            "bias",
            &[c_out as i64],
            sample(rng, c_out, init, fan_in, true),
        );
        Conv2d {
            ws,
            bs,
            stride: stride as i64,
            padding: padding as i64,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv2d(
            &self.ws,
            Some(&self.bs),
            [self.stride; 2],
            [self.padding; 2],
            [1, 1],
            1,
        )
    }
}

#[derive(Debug)]
pub struct Linear {
    pub ws: Tensor,
    pub bs: Tensor,
}

impl Linear {
    pub fn new(
        path: &nn::Path,
        rng: &mut ChaCha8Rng,
        init: InitKind,
        d_in: usize,
        d_out: usize,
    ) -> Linear {
        let ws = param(
            path,
            "weight",
            &[d_out as i64, d_in as i64],
            sample(rng, d_in * d_out, init, d_in, false),
        );
        let bs = param(path, "bias", &[d_out as i64], sample(rng, d_out, init, d_in, true));
        Linear { ws, bs }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.linear(&self.ws, Some(&self.bs))
    }
}

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

pub(crate) fn lrelu(x: &Tensor) -> Tensor {
    x.where_self(&x.gt(0.0), &(x * LEAKY_SLOPE))
}

//! Parametric image primitives and the named filters built from them.

mod registry;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, RgbImage};

pub use registry::{builtin_filter, filter_names, registry, Registry, REGISTRY_SOURCE};

/// Name of the identity "filter".
pub const ORIGINAL: &str = "original";

/// The sixteen emulated filters, in their canonical order.
pub const FILTER_NAMES: [&str; 16] = [
    "1977",
    "Amaro",
    "Brannan",
    "Clarendon",
    "Gingham",
    "He-Fe",
    "Hudson",
    "Lo-Fi",
    "Mayfair",
    "Nashville",
    "Perpetua",
    "Sutro",
    "Toaster",
    "Valencia",
    "Willow",
    "X-Pro II",
];

/// Rec. 709 luma weights.
pub(crate) const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Red,
    Green,
    Blue,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    Screen,
    Multiply,
    Softlight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterPrimitive {
    /// `out = in + delta`
    Brightness { delta: f32 },
    /// `out = (in - pivot) * gain + pivot`
    Contrast {
        gain: f32,
        #[serde(default = "default_pivot")]
        pivot: f32,
    },
    /// Scales each pixel's distance from its luma.
    Saturation { gain: f32 },
    /// Luma-preserving hue rotation.
    HueRotate { degrees: f32 },
    /// Piecewise-linear tone curve through `(in, out)` control points.
    ChannelCurve {
        channel: Channel,
        points: Vec<[f32; 2]>,
    },
    /// Linear mix toward a flat color.
    Tint { rgb: [f32; 3], opacity: f32 },
    /// Radial darkening beyond `inner_radius` (1 = image corner).
    Vignette { strength: f32, inner_radius: f32 },
    /// Monochrome Gaussian noise.
    Grain { sigma: f32, seed: u64 },
    /// Separable Gaussian blur; `radius_px` is the standard deviation.
    GaussianBlur { radius_px: f32 },
    /// Blend a flat color layer with the given mode, then mix by opacity.
    Overlay {
        rgb: [f32; 3],
        mode: BlendMode,
        opacity: f32,
    },
}

fn default_pivot() -> f32 {
    0.5
}

impl FilterPrimitive {
    pub fn kind(&self) -> &'static str {
        match self {
            FilterPrimitive::Brightness { .. } => "brightness",
            FilterPrimitive::Contrast { .. } => "contrast",
            FilterPrimitive::Saturation { .. } => "saturation",
            FilterPrimitive::HueRotate { .. } => "hue_rotate",
            FilterPrimitive::ChannelCurve { .. } => "channel_curve",
            FilterPrimitive::Tint { .. } => "tint",
            FilterPrimitive::Vignette { .. } => "vignette",
            FilterPrimitive::Grain { .. } => "grain",
            FilterPrimitive::GaussianBlur { .. } => "gaussian_blur",
            FilterPrimitive::Overlay { .. } => "overlay",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind();
        let finite = |name: &str, v: f32| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(kind, format!("{name} is not finite")))
            }
        };
        let unit = |name: &str, v: f32| {
            finite(name, v)?;
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(kind, format!("{name}={v} outside [0, 1]")))
            }
        };
        let non_negative = |name: &str, v: f32| {
            finite(name, v)?;
            if v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(kind, format!("{name}={v} is negative")))
            }
        };
        match self {
            FilterPrimitive::Brightness { delta } => finite("delta", *delta),
            FilterPrimitive::Contrast { gain, pivot } => {
                non_negative("gain", *gain)?;
                unit("pivot", *pivot)
            }
            FilterPrimitive::Saturation { gain } => non_negative("gain", *gain),
            FilterPrimitive::HueRotate { degrees } => finite("degrees", *degrees),
            FilterPrimitive::ChannelCurve { points, .. } => {
                if points.len() < 2 {
                    return Err(Error::invalid(kind, "needs at least two control points"));
                }
                for [i, o] in points {
                    unit("control point in", *i)?;
                    unit("control point out", *o)?;
                }
                if points[0][0] != 0.0 || points[points.len() - 1][0] != 1.0 {
                    return Err(Error::invalid(kind, "control points must start at 0 and end at 1"));
                }
                if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::invalid(
                        kind,
                        "control points must be strictly increasing in `in`",
                    ));
                }
                Ok(())
            }
            FilterPrimitive::Tint { rgb, opacity } | FilterPrimitive::Overlay { rgb, opacity, .. } => {
                for c in rgb {
                    unit("rgb", *c)?;
                }
                unit("opacity", *opacity)
            }
            FilterPrimitive::Vignette {
                strength,
                inner_radius,
            } => {
                unit("strength", *strength)?;
                unit("inner_radius", *inner_radius)
            }
            FilterPrimitive::Grain { sigma, .. } => non_negative("sigma", *sigma),
            FilterPrimitive::GaussianBlur { radius_px } => non_negative("radius_px", *radius_px),
        }
    }
}

/// A named, ordered list of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub name: String,
    #[serde(default)]
    pub primitives: Vec<FilterPrimitive>,
}

impl FilterSpec {
    pub fn original() -> Self {
        FilterSpec {
            name: ORIGINAL.to_string(),
            primitives: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let is_original = self.name == ORIGINAL;
        if is_original != self.primitives.is_empty() {
            return Err(Error::Config(format!(
                "filter `{}`: only `{ORIGINAL}` may (and must) have no primitives",
                self.name
            )));
        }
        self.primitives.iter().try_for_each(FilterPrimitive::validate)
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.primitives.iter().any(|p| p.kind() == kind)
    }
}

/// Applies one primitive to an `srgb_unit` image.
pub fn apply_primitive(img: &RgbImage, p: &FilterPrimitive) -> Result<RgbImage> {
    apply_primitive_salted(img, p, 0)
}

/// Applies a filter's primitives in order.
pub fn apply_filter(img: &RgbImage, spec: &FilterSpec) -> Result<RgbImage> {
    apply_filter_salted(img, spec, 0)
}

/// Like [`apply_filter`], but mixes `salt` into every grain seed so that
/// each image of a dataset receives its own noise field.
pub fn apply_filter_salted(img: &RgbImage, spec: &FilterSpec, salt: u64) -> Result<RgbImage> {
    spec.validate()?;
    let mut out = img.to_space(ColorSpace::SrgbUnit);
    for p in &spec.primitives {
        out = apply_primitive_salted(&out, p, salt)?;
    }
    Ok(out.to_space(img.space()))
}

fn apply_primitive_salted(img: &RgbImage, p: &FilterPrimitive, salt: u64) -> Result<RgbImage> {
    p.validate()?;
    if img.space() != ColorSpace::SrgbUnit {
        return Err(Error::InvalidImage(
            "primitives operate on srgb_unit images".into(),
        ));
    }
    let (w, h) = (img.width(), img.height());
    let data = match p {
        FilterPrimitive::Brightness { delta } => {
            map_values(img, |v| v + f64::from(*delta))
        }
        FilterPrimitive::Contrast { gain, pivot } => {
            let (g, c) = (f64::from(*gain), f64::from(*pivot));
            map_values(img, |v| (v - c) * g + c)
        }
        FilterPrimitive::Saturation { gain } => {
            let g = f64::from(*gain);
            map_pixels(img, |_, _, px| {
                let l = luma(px);
                px.map(|v| l + (v - l) * g)
            })
        }
        FilterPrimitive::HueRotate { degrees } => {
            let m = hue_matrix(f64::from(*degrees));
            map_pixels(img, |_, _, px| {
                [0, 1, 2].map(|r| m[r][0] * px[0] + m[r][1] * px[1] + m[r][2] * px[2])
            })
        }
        FilterPrimitive::ChannelCurve { channel, points } => {
            let apply = |c: usize| matches!((channel, c), (Channel::All, _) | (Channel::Red, 0) | (Channel::Green, 1) | (Channel::Blue, 2));
            map_pixels(img, |_, _, px| {
                let mut out = px;
                for (c, v) in out.iter_mut().enumerate() {
                    if apply(c) {
                        *v = eval_curve(points, *v);
                    }
                }
                out
            })
        }
        FilterPrimitive::Tint { rgb, opacity } => {
            let a = f64::from(*opacity);
            map_pixels(img, |_, _, px| {
                [0, 1, 2].map(|c| px[c] * (1.0 - a) + f64::from(rgb[c]) * a)
            })
        }
        FilterPrimitive::Vignette {
            strength,
            inner_radius,
        } => {
            let (s, r0) = (f64::from(*strength), f64::from(*inner_radius));
            let corner = std::f64::consts::FRAC_1_SQRT_2;
            map_pixels(img, |x, y, px| {
                let dx = (x as f64 + 0.5) / w as f64 - 0.5;
                let dy = (y as f64 + 0.5) / h as f64 - 0.5;
                let r = (dx * dx + dy * dy).sqrt() / corner;
                let t = if r0 < 1.0 {
                    ((r - r0) / (1.0 - r0)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let factor = 1.0 - s * t * t * (3.0 - 2.0 * t);
                px.map(|v| v * factor)
            })
        }
        FilterPrimitive::Grain { sigma, seed } => {
            if *sigma == 0.0 {
                img.data().to_vec()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(*seed, salt));
                let normal = Normal::new(0.0f64, f64::from(*sigma))
                    .map_err(|e| Error::invalid("grain", e.to_string()))?;
                map_pixels(img, |_, _, px| {
                    let n = normal.sample(&mut rng);
                    px.map(|v| v + n)
                })
            }
        }
        FilterPrimitive::GaussianBlur { radius_px } => gaussian_blur(img, f64::from(*radius_px)),
        FilterPrimitive::Overlay { rgb, mode, opacity } => {
            let a = f64::from(*opacity);
            map_pixels(img, |_, _, px| {
                [0, 1, 2].map(|c| {
                    let blended = blend(*mode, px[c], f64::from(rgb[c]));
                    px[c] * (1.0 - a) + blended * a
                })
            })
        }
    };
    RgbImage::from_clamped(w, h, ColorSpace::SrgbUnit, data)
}

/// SplitMix64 finalizer over the pair, used to derive per-image seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean over pixels of `max(r,g,b) - min(r,g,b)`.
pub fn mean_saturation(img: &RgbImage) -> f64 {
    let n = (img.width() * img.height()) as f64;
    img.pixels()
        .map(|p| {
            let hi = p[0].max(p[1]).max(p[2]);
            let lo = p[0].min(p[1]).min(p[2]);
            f64::from(hi - lo)
        })
        .sum::<f64>()
        / n
}

fn luma(px: [f64; 3]) -> f64 {
    LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]
}

fn map_values(img: &RgbImage, f: impl Fn(f64) -> f64) -> Vec<f32> {
    img.data().iter().map(|v| f(f64::from(*v)) as f32).collect()
}

fn map_pixels(img: &RgbImage, mut f: impl FnMut(usize, usize, [f64; 3]) -> [f64; 3]) -> Vec<f32> {
    let w = img.width();
    let mut out = Vec::with_capacity(img.data().len());
    for (i, px) in img.pixels().enumerate() {
        let r = f(i % w, i / w, px.map(f64::from));
        out.extend(r.map(|v| v as f32));
    }
    out
}

fn hue_matrix(degrees: f64) -> [[f64; 3]; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    [
        [
            0.213 + c * 0.787 - s * 0.213,
            0.715 - c * 0.715 - s * 0.715,
            0.072 - c * 0.072 + s * 0.928,
        ],
        [
            0.213 - c * 0.213 + s * 0.143,
            0.715 + c * 0.285 + s * 0.140,
            0.072 - c * 0.072 - s * 0.283,
        ],
        [
            0.213 - c * 0.213 - s * 0.787,
            0.715 - c * 0.715 + s * 0.715,
            0.072 + c * 0.928 + s * 0.072,
        ],
    ]
}

fn eval_curve(points: &[[f32; 2]], v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    let seg = points
        .windows(2)
        .find(|w| v <= f64::from(w[1][0]))
        .unwrap_or(&points[points.len() - 2..]);
    let ([x0, y0], [x1, y1]) = (seg[0].map(f64::from), seg[1].map(f64::from));
    y0 + (v - x0) * (y1 - y0) / (x1 - x0)
}

fn blend(mode: BlendMode, base: f64, layer: f64) -> f64 {
    match mode {
        BlendMode::Screen => 1.0 - (1.0 - base) * (1.0 - layer),
        BlendMode::Multiply => base * layer,
        BlendMode::Softlight => {
            if layer <= 0.5 {
                base - (1.0 - 2.0 * layer) * base * (1.0 - base)
            } else {
                let d = if base <= 0.25 {
                    ((16.0 * base - 12.0) * base + 4.0) * base
                } else {
                    base.sqrt()
                };
                base + (2.0 * layer - 1.0) * (d - base)
            }
        }
    }
}

fn gaussian_blur(img: &RgbImage, sigma: f64) -> Vec<f32> {
    if sigma == 0.0 {
        return img.data().to_vec();
    }
    let half = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let (w, h) = (img.width() as isize, img.height() as isize);
    let src: Vec<f64> = img.data().iter().map(|v| f64::from(*v)).collect();
    let at = |buf: &[f64], x: isize, y: isize, c: usize| {
        let x = x.clamp(0, w - 1);
        let y = y.clamp(0, h - 1);
        buf[((y * w + x) * 3) as usize + c]
    };
    let pass = |buf: &[f64], horizontal: bool| {
        let mut out = vec![0.0; buf.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for (k, wgt) in kernel.iter().enumerate() {
                        let o = k as isize - half;
                        acc += wgt
                            * if horizontal {
                                at(buf, x + o, y, c)
                            } else {
                                at(buf, x, y + o, c)
                            };
                    }
                    out[((y * w + x) * 3) as usize + c] = acc;
                }
            }
        }
        out
    };
    let tmp = pass(&src, true);
    pass(&tmp, false).into_iter().map(|v| v as f32).collect()
}

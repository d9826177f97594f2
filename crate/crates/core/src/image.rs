//! Decoded rasters and their conversions to and from PNG files and tensors.

use std::path::Path;

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Smallest accepted edge length in pixels.
pub const MIN_EDGE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    /// sRGB-encoded values in `[0, 1]`.
    SrgbUnit,
    /// sRGB-encoded values mapped to `[-1, 1]`, the generator's working range.
    GeneratorSigned,
}

impl ColorSpace {
    pub fn range(self) -> (f32, f32) {
        match self {
            ColorSpace::SrgbUnit => (0.0, 1.0),
            ColorSpace::GeneratorSigned => (-1.0, 1.0),
        }
    }
}

/// An H×W×3 raster stored row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    space: ColorSpace,
    data: Vec<f32>,
}

impl RgbImage {
    /// Builds an image, rejecting values outside the declared range.
    pub fn new(width: usize, height: usize, space: ColorSpace, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {width}x{height}x3, got {}",
                width * height * 3,
                data.len()
            )));
        }
        let (lo, hi) = space.range();
        if let Some(v) = data.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "value {v} outside [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            width,
            height,
            space,
            data,
        })
    }

    /// Builds an image, clamping every value into the declared range.
    /// Non-finite values map to the range midpoint.
    pub fn from_clamped(
        width: usize,
        height: usize,
        space: ColorSpace,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        let (lo, hi) = space.range();
        for v in &mut data {
            *v = if v.is_finite() {
                v.clamp(lo, hi)
            } else {
                0.5 * (lo + hi)
            };
        }
        Self::new(width, height, space, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, ColorSpace::SrgbUnit, data)
    }

    /// Builds an `srgb_unit` image from a per-pixel closure (clamped).
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_clamped(width, height, ColorSpace::SrgbUnit, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn same_shape(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &RgbImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Re-expresses the pixel values in another range.
    pub fn to_space(&self, space: ColorSpace) -> RgbImage {
        if space == self.space {
            return self.clone();
        }
        let data = match space {
            ColorSpace::GeneratorSigned => self.data.iter().map(|v| v * 2.0 - 1.0).collect(),
            ColorSpace::SrgbUnit => self.data.iter().map(|v| (v + 1.0) * 0.5).collect(),
        };
        RgbImage::from_clamped(self.width, self.height, space, data)
            .expect("dimensions already validated")
    }

    pub fn flip_horizontal(&self) -> RgbImage {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                data.extend_from_slice(&self.pixel(x, y));
            }
        }
        RgbImage {
            data,
            ..self.clone()
        }
    }

    /// Bilinear (triangle-filter) resampling.
    pub fn resize(&self, width: usize, height: usize) -> Result<RgbImage> {
        check_dims(width, height)?;
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let unit = self.to_space(ColorSpace::SrgbUnit);
        let buf = image::Rgb32FImage::from_raw(self.width as u32, self.height as u32, unit.data)
            .expect("buffer length matches dimensions");
        let resized = imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
        let out = RgbImage::from_clamped(width, height, ColorSpace::SrgbUnit, resized.into_raw())?;
        Ok(out.to_space(self.space))
    }

    /// Quantizes to 8 bits per channel (round half away from zero).
    pub fn to_rgb8(&self) -> image::RgbImage {
        let unit = self.to_space(ColorSpace::SrgbUnit);
        let raw = unit.data.iter().map(|v| quantize(*v)).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Result<RgbImage> {
        let data = img.as_raw().iter().map(|v| f32::from(*v) / 255.0).collect();
        RgbImage::new(
            img.width() as usize,
            img.height() as usize,
            ColorSpace::SrgbUnit,
            data,
        )
    }

    /// Decodes any supported image file into `srgb_unit`.
    pub fn load(path: impl AsRef<Path>) -> Result<RgbImage> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?;
        RgbImage::from_rgb8(&img.to_rgb8())
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Codec {
                path: path.to_path_buf(),
                source,
            })
    }

    /// A 3×H×W float tensor holding the values as stored.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.data)
            .view([self.height as i64, self.width as i64, 3])
            .permute([2, 0, 1])
            .contiguous()
    }

    /// Stacks images of equal shape into an N×3×H×W batch.
    pub fn batch_to_tensor(images: &[RgbImage]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("empty batch".into()))?;
        for img in images {
            first.ensure_same_shape(img)?;
        }
        let parts: Vec<Tensor> = images.iter().map(RgbImage::to_tensor).collect();
        Ok(Tensor::stack(&parts, 0))
    }

    /// Reads a 3×H×W (or 1×3×H×W) tensor, clamping into `space`.
    pub fn from_tensor(t: &Tensor, space: ColorSpace) -> Result<RgbImage> {
        let t = match t.dim() {
            4 if t.size()[0] == 1 => t.squeeze_dim(0),
            3 => t.shallow_clone(),
            _ => return Err(Error::Shape(format!("expected 3xHxW tensor, got {:?}", t.size()))),
        };
        let size = t.size();
        if size[0] != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {}", size[0])));
        }
        let hwc = t
            .detach()
            .to_kind(Kind::Float)
            .to_device(tch::Device::Cpu)
            .permute([1, 2, 0])
            .contiguous();
        let data = Vec::<f32>::try_from(hwc.view([-1]))?;
        RgbImage::from_clamped(size[2] as usize, size[1] as usize, space, data)
    }
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < MIN_EDGE || height < MIN_EDGE {
        return Err(Error::InvalidImage(format!(
            "{width}x{height} is below the {MIN_EDGE}x{MIN_EDGE} minimum"
        )));
    }
    Ok(())
}

//! Full-reference image quality: SSIM, PSNR and mean CIEDE2000.

use rayon::prelude::*;

use super::color::{ciede2000, srgb_to_lab};
use crate::error::Result;
use crate::filters::LUMA;
use crate::image::{ColorSpace, RgbImage};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio over all channels, range 1.0. Identical images
/// give [`PSNR_CAP`]; finite values above the cap are clamped to it.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (a, b) = (unit(a), unit(b));
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Mean SSIM of the luma channels over the valid region of an 11×11 Gaussian
/// window (σ = 1.5). Images smaller than the window use the largest odd
/// window that fits, with the same σ.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    let ya = luma_plane(a);
    let yb = luma_plane(b);
    Ok(ssim_plane(&ya, &yb, w, h))
}

/// SSIM of two single-channel planes in `[0, 1]`.
pub fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize) -> f64 {
    assert_eq!(a.len(), width * height);
    assert_eq!(b.len(), width * height);
    let mut win = SSIM_WINDOW.min(width).min(height);
    if win % 2 == 0 {
        win -= 1;
    }
    let kernel = gaussian_kernel(win, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);

    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, width, height, &kernel);
    let mu_b = filter_valid(b, width, height, &kernel);
    let e_aa = filter_valid(&aa, width, height, &kernel);
    let e_bb = filter_valid(&bb, width, height, &kernel);
    let e_ab = filter_valid(&ab, width, height, &kernel);

    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean per-pixel CIEDE2000 after sRGB → Lab conversion.
pub fn image_delta_e(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (a, b) = (unit(a), unit(b));
    let n = a.width() * a.height();
    let sum: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let pa = &a.data()[3 * i..3 * i + 3];
            let pb = &b.data()[3 * i..3 * i + 3];
            let la = srgb_to_lab([pa[0] as f64, pa[1] as f64, pa[2] as f64]);
            let lb = srgb_to_lab([pb[0] as f64, pb[1] as f64, pb[2] as f64]);
            ciede2000(la, lb)
        })
        .sum();
    Ok(sum / n as f64)
}

fn unit(img: &RgbImage) -> std::borrow::Cow<'_, RgbImage> {
    if img.space() == ColorSpace::SrgbUnit {
        std::borrow::Cow::Borrowed(img)
    } else {
        std::borrow::Cow::Owned(img.to_space(ColorSpace::SrgbUnit))
    }
}

fn luma_plane(img: &RgbImage) -> Vec<f64> {
    unit(img)
        .pixels()
        .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
        .collect()
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable correlation keeping only positions where the window fits.
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &x[y * w..(y + 1) * w];
        for ox in 0..ow {
            rows[y * ow + ox] = k.iter().zip(&row[ox..ox + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * rows[(oy + j) * ow + ox])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_one_percent_is_twenty_db() {
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(0.0), PSNR_CAP);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k[0], k[10]);
        assert!(k[5] > k[4]);
    }

    #[test]
    fn small_images_shrink_the_window() {
        let a = RgbImage::from_fn(8, 9, |x, y| [(x as f32) / 8.0, (y as f32) / 9.0, 0.5]).unwrap();
        let s = ssim(&a, &a).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = RgbImage::filled(8, 8, [0.5; 3]).unwrap();
        let b = RgbImage::filled(9, 8, [0.5; 3]).unwrap();
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(image_delta_e(&a, &b).is_err());
    }
}

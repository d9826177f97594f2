//! Image-quality metrics, color science and dominant-color estimation.

pub mod assignment;
pub mod color;
pub mod palette;
pub mod quality;

pub use assignment::{assignment_cost, min_cost_assignment};
pub use color::{ciede2000, lab_to_srgb, srgb_hex, srgb_to_lab, LabColor};
pub use palette::{
    dominant_colors, dominant_colors_with, palette_match_delta, palette_match_delta_with,
    KMeansOptions, KMeansResult, MatchedColor, Palette, PaletteEntry, PaletteMatching,
    PaletteSpace, DEFAULT_K,
};
pub use quality::{image_delta_e, psnr, psnr_from_mse, ssim, ssim_plane, PSNR_CAP};

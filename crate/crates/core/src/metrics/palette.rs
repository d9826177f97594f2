//! Dominant colors by weighted k-means and palette correspondence.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assignment::min_cost_assignment;
use super::color::{ciede2000, srgb_hex, srgb_to_lab, LabColor};
use crate::error::{Error, Result};
use crate::image::{quantize, ColorSpace, RgbImage};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaletteSpace {
    Lab,
    /// sRGB scaled to `[0, 100]` per channel.
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaletteMatching {
    /// Minimum total CIEDE2000 over all pairings.
    Optimal,
    /// i-th heaviest test color against i-th heaviest reference color.
    WeightOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves further than this.
    pub tol: f64,
    pub space: PaletteSpace,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansOptions {
            k,
            seed,
            max_iter: 300,
            tol: 1e-4,
            space: PaletteSpace::Lab,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub lab: LabColor,
    /// sRGB in `[0, 1]`, from the clustered representation.
    pub srgb: [f64; 3],
    pub weight: f64,
}

impl PaletteEntry {
    pub fn hex(&self) -> String {
        srgb_hex(self.srgb)
    }
}

/// Colors sorted by weight, heaviest first. Weights sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<PaletteEntry>,
}

impl Palette {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub palette: Palette,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

pub fn dominant_colors(img: &RgbImage, k: usize, seed: u64) -> Result<Palette> {
    Ok(dominant_colors_with(img, &KMeansOptions::new(k, seed))?.palette)
}

/// Weighted k-means over the image's distinct 8-bit colors.
///
/// With fewer distinct colors than `k`, every distinct color becomes an
/// entry and the palette is padded with copies of the last (lightest)
/// entry at weight 0.
pub fn dominant_colors_with(img: &RgbImage, opts: &KMeansOptions) -> Result<KMeansResult> {
    if opts.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let img = img.to_space(ColorSpace::SrgbUnit);
    let mut counts: BTreeMap<[u8; 3], usize> = BTreeMap::new();
    for p in img.pixels() {
        *counts.entry(p.map(quantize)).or_default() += 1;
    }
    let total = (img.width() * img.height()) as f64;
    let colors: Vec<([f64; 3], f64)> = counts
        .into_iter()
        .map(|(c, n)| (c.map(|v| v as f64 / 255.0), n as f64))
        .collect();
    let points: Vec<[f64; 3]> = colors.iter().map(|(c, _)| to_space(*c, opts.space)).collect();
    let weights: Vec<f64> = colors.iter().map(|(_, w)| *w).collect();

    if points.len() <= opts.k {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|a, b| weights[*b].total_cmp(&weights[*a]).then(a.cmp(b)));
        let mut entries: Vec<PaletteEntry> = order
            .iter()
            .map(|&i| PaletteEntry {
                lab: srgb_to_lab(colors[i].0),
                srgb: colors[i].0,
                weight: weights[i] / total,
            })
            .collect();
        let last = *entries.last().expect("non-empty image");
        entries.resize(opts.k, PaletteEntry { weight: 0.0, ..last });
        return Ok(KMeansResult {
            palette: Palette { entries },
            wcss_history: vec![0.0],
            iterations: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centroids = kmeans_pp(&points, &weights, opts.k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            labels[i] = j;
            wcss += weights[i] * d;
        }
        history.push(wcss);
        let mut sums = vec![[0.0; 3]; opts.k];
        let mut mass = vec![0.0; opts.k];
        for (i, p) in points.iter().enumerate() {
            let j = labels[i];
            mass[j] += weights[i];
            for c in 0..3 {
                sums[j][c] += weights[i] * p[c];
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..opts.k {
            if mass[j] > 0.0 {
                let next = sums[j].map(|s| s / mass[j]);
                shift = shift.max(dist2(&next, &centroids[j]).sqrt());
                centroids[j] = next;
            }
        }
        if shift < opts.tol {
            break;
        }
    }
    let mut mass = vec![0.0; opts.k];
    for (i, p) in points.iter().enumerate() {
        let (j, _) = nearest(p, &centroids);
        mass[j] += weights[i];
    }
    let mut order: Vec<usize> = (0..opts.k).collect();
    order.sort_by(|a, b| mass[*b].total_cmp(&mass[*a]).then(a.cmp(b)));
    let entries = order
        .iter()
        .map(|&j| {
            let srgb = from_space(centroids[j], opts.space);
            let lab = match opts.space {
                PaletteSpace::Lab => LabColor::new(centroids[j][0], centroids[j][1], centroids[j][2]),
                PaletteSpace::Rgb => srgb_to_lab(srgb),
            };
            PaletteEntry {
                lab,
                srgb,
                weight: mass[j] / total,
            }
        })
        .collect();
    Ok(KMeansResult {
        palette: Palette { entries },
        wcss_history: history,
        iterations,
    })
}

fn to_space(rgb: [f64; 3], space: PaletteSpace) -> [f64; 3] {
    match space {
        PaletteSpace::Lab => srgb_to_lab(rgb).as_array(),
        PaletteSpace::Rgb => rgb.map(|c| c * 100.0),
    }
}

fn from_space(p: [f64; 3], space: PaletteSpace) -> [f64; 3] {
    match space {
        PaletteSpace::Lab => LabColor::new(p[0], p[1], p[2]).to_srgb(),
        PaletteSpace::Rgb => p.map(|c| c / 100.0),
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Index of the closest centroid (lowest index on ties) and its squared distance.
fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dist2(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_pp(points: &[[f64; 3]], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centroids = vec![points[weighted_pick(weights, rng)]];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d.iter().zip(weights).map(|(d, w)| d * w).collect();
        let idx = if scores.iter().sum::<f64>() > 0.0 {
            weighted_pick(&scores, rng)
        } else {
            weighted_pick(weights, rng)
        };
        let c = points[idx];
        for (di, p) in d.iter_mut().zip(points) {
            *di = di.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// One reference color and the test color matched to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedColor {
    pub reference_index: usize,
    pub test_index: usize,
    pub delta_e: f64,
    /// Weight of the reference color.
    pub weight: f64,
}

/// Pairs every reference color with a test color and reports their
/// CIEDE2000, ordered by reference weight (heaviest first).
pub fn palette_match_delta(test: &Palette, reference: &Palette) -> Result<Vec<MatchedColor>> {
    palette_match_delta_with(test, reference, PaletteMatching::Optimal)
}

pub fn palette_match_delta_with(
    test: &Palette,
    reference: &Palette,
    matching: PaletteMatching,
) -> Result<Vec<MatchedColor>> {
    let k = reference.len();
    if test.len() != k {
        return Err(Error::Shape(format!(
            "palettes differ in size: {} test vs {} reference colors",
            test.len(),
            k
        )));
    }
    let test_for_ref: Vec<usize> = match matching {
        PaletteMatching::Optimal => {
            let cost: Vec<Vec<f64>> = reference
                .entries
                .iter()
                .map(|r| test.entries.iter().map(|t| ciede2000(t.lab, r.lab)).collect())
                .collect();
            min_cost_assignment(&cost)
        }
        PaletteMatching::WeightOrder => (0..k).collect(),
    };
    let mut out: Vec<MatchedColor> = reference
        .entries
        .iter()
        .enumerate()
        .map(|(r, entry)| MatchedColor {
            reference_index: r,
            test_index: test_for_ref[r],
            delta_e: ciede2000(test.entries[test_for_ref[r]].lab, entry.lab),
            weight: entry.weight,
        })
        .collect();
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.reference_index.cmp(&b.reference_index)));
    Ok(out)
}

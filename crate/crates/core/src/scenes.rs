//! Seeded procedural photographs: smooth gradients, soft-edged shapes and
//! a little texture. Used for demos and hermetic tests in place of real photos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::RgbImage;

struct Blob {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    color: [f32; 3],
}

fn random_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [rng.random(), rng.random(), rng.random()].map(|v: f32| 0.1 + 0.8 * v)
}

pub fn procedural_scene(seed: u64, width: usize, height: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = random_color(&mut rng);
    let bottom = random_color(&mut rng);
    let blobs: Vec<Blob> = (0..rng.random_range(2..5))
        .map(|_| Blob {
            cx: rng.random(),
            cy: rng.random(),
            rx: rng.random_range(0.12..0.4),
            ry: rng.random_range(0.12..0.4),
            color: random_color(&mut rng),
        })
        .collect();
    let freq: [f32; 2] = [rng.random_range(4.0..12.0), rng.random_range(4.0..12.0)];
    let phase: f32 = rng.random_range(0.0..6.28);

    RgbImage::from_fn(width, height, |x, y| {
        let u = (x as f32 + 0.5) / width as f32;
        let v = (y as f32 + 0.5) / height as f32;
        let mut px = [0, 1, 2].map(|c| top[c] * (1.0 - v) + bottom[c] * v);
        for b in &blobs {
            let d = ((u - b.cx) / b.rx).powi(2) + ((v - b.cy) / b.ry).powi(2);
            let a = (1.0 - d).clamp(0.0, 0.25) * 4.0;
            for c in 0..3 {
                px[c] = px[c] * (1.0 - a) + b.color[c] * a;
            }
        }
        let tex = 0.04 * (freq[0] * u * 6.28 + phase).sin() * (freq[1] * v * 6.28).cos();
        px.map(|p| p + tex)
    })
    .expect("scene dimensions are valid")
}

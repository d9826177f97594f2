use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;
use unfilter_core::checkpoint::file_hash;
use unfilter_core::config::{apply_env, load_train_config, render_train_config, set, Profile};
use unfilter_core::dataset::{synthesize_dataset_with, SynthOptions};
use unfilter_core::eval::{evaluate_dir, EvalOptions};
use unfilter_core::metrics::{
    dominant_colors_with, palette_match_delta_with, KMeansOptions, PaletteMatching, PaletteSpace,
};
use unfilter_core::train::{Trainer, UnfilterModel};
use unfilter_core::{ColorSpace, RgbImage};

use crate::cli::{EvalArgs, GridArgs, MatchingArg, PaletteArgs, SpaceArg, SynthArgs, TrainArgs, UnfilterArgs};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "PNG"];

fn require_exists(path: &Path, what: &str) -> Result<()> {
    ensure!(path.exists(), "{what} {} does not exist", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    require_exists(&a.src, "source directory")?;
    let mut opts = SynthOptions::new((a.size[0], a.size[1]), a.seed);
    if let Some(f) = &a.filters {
        opts.filters = f.clone();
    }
    let manifest = synthesize_dataset_with(&a.src, &a.out, &opts)?;
    write_json(
        &a.out.join("synth_config.json"),
        &json!({
            "command": "synth",
            "src": a.src,
            "out": a.out,
            "size": [a.size[0], a.size[1]],
            "seed": a.seed,
            "filters": opts.filters,
        }),
    )?;
    println!(
        "{} images from {} sources ({} skipped) -> {}",
        manifest.entries.len(),
        manifest.image_ids().len(),
        manifest.skipped.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut trainer = if let Some(ckpt) = &a.resume {
        require_exists(ckpt, "checkpoint")?;
        ensure!(a.overrides.is_empty(), "--set cannot change a resumed run");
        Trainer::resume(ckpt, a.steps)?
    } else {
        let mut c = match &a.config {
            Some(p) => {
                require_exists(p, "config file")?;
                load_train_config(p)?
            }
            None => Profile::Desk.train_config(),
        };
        apply_env(&mut c)?;
        if let Some(d) = &a.dataset {
            c.dataset_dir = d.clone();
        }
        if let Some(o) = &a.out {
            c.output_dir = o.clone();
        }
        if let Some(s) = a.steps {
            c.steps = s;
        }
        for kv in &a.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            set(&mut c, k.trim(), v.trim())?;
        }
        require_exists(&c.dataset_dir, "dataset directory")?;
        Trainer::new(c)?
    };
    let out = trainer.config().output_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("run.conf"), render_train_config(trainer.config()))?;
    let every = a.log_every.max(1);
    let final_ckpt = trainer.run(|r| {
        if r.step % every == 0 {
            eprintln!(
                "step {:>6}  total {:.5}  tex {:.4}  sem {:.4}  glo {:+.4}  loc {:+.4}  gp {:.4}  cls {:.4}",
                r.step, r.total, r.tex, r.sem, r.glo, r.loc, r.gp, r.cls
            );
        }
    })?;
    println!("{}", final_ckpt.display());
    Ok(())
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e))
}

pub fn unfilter(a: UnfilterArgs) -> Result<()> {
    require_exists(&a.ckpt, "checkpoint")?;
    require_exists(&a.input, "input")?;
    let model = UnfilterModel::load(&a.ckpt)?;
    let jobs: Vec<(PathBuf, PathBuf)> = if a.input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&a.input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|f| {
                let stem = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let out = a.output.join(format!("{stem}.png"));
                (f, out)
            })
            .collect()
    } else {
        vec![(a.input.clone(), a.output.clone())]
    };
    let mut records = Vec::new();
    for (src, dst) in jobs {
        let img = RgbImage::load(&src)?;
        let (out, predicted) = model.unfilter(&img)?;
        out.save_png(&dst)?;
        let rec = json!({ "input": src, "output": dst, "predicted_filter": predicted });
        println!("{rec}");
        records.push(rec);
    }
    let echo_path = if a.input.is_dir() {
        a.output.join("unfilter.json")
    } else {
        a.output.with_extension("json")
    };
    write_json(
        &echo_path,
        &json!({
            "command": "unfilter",
            "checkpoint": a.ckpt,
            "checkpoint_sha256": file_hash(&a.ckpt)?,
            "model": model.model_config(),
            "outputs": records,
        }),
    )
}

pub fn eval(a: EvalArgs) -> Result<()> {
    require_exists(&a.ckpt, "checkpoint")?;
    require_exists(&a.dataset, "dataset directory")?;
    let model = UnfilterModel::load(&a.ckpt)?;
    let opts = EvalOptions {
        include_originals: !a.no_originals,
        filters: a.filters.clone(),
        max_images: a.max_images,
        ..EvalOptions::default()
    };
    let mut report = evaluate_dir(&model, &a.dataset, &opts)?;
    if let serde_json::Value::Object(m) = &mut report.config_echo {
        m.insert("checkpoint".into(), json!(a.ckpt));
        m.insert("checkpoint_sha256".into(), json!(file_hash(&a.ckpt)?));
    }
    report.save(&a.report)?;
    match &report.aggregates {
        Some(g) => println!(
            "{} images  SSIM {:.4}  PSNR {:.2} dB  ΔE {:.3}  (input: SSIM {:.4}  PSNR {:.2}  ΔE {:.3})",
            g.count, g.ssim, g.psnr, g.delta_e, g.baseline.ssim, g.baseline.psnr, g.baseline.delta_e
        ),
        None => println!("no images scored"),
    }
    if let Some(acc) = report.accuracy {
        println!("classification accuracy {:.2}%", 100.0 * acc);
        print!("{}", report.confusion_table());
    }
    if !report.skipped.is_empty() {
        eprintln!("{} items skipped (see report)", report.skipped.len());
    }
    Ok(())
}

pub fn palette(a: PaletteArgs) -> Result<()> {
    require_exists(&a.image, "image")?;
    ensure!(a.k >= 1, "--k must be at least 1");
    let mut opts = KMeansOptions::new(a.k, a.seed);
    opts.space = match a.space {
        SpaceArg::Lab => PaletteSpace::Lab,
        SpaceArg::Rgb => PaletteSpace::Rgb,
    };
    let img = RgbImage::load(&a.image)?;
    let palette = dominant_colors_with(&img, &opts)?.palette;
    let mut delta: Vec<Option<f64>> = vec![None; palette.len()];
    if let Some(r) = &a.reference {
        require_exists(r, "reference image")?;
        let reference = dominant_colors_with(&RgbImage::load(r)?, &opts)?.palette;
        let matching = match a.matching {
            MatchingArg::Optimal => PaletteMatching::Optimal,
            MatchingArg::WeightOrder => PaletteMatching::WeightOrder,
        };
        for m in palette_match_delta_with(&palette, &reference, matching)? {
            delta[m.test_index] = Some(m.delta_e);
        }
    }
    let entries: Vec<serde_json::Value> = palette
        .entries
        .iter()
        .zip(&delta)
        .map(|(e, d)| {
            json!({
                "lab": [e.lab.l, e.lab.a, e.lab.b],
                "srgb_hex": e.hex(),
                "weight": e.weight,
                "delta_e": d,
            })
        })
        .collect();
    let value = serde_json::Value::Array(entries);
    match &a.out {
        Some(p) => {
            write_json(p, &value)?;
            write_json(
                &p.with_extension("config.json"),
                &json!({
                    "command": "palette",
                    "image": a.image,
                    "reference": a.reference,
                    "k": a.k,
                    "seed": a.seed,
                    "space": opts.space,
                }),
            )?;
        }
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    Ok(())
}

/// `<root>/<filter>/<id>.png` → `<root>/original/<id>.png`.
fn dataset_original(filtered: &Path) -> Option<PathBuf> {
    let name = filtered.file_name()?;
    let root = filtered.parent()?.parent()?;
    let candidate = root.join("original").join(name);
    candidate.exists().then_some(candidate)
}

pub fn grid(a: GridArgs) -> Result<()> {
    require_exists(&a.ckpt, "checkpoint")?;
    if !a.originals.is_empty() && a.originals.len() != a.images.len() {
        bail!("{} images but {} --original paths", a.images.len(), a.originals.len());
    }
    let model = UnfilterModel::load(&a.ckpt)?;
    let s = model.model_config().image_size;
    let gap = (s / 32).max(2);
    let rows = a.images.len();
    let (w, h) = (3 * s + 2 * gap, rows * s + rows.saturating_sub(1) * gap);
    let mut canvas = vec![1.0f32; w * h * 3];
    let mut blit = |img: &RgbImage, col: usize, row: usize| {
        let (x0, y0) = (col * (s + gap), row * (s + gap));
        for y in 0..s {
            for x in 0..s {
                let p = img.pixel(x, y);
                let o = ((y0 + y) * w + x0 + x) * 3;
                canvas[o..o + 3].copy_from_slice(&p);
            }
        }
    };
    let mut used_originals = Vec::new();
    for (row, path) in a.images.iter().enumerate() {
        require_exists(path, "image")?;
        let filtered = RgbImage::load(path)?.resize(s, s)?;
        let original_path = match a.originals.get(row) {
            Some(p) => Some(p.clone()),
            None => dataset_original(path),
        };
        let original = match &original_path {
            Some(p) => {
                require_exists(p, "original")?;
                RgbImage::load(p)?.resize(s, s)?
            }
            None => RgbImage::filled(s, s, [0.5; 3])?,
        };
        let (unfiltered, predicted) = model.unfilter(&filtered)?;
        blit(&filtered, 0, row);
        blit(&original, 1, row);
        blit(&unfiltered.to_space(ColorSpace::SrgbUnit), 2, row);
        println!("{}\t{}", path.display(), predicted);
        used_originals.push(json!({ "image": path, "original": original_path, "predicted_filter": predicted }));
    }
    RgbImage::new(w, h, ColorSpace::SrgbUnit, canvas)?.save_png(&a.out)?;
    write_json(
        &a.out.with_extension("json"),
        &json!({
            "command": "grid",
            "checkpoint": a.ckpt,
            "checkpoint_sha256": file_hash(&a.ckpt)?,
            "columns": ["filtered", "original", "unfiltered"],
            "rows": used_originals,
        }),
    )
}

use std::fs;
use std::path::Path;

use assert_cmd::Command;
use unfilter_core::scenes::procedural_scene;
use unfilter_core::RgbImage;

fn unfilter() -> Command {
    let mut c = Command::cargo_bin("unfilter").unwrap();
    c.env_remove("UNFILTER_SEED");
    c
}

fn sources(dir: &Path, n: u64) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        procedural_scene(i, 36, 30).save_png(dir.join(format!("shot{i}.png"))).unwrap();
    }
}

fn count_pngs(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|d| fs::read_dir(d).unwrap().filter(|f| f.as_ref().unwrap().path().extension().is_some_and(|e| e == "png")).count())
        .sum()
}

#[test]
fn synth_writes_every_variant_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    sources(&tmp.path().join("src"), 3);
    let out = tmp.path().join("data");
    unfilter()
        .args(["synth", "--size", "16", "16"])
        .arg(tmp.path().join("src"))
        .arg(&out)
        .env("UNFILTER_SEED", "5")
        .assert()
        .success();
    assert_eq!(count_pngs(&out), 51);
    assert!(out.join("manifest.json").is_file());
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(out.join("synth_config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 5);
    assert_eq!(echo["filters"].as_array().unwrap().len(), 16);
}

#[test]
fn synth_seed_flag_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    sources(&tmp.path().join("src"), 1);
    for name in ["a", "b"] {
        unfilter()
            .args(["synth", "--size", "16", "16", "--seed", "3", "--filters", "Sutro,Amaro"])
            .arg(tmp.path().join("src"))
            .arg(tmp.path().join(name))
            .assert()
            .success();
    }
    for f in ["Sutro/shot0.png", "Amaro/shot0.png", "original/shot0.png", "manifest.json"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
    assert!(!tmp.path().join("a/Hudson").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    unfilter().args(["synth", "--no-such-flag"]).assert().code(2);
    unfilter().arg("frobnicate").assert().code(2);
    unfilter().args(["palette", "x.png", "--space", "hsv"]).assert().code(2);
}

#[test]
fn missing_inputs_exit_with_one_line_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = unfilter().arg("synth").arg(&missing).arg(tmp.path().join("o")).assert().code(1);
    let stderr = String::from_utf8(out.get_output().stderr.clone()).unwrap();
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1);

    unfilter().arg("eval").arg(tmp.path().join("ckpt.bin")).arg(tmp.path()).assert().code(1);
    unfilter().arg("palette").arg(&missing).assert().code(1);
}

#[test]
fn train_then_eval_unfilter_and_grid() {
    let tmp = tempfile::tempdir().unwrap();
    sources(&tmp.path().join("src"), 3);
    let data = tmp.path().join("data");
    unfilter().args(["synth", "--size", "32", "32"]).arg(tmp.path().join("src")).arg(&data).assert().success();
    let run = tmp.path().join("run");
    let conf = tmp.path().join("tiny.conf");
    fs::write(
        &conf,
        "batch_size = 2\ncheckpoint_every = 0\nimage_size = 32\nlocal_crop = 32\n\
         generator.channels = 8,8,16,16,16,16\ngenerator.style_hidden = 16\n\
         generator.classifier_hidden = 8\ndiscriminator.base_channels = 8\n",
    )
    .unwrap();
    let assert = unfilter()
        .args(["train", "--steps", "1", "--set", "filters=Lo-Fi"])
        .arg("--config")
        .arg(&conf)
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&run)
        .assert()
        .success();
    let ckpt = String::from_utf8(assert.get_output().stdout.clone()).unwrap().trim().to_string();
    assert!(Path::new(&ckpt).is_file());
    assert!(run.join("run.conf").is_file());
    assert_eq!(fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count(), 1);

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let report = tmp.path().join("report.json");
    unfilter().arg("eval").arg(&ckpt).arg(&empty).arg("--report").arg(&report).assert().success();
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["per_image"].as_array().unwrap().len(), 0);
    assert!(r["config_echo"]["checkpoint_sha256"].is_string());

    let report = tmp.path().join("full.json");
    unfilter()
        .arg("eval")
        .arg(&ckpt)
        .arg(&data)
        .args(["--filters", "Lo-Fi,Toaster"])
        .arg("--report")
        .arg(&report)
        .assert()
        .success();
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["per_image"].as_array().unwrap().len(), 6);

    let out = tmp.path().join("clean.png");
    unfilter().arg("unfilter").arg(&ckpt).arg(data.join("Lo-Fi/shot1.png")).arg(&out).assert().success();
    let img = RgbImage::load(&out).unwrap();
    assert_eq!((img.width(), img.height()), (32, 32));

    let grid = tmp.path().join("grid.png");
    unfilter()
        .arg("grid")
        .arg(&ckpt)
        .arg(data.join("Lo-Fi/shot0.png"))
        .arg(data.join("Toaster/shot2.png"))
        .arg("--out")
        .arg(&grid)
        .assert()
        .success();
    let g = RgbImage::load(&grid).unwrap();
    assert_eq!((g.width(), g.height()), (3 * 32 + 4, 2 * 32 + 2));
}

#[test]
fn palette_of_two_color_image() {
    let tmp = tempfile::tempdir().unwrap();
    let red = [200.0 / 255.0, 40.0 / 255.0, 40.0 / 255.0];
    let blue = [30.0 / 255.0, 60.0 / 255.0, 190.0 / 255.0];
    let img = RgbImage::from_fn(10, 10, |x, _| if x < 6 { red } else { blue }).unwrap();
    let path = tmp.path().join("two.png");
    img.save_png(&path).unwrap();
    let out = unfilter().arg("palette").arg(&path).args(["--k", "2"]).assert().success();
    let v: serde_json::Value = serde_json::from_slice(&out.get_output().stdout).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["srgb_hex"], "#c82828");
    assert_eq!(entries[1]["srgb_hex"], "#1e3cbe");
    assert!((entries[0]["weight"].as_f64().unwrap() - 0.6).abs() < 1e-6);

    let json = tmp.path().join("p.json");
    unfilter()
        .arg("palette")
        .arg(&path)
        .args(["--k", "2", "--ref"])
        .arg(&path)
        .arg("--out")
        .arg(&json)
        .assert()
        .success();
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    for e in v.as_array().unwrap() {
        assert_eq!(e["delta_e"].as_f64().unwrap(), 0.0);
    }
    assert!(tmp.path().join("p.config.json").is_file());
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use unfilter_core::checkpoint::sha256_hex;
use unfilter_core::dataset::{synthesize_dataset, DatasetManifest, MANIFEST_FILE};
use unfilter_core::filters::{
    apply_filter, apply_primitive, builtin_filter, mean_saturation, BlendMode, Channel,
    FilterPrimitive, FilterSpec, FILTER_NAMES,
};
use unfilter_core::scenes::procedural_scene;
use unfilter_core::{Error, RgbImage};

fn max_diff(a: &RgbImage, b: &RgbImage) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn neutral_primitives() -> Vec<FilterPrimitive> {
    vec![
        FilterPrimitive::Brightness { delta: 0.0 },
        FilterPrimitive::Contrast { gain: 1.0, pivot: 0.3 },
        FilterPrimitive::Saturation { gain: 1.0 },
        FilterPrimitive::HueRotate { degrees: 0.0 },
        FilterPrimitive::HueRotate { degrees: 360.0 },
        FilterPrimitive::ChannelCurve { channel: Channel::Green, points: vec![[0.0, 0.0], [1.0, 1.0]] },
        FilterPrimitive::Tint { rgb: [0.9, 0.1, 0.4], opacity: 0.0 },
        FilterPrimitive::Vignette { strength: 0.0, inner_radius: 0.2 },
        FilterPrimitive::Grain { sigma: 0.0, seed: 5 },
        FilterPrimitive::GaussianBlur { radius_px: 0.0 },
        FilterPrimitive::Overlay { rgb: [0.2, 0.7, 0.1], mode: BlendMode::Multiply, opacity: 0.0 },
    ]
}

#[test]
fn neutral_parameters_are_identities() {
    for seed in 0..5 {
        let img = procedural_scene(seed, 24, 20);
        for p in neutral_primitives() {
            let out = apply_primitive(&img, &p).unwrap();
            assert!(max_diff(&out, &img) <= 1e-6, "{p:?}: {}", max_diff(&out, &img));
        }
    }
}

#[test]
fn brightness_arithmetic_on_mid_gray() {
    let gray = RgbImage::filled(8, 8, [0.5; 3]).unwrap();
    let up = apply_primitive(&gray, &FilterPrimitive::Brightness { delta: 0.1 }).unwrap();
    assert!(up.data().iter().all(|v| (v - 0.6).abs() < 1e-6));
    let spec = FilterSpec {
        name: "Custom".into(),
        primitives: vec![FilterPrimitive::Brightness { delta: 0.1 }, FilterPrimitive::Brightness { delta: -0.1 }],
    };
    let back = apply_filter(&gray, &spec).unwrap();
    assert!(back.data().iter().all(|v| (v - 0.5).abs() < 1e-6));
}

#[test]
fn original_is_a_copy() {
    let img = procedural_scene(3, 16, 16);
    assert_eq!(apply_filter(&img, &FilterSpec::original()).unwrap(), img);
}

#[test]
fn willow_leaves_little_saturation() {
    let willow = builtin_filter("Willow").unwrap();
    for seed in 0..8 {
        let img = procedural_scene(seed, 48, 48);
        let out = apply_filter(&img, &willow).unwrap();
        let s = mean_saturation(&out);
        assert!(s < 0.15, "seed {seed}: {s}");
        assert!(s < mean_saturation(&img));
    }
}

#[test]
fn builtins_exist_and_unknown_names_fail() {
    for name in FILTER_NAMES {
        let spec = builtin_filter(name).unwrap();
        assert_eq!(spec.name, name);
        assert!(!spec.primitives.is_empty());
    }
    match builtin_filter("Gotham") {
        Err(Error::UnknownFilter { name, valid }) => {
            assert_eq!(name, "Gotham");
            assert!(valid.iter().any(|v| v == "X-Pro II"));
        }
        other => panic!("expected lookup error, got {other:?}"),
    }
}

#[test]
fn malformed_curve_is_rejected() {
    let img = procedural_scene(0, 8, 8);
    let bad = FilterPrimitive::ChannelCurve { channel: Channel::All, points: vec![[0.0, 0.0], [0.6, 0.2], [0.4, 0.5], [1.0, 1.0]] };
    let err = apply_primitive(&img, &bad).unwrap_err().to_string();
    assert!(err.contains("channel_curve"), "{err}");
}

fn primitive() -> impl Strategy<Value = FilterPrimitive> {
    let unit = 0.0f32..=1.0;
    let rgb = [unit.clone(), unit.clone(), unit.clone()];
    prop_oneof![
        (-1.0f32..1.0).prop_map(|delta| FilterPrimitive::Brightness { delta }),
        (0.0f32..3.0, unit.clone()).prop_map(|(gain, pivot)| FilterPrimitive::Contrast { gain, pivot }),
        (0.0f32..3.0).prop_map(|gain| FilterPrimitive::Saturation { gain }),
        (-720.0f32..720.0).prop_map(|degrees| FilterPrimitive::HueRotate { degrees }),
        (0.05f32..0.95, unit.clone()).prop_map(|(x, y)| FilterPrimitive::ChannelCurve {
            channel: Channel::Red,
            points: vec![[0.0, 0.1], [x, y], [1.0, 0.9]],
        }),
        (rgb.clone(), unit.clone()).prop_map(|(rgb, opacity)| FilterPrimitive::Tint { rgb, opacity }),
        (unit.clone(), unit.clone()).prop_map(|(strength, inner_radius)| FilterPrimitive::Vignette { strength, inner_radius }),
        (0.0f32..0.5, any::<u64>()).prop_map(|(sigma, seed)| FilterPrimitive::Grain { sigma, seed }),
        (0.0f32..3.0).prop_map(|radius_px| FilterPrimitive::GaussianBlur { radius_px }),
        (rgb, 0usize..3, unit).prop_map(|(rgb, m, opacity)| FilterPrimitive::Overlay {
            rgb,
            mode: [BlendMode::Screen, BlendMode::Multiply, BlendMode::Softlight][m],
            opacity,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outputs_stay_in_range_and_are_deterministic(seed in any::<u64>(), ps in prop::collection::vec(primitive(), 1..4)) {
        let img = procedural_scene(seed, 12, 10);
        let spec = FilterSpec { name: "Random".into(), primitives: ps };
        let a = apply_filter(&img, &spec).unwrap();
        prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a, apply_filter(&img, &spec).unwrap());
    }
}

fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for dir in fs::read_dir(root).unwrap() {
        let dir = dir.unwrap().path();
        if dir.is_dir() {
            for f in fs::read_dir(&dir).unwrap() {
                let f = f.unwrap().path();
                let rel = f.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, sha256_hex(&fs::read(&f).unwrap()));
            }
        } else {
            let rel = dir.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(rel, sha256_hex(&fs::read(&dir).unwrap()));
        }
    }
    out
}

#[test]
fn synthesis_counts_layout_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    fs::create_dir_all(&src).unwrap();
    for i in 0..3 {
        procedural_scene(i, 30 + i as usize, 25).save_png(src.join(format!("photo{i}.png"))).unwrap();
    }
    fs::write(src.join("broken.jpg"), b"definitely not a jpeg").unwrap();

    let m = synthesize_dataset(&src, tmp.path().join("a"), (16, 20), 9).unwrap();
    assert_eq!(m.entries.len(), 51);
    assert_eq!(m.skipped.len(), 1);
    assert_eq!(m.image_size, [16, 20]);
    let hashes = tree_hashes(&tmp.path().join("a"));
    assert_eq!(hashes.keys().filter(|k| k.ends_with(".png")).count(), 51);
    assert!(hashes.contains_key(MANIFEST_FILE));
    for name in FILTER_NAMES.iter().chain(["original"].iter()) {
        assert!(tmp.path().join("a").join(name).join("photo0.png").is_file(), "{name}");
    }
    let png = RgbImage::load(tmp.path().join("a/Toaster/photo2.png")).unwrap();
    assert_eq!((png.width(), png.height()), (20, 16));

    let loaded = DatasetManifest::load(tmp.path().join("a")).unwrap();
    loaded.validate().unwrap();
    assert_eq!(loaded, m);

    synthesize_dataset(&src, tmp.path().join("b"), (16, 20), 9).unwrap();
    assert_eq!(hashes, tree_hashes(&tmp.path().join("b")));

    synthesize_dataset(&src, tmp.path().join("c"), (16, 20), 10).unwrap();
    assert_ne!(hashes, tree_hashes(&tmp.path().join("c")));
}

#[test]
fn single_image_gives_seventeen_files() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    fs::create_dir_all(&src).unwrap();
    procedural_scene(1, 20, 20).save_png(src.join("only.png")).unwrap();
    let m = synthesize_dataset(&src, tmp.path().join("out"), (8, 8), 0).unwrap();
    assert_eq!(m.entries.len(), 17);
}

#[test]
fn empty_source_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("src")).unwrap();
    fs::write(tmp.path().join("src/notes.txt"), "hello").unwrap();
    assert!(synthesize_dataset(tmp.path().join("src"), tmp.path().join("out"), (8, 8), 0).is_err());
}

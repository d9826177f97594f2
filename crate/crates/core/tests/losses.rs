use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};
use unfilter_core::losses::{
    classification_loss, critic_loss, generator_adv_loss, gradient_penalty, idmrf_from_features,
    scalar, semantic_consistency, semantic_from_features, texture_idmrf, AdversarialForm,
    IdMrfParams,
};
use unfilter_core::model::{Backbone, BackboneConfig};

fn random(shape: &[i64], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: i64 = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_slice(&v).view(shape)
}

fn values(t: &Tensor) -> Vec<f64> {
    Vec::<f64>::try_from(t.detach().to_kind(Kind::Double).flatten(0, -1)).unwrap()
}

/// Central finite differences of `f` at `x`, one coordinate at a time.
fn numeric_grad(x: &Tensor, h: f64, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
    let base = values(x);
    let shape = x.size();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = f(&Tensor::from_slice(&plus).view(shape.as_slice()));
            let fm = f(&Tensor::from_slice(&minus).view(shape.as_slice()));
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn analytic_grad(x: &Tensor, f: &dyn Fn(&Tensor) -> Tensor) -> Vec<f64> {
    let x = x.detach().set_requires_grad(true);
    f(&x).backward();
    values(&x.grad())
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / norm
}

#[test]
fn semantic_gradient_matches_finite_differences() {
    let target = random(&[1, 2, 4, 4], 1);
    let x = random(&[1, 2, 4, 4], 2);
    let f = |x: &Tensor| semantic_from_features(&[x.shallow_clone()], &[target.shallow_clone()]).unwrap();
    let a = analytic_grad(&x, &f);
    let n = numeric_grad(&x, 1e-3, &|x| scalar(&f(x)));
    assert!(rel_error(&a, &n) < 1e-2, "{}", rel_error(&a, &n));
}

#[test]
fn idmrf_gradient_matches_finite_differences() {
    let p = IdMrfParams::default();
    let target = random(&[1, 2, 4, 4], 3).relu() + 0.1;
    let x = random(&[1, 2, 4, 4], 4).relu() + 0.1;
    let f = |x: &Tensor| idmrf_from_features(x, &target, &p).unwrap();
    let a = analytic_grad(&x, &f);
    let n = numeric_grad(&x, 1e-3, &|x| scalar(&f(x)));
    assert!(rel_error(&a, &n) < 1e-2, "{}", rel_error(&a, &n));
}

#[test]
fn classification_gradient_matches_finite_differences() {
    let logits = random(&[3, 17], 14) * 2.0;
    let labels = Tensor::from_slice(&[0i64, 5, 16]);
    let f = |x: &Tensor| classification_loss(x, &labels).unwrap();
    let a = analytic_grad(&logits, &f);
    let n = numeric_grad(&logits, 1e-3, &|x| scalar(&f(x)));
    assert!(rel_error(&a, &n) < 1e-2, "{}", rel_error(&a, &n));
}

#[test]
fn backbone_receives_no_gradient() {
    let bb = Backbone::new(&BackboneConfig::default()).unwrap();
    tch::manual_seed(3);
    let out = Tensor::rand([2, 3, 16, 16], (Kind::Float, tch::Device::Cpu)).set_requires_grad(true);
    let gt = Tensor::rand([2, 3, 16, 16], (Kind::Float, tch::Device::Cpu));
    let loss = semantic_consistency(&bb, &out, &gt).unwrap()
        + texture_idmrf(&bb, &out, &gt, &IdMrfParams::default()).unwrap();
    assert!(scalar(&loss) > 0.0);
    loss.backward();
    assert!(out.grad().abs().sum(Kind::Double).double_value(&[]) > 0.0);
    for (name, p) in bb.var_store().variables() {
        assert!(!p.requires_grad(), "{name}");
        assert!(!p.grad().defined(), "{name}");
    }
}

/// Toy critic `D(x) = Σ softplus(conv3x3(x; w))` per sample.
fn toy_critic(x: &Tensor, w: &Tensor) -> Tensor {
    x.conv2d(w, None::<Tensor>, [1, 1], [1, 1], [1, 1], 1)
        .softplus()
        .sum_dim_intlist([1i64, 2, 3].as_slice(), false, None::<Kind>)
}

#[test]
fn adversarial_gradients_match_finite_differences() {
    let w = random(&[1, 2, 3, 3], 5) * 0.5;
    let real = random(&[2, 2, 4, 4], 6);
    let fake = random(&[2, 2, 4, 4], 7);
    for form in [AdversarialForm::WganGp, AdversarialForm::Hinge] {
        // critic parameters
        let f = |w: &Tensor| critic_loss(&toy_critic(&real, w), &toy_critic(&fake, w), form);
        let a = analytic_grad(&w, &f);
        let n = numeric_grad(&w, 1e-3, &|w| scalar(&f(w)));
        assert!(rel_error(&a, &n) < 1e-2, "{form:?} critic: {}", rel_error(&a, &n));
    }
    // generator side, through the fake images
    let g = |x: &Tensor| generator_adv_loss(&toy_critic(x, &w));
    let a = analytic_grad(&fake, &g);
    let n = numeric_grad(&fake, 1e-3, &|x| scalar(&g(x)));
    assert!(rel_error(&a, &n) < 1e-2, "generator: {}", rel_error(&a, &n));
}

#[test]
fn gradient_penalty_gradient_matches_finite_differences() {
    let w = random(&[1, 2, 3, 3], 8) * 0.5;
    let real = random(&[2, 2, 4, 4], 9);
    let fake = random(&[2, 2, 4, 4], 10);
    let alpha = Tensor::from_slice(&[0.3f64, 0.8]);
    let f = |w: &Tensor| gradient_penalty(|x| Ok(toy_critic(x, w)), &real, &fake, &alpha).unwrap();
    let a = analytic_grad(&w, &f);
    let n = numeric_grad(&w, 1e-3, &|w| scalar(&f(w)));
    assert!(scalar(&f(&w)) > 0.0);
    assert!(rel_error(&a, &n) < 1e-2, "{}", rel_error(&a, &n));
}

/// Direct nested-loop evaluation of the ID-MRF definition.
fn idmrf_oracle(gen: &[Vec<f64>], tar: &[Vec<f64>], h: f64, eps: f64) -> f64 {
    let c = tar[0].len();
    let mean: Vec<f64> = (0..c)
        .map(|k| tar.iter().map(|t| t[k]).sum::<f64>() / tar.len() as f64)
        .collect();
    let norm = |v: &Vec<f64>| {
        let centered: Vec<f64> = v.iter().zip(&mean).map(|(a, m)| a - m).collect();
        let n = centered.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        centered.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let g: Vec<Vec<f64>> = gen.iter().map(norm).collect();
    let t: Vec<Vec<f64>> = tar.iter().map(norm).collect();
    let mut best = vec![0.0f64; t.len()];
    for gs in &g {
        let d: Vec<f64> = t
            .iter()
            .map(|tt| (1.0 - gs.iter().zip(tt).map(|(a, b)| a * b).sum::<f64>()) / 2.0)
            .collect();
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = d.iter().map(|di| ((1.0 - di / (dmin + eps)) / h).exp()).collect();
        let z: f64 = w.iter().sum();
        for (b, wi) in best.iter_mut().zip(&w) {
            *b = b.max(wi / z);
        }
    }
    -(best.iter().sum::<f64>() / best.len() as f64).ln()
}

fn patches(t: &Tensor) -> Vec<Vec<f64>> {
    let s = t.size();
    let (c, hw) = (s[1] as usize, (s[2] * s[3]) as usize);
    let v = values(t);
    (0..hw).map(|p| (0..c).map(|k| v[k * hw + p]).collect()).collect()
}

#[test]
fn idmrf_matches_nested_loop_oracle() {
    let p = IdMrfParams::default();
    for seed in 0..5 {
        let g = random(&[1, 3, 3, 4], 100 + seed);
        let t = random(&[1, 3, 3, 4], 200 + seed);
        let got = scalar(&idmrf_from_features(&g, &t, &p).unwrap());
        let want = idmrf_oracle(&patches(&g), &patches(&t), p.bandwidth, p.eps);
        assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn idmrf_prefers_self_match() {
    let p = IdMrfParams::default();
    let t = random(&[1, 4, 4, 4], 11);
    let other = random(&[1, 4, 4, 4], 12);
    let same = scalar(&idmrf_from_features(&t, &t, &p).unwrap());
    let diff = scalar(&idmrf_from_features(&other, &t, &p).unwrap());
    assert!(same < diff, "{same} vs {diff}");
}

#[test]
fn semantic_is_zero_on_identical_features() {
    let t = random(&[2, 3, 4, 4], 13);
    assert_eq!(scalar(&semantic_from_features(&[t.shallow_clone()], &[t.shallow_clone()]).unwrap()), 0.0);
    assert!(semantic_from_features(&[t.shallow_clone()], &[]).is_err());
}

#[test]
fn wgan_critic_loss_is_fake_minus_real() {
    let real = Tensor::from_slice(&[1.0f64, 3.0]).view([2, 1, 1, 1]);
    let fake = Tensor::from_slice(&[0.5f64, -0.5]).view([2, 1, 1, 1]);
    assert_eq!(scalar(&critic_loss(&real, &fake, AdversarialForm::WganGp)), -2.0);
    // hinge: mean(relu(1 - [1,3])) + mean(relu(1 + [.5,-.5])) = 0 + 1
    assert_eq!(scalar(&critic_loss(&real, &fake, AdversarialForm::Hinge)), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn idmrf_is_finite_and_nonnegative(seed in any::<u64>()) {
        let p = IdMrfParams::default();
        let g = random(&[2, 3, 3, 3], seed);
        let t = random(&[2, 3, 3, 3], seed ^ 0xABCD);
        let v = scalar(&idmrf_from_features(&g, &t, &p).unwrap());
        prop_assert!(v.is_finite());
        prop_assert!(v >= -1e-12);
    }

    #[test]
    fn semantic_is_symmetric(seed in any::<u64>()) {
        let a = random(&[1, 2, 3, 3], seed);
        let b = random(&[1, 2, 3, 3], seed.wrapping_add(1));
        let ab = scalar(&semantic_from_features(&[a.shallow_clone()], &[b.shallow_clone()]).unwrap());
        let ba = scalar(&semantic_from_features(&[b], &[a]).unwrap());
        prop_assert!((ab - ba).abs() < 1e-15);
    }
}

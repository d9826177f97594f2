//! Training objective: ID-MRF texture, backbone-feature semantic consistency,
//! and a two-critic adversarial loss with gradient penalty and auxiliary
//! filter classification.
//!
//! ```text
//! adv   = glo + loc + λ_gp·gp + λ_cls·cls
//! total = λ_tex·tex + λ_sem·sem + λ_adv·adv
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tch::{Kind, Reduction, Tensor};

use crate::error::{Error, Result};
use crate::model::{Backbone, Discriminators, LayerTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub tex: f64,
    pub sem: f64,
    pub adv: f64,
    pub gp: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            tex: 1e-3,
            sem: 1e-4,
            adv: 1e-3,
            gp: 10.0,
            cls: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("loss.tex", self.tex),
            ("loss.sem", self.sem),
            ("loss.adv", self.adv),
            ("loss.gp", self.gp),
            ("loss.cls", self.cls),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Wasserstein critic: the critic maximizes `D(real) - D(fake)`.
    WganGp,
    /// Hinge critic: `relu(1 - D(real)) + relu(1 + D(fake))`.
    Hinge,
}

/// ID-MRF hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdMrfParams {
    pub bandwidth: f64,
    pub eps: f64,
}

impl Default for IdMrfParams {
    fn default() -> Self {
        IdMrfParams {
            bandwidth: 0.5,
            eps: 1e-5,
        }
    }
}

/// Scalar values of every objective term for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub tex: f64,
    pub sem: f64,
    pub adv: f64,
    pub glo: f64,
    pub loc: f64,
    pub gp: f64,
    pub cls: f64,
    pub total: f64,
}

/// Unweighted component values fed to [`total_loss`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    pub tex: f64,
    pub sem: f64,
    pub glo: f64,
    pub loc: f64,
    pub gp: f64,
    pub cls: f64,
}

/// Combines components with the loss weights, rejecting non-finite terms.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<LossBreakdown> {
    for (name, v) in [
        ("tex", c.tex),
        ("sem", c.sem),
        ("glo", c.glo),
        ("loc", c.loc),
        ("gp", c.gp),
        ("cls", c.cls),
    ] {
        if !v.is_finite() {
            return Err(Error::Divergence {
                step: 0,
                component: name,
                last_checkpoint: None,
            });
        }
    }
    let adv = c.glo + c.loc + w.gp * c.gp + w.cls * c.cls;
    Ok(LossBreakdown {
        tex: c.tex,
        sem: c.sem,
        adv,
        glo: c.glo,
        loc: c.loc,
        gp: c.gp,
        cls: c.cls,
        total: w.tex * c.tex + w.sem * c.sem + w.adv * adv,
    })
}

/// `Σ_p mean((Φ_p(out) - Φ_p(gt))²)` over the given feature maps, averaged
/// over the batch.
pub fn semantic_from_features(out: &[Tensor], gt: &[Tensor]) -> Result<Tensor> {
    if out.len() != gt.len() || out.is_empty() {
        return Err(Error::Shape(format!(
            "{} output vs {} target feature maps",
            out.len(),
            gt.len()
        )));
    }
    let mut total: Option<Tensor> = None;
    for (a, b) in out.iter().zip(gt) {
        if a.size() != b.size() {
            return Err(Error::Shape(format!("{:?} vs {:?}", a.size(), b.size())));
        }
        let term = a.mse_loss(b, Reduction::Mean);
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Semantic consistency between two N×3×H×W batches in `[0, 1]`.
/// Gradients flow into `out` only.
pub fn semantic_consistency(backbone: &Backbone, out: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_pair(out, gt)?;
    let tags = backbone.config().semantic_layers.clone();
    let gt_feats = tch::no_grad(|| backbone.features(gt, &tags))?;
    let out_feats = backbone.features(out, &tags)?;
    let (a, b) = paired(&out_feats, &gt_feats, &tags);
    semantic_from_features(&a, &b)
}

/// ID-MRF over 1×1 feature patches of N×C×H×W maps.
///
/// Features are centered on the target's spatial mean and L2-normalized over
/// channels. For each output patch `s` and target patch `t`:
/// `d = (1 - cos)/2`, `d̃ = d / (min_t d + eps)`, affinity
/// `exp((1 - d̃)/h)` normalized over `t`. The loss is
/// `-log(mean_t max_s affinity)`, averaged over the batch.
pub fn idmrf_from_features(gen: &Tensor, tar: &Tensor, params: &IdMrfParams) -> Result<Tensor> {
    check_pair(gen, tar)?;
    let s = gen.size();
    let (n, c) = (s[0], s[1]);
    let gen = gen.reshape([n, c, -1]);
    let tar = tar.reshape([n, c, -1]);
    let mean = tar.mean_dim([2i64].as_slice(), true, None::<Kind>);
    let normalize = |x: Tensor| {
        let norm = x
            .square()
            .sum_dim_intlist([1i64].as_slice(), true, None::<Kind>)
            .clamp_min(1e-16)
            .sqrt();
        x / norm
    };
    let gen = normalize(gen - &mean);
    let tar = normalize(tar - &mean);
    // N × P_out × P_target
    let cos = gen.transpose(1, 2).bmm(&tar);
    let dist = (cos.neg() + 1.0) * 0.5;
    let rel = &dist / (dist.amin([2i64].as_slice(), true) + params.eps);
    let affinity = ((rel.neg() + 1.0) / params.bandwidth).softmax(2, None::<Kind>);
    let best = affinity.amax([1i64].as_slice(), false);
    Ok(best
        .mean_dim([1i64].as_slice(), false, None::<Kind>)
        .log()
        .neg()
        .mean(None::<Kind>))
}

/// ID-MRF texture consistency between two N×3×H×W batches in `[0, 1]`.
pub fn texture_idmrf(
    backbone: &Backbone,
    out: &Tensor,
    gt: &Tensor,
    params: &IdMrfParams,
) -> Result<Tensor> {
    check_pair(out, gt)?;
    let tag = backbone.config().texture_layer;
    let gt_feats = tch::no_grad(|| backbone.features(gt, &[tag]))?;
    let out_feats = backbone.features(out, &[tag])?;
    idmrf_from_features(&out_feats[&tag], &gt_feats[&tag], params)
}

/// Critic objective to minimize for one discriminator.
pub fn critic_loss(real_scores: &Tensor, fake_scores: &Tensor, form: AdversarialForm) -> Tensor {
    match form {
        AdversarialForm::WganGp => {
            fake_scores.mean(None::<Kind>) - real_scores.mean(None::<Kind>)
        }
        AdversarialForm::Hinge => {
            (real_scores.neg() + 1.0).relu().mean(None::<Kind>)
                + (fake_scores + 1.0).relu().mean(None::<Kind>)
        }
    }
}

/// Generator objective to minimize against one discriminator.
pub fn generator_adv_loss(fake_scores: &Tensor) -> Tensor {
    fake_scores.mean(None::<Kind>).neg()
}

/// `mean((‖∇_x̂ D(x̂)‖₂ - 1)²)` at `x̂ = α·real + (1-α)·fake`, one α per sample.
/// The result stays differentiable with respect to the critic's parameters.
pub fn gradient_penalty(
    critic: impl Fn(&Tensor) -> Result<Tensor>,
    real: &Tensor,
    fake: &Tensor,
    alpha: &Tensor,
) -> Result<Tensor> {
    check_pair(real, fake)?;
    let n = real.size()[0];
    if alpha.size() != [n] {
        return Err(Error::Shape(format!(
            "alpha must have {n} entries, got {:?}",
            alpha.size()
        )));
    }
    let a = alpha.to_kind(real.kind()).view([n, 1, 1, 1]);
    let interp = (&a * real.detach() + (a.neg() + 1.0) * fake.detach()).set_requires_grad(true);
    let scores = critic(&interp)?;
    let grads = Tensor::run_backward(&[scores.sum(None::<Kind>)], &[&interp], true, true);
    let norms = grads[0]
        .reshape([n, -1])
        .square()
        .sum_dim_intlist([1i64].as_slice(), false, None::<Kind>)
        .clamp_min(1e-24)
        .sqrt();
    Ok((norms - 1.0).square().mean(None::<Kind>))
}

/// Cross-entropy of classifier logits against class indices.
pub fn classification_loss(logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let s = logits.size();
    if s.len() != 2 || labels.size() != [s[0]] {
        return Err(Error::Shape(format!(
            "logits {:?} and labels {:?} disagree on batch size",
            s,
            labels.size()
        )));
    }
    Ok(logits.cross_entropy_for_logits(&labels.to_kind(Kind::Int64)))
}

/// Top-left corners of the local-critic crops, one per sample.
pub type CropOrigins = [(i64, i64)];

/// Cuts one `size`×`size` crop per sample at the given origins.
pub fn crop_batch(x: &Tensor, origins: &CropOrigins, size: i64) -> Result<Tensor> {
    let s = x.size();
    if s.len() != 4 || origins.len() as i64 != s[0] {
        return Err(Error::Shape(format!(
            "{} crop origins for batch {:?}",
            origins.len(),
            s
        )));
    }
    let crops: Vec<Tensor> = origins
        .iter()
        .enumerate()
        .map(|(i, &(y, x0))| {
            if y < 0 || x0 < 0 || y + size > s[2] || x0 + size > s[3] {
                return Err(Error::Shape(format!(
                    "crop at ({y}, {x0}) of size {size} exceeds {:?}",
                    s
                )));
            }
            Ok(x.get(i as i64).narrow(1, y, size).narrow(2, x0, size))
        })
        .collect::<Result<_>>()?;
    Ok(Tensor::stack(&crops, 0))
}

/// All adversarial terms for one batch.
#[derive(Debug)]
pub struct AdversarialTerms {
    /// Generator-side `-(mean D_glo(fake) + mean D_loc(crop(fake)))`.
    pub gen: Tensor,
    pub gen_glo: Tensor,
    pub gen_loc: Tensor,
    /// Critic objectives (fake detached).
    pub disc_glo: Tensor,
    pub disc_loc: Tensor,
    /// Gradient penalty summed over both critics.
    pub gp: Tensor,
    pub cls: Tensor,
}

/// Inputs of [`adversarial_losses`].
pub struct AdversarialBatch<'a> {
    /// Ground-truth originals, N×3×H×W in `[-1, 1]`.
    pub real: &'a Tensor,
    /// Generator outputs, N×3×H×W in `[-1, 1]`.
    pub fake: &'a Tensor,
    pub logits: &'a Tensor,
    pub labels: &'a Tensor,
    pub crops: &'a CropOrigins,
    /// Interpolation weights for the gradient penalty, one per sample.
    pub alpha: &'a Tensor,
}

pub fn adversarial_losses(
    discs: &Discriminators,
    batch: &AdversarialBatch<'_>,
    form: AdversarialForm,
) -> Result<AdversarialTerms> {
    let n = batch.real.size()[0];
    if batch.labels.size() != [n] {
        return Err(Error::Shape(format!(
            "{} images but labels {:?}",
            n,
            batch.labels.size()
        )));
    }
    let crop = discs.local.input_size() as i64;
    let real_crop = crop_batch(batch.real, batch.crops, crop)?;
    let fake_crop = crop_batch(batch.fake, batch.crops, crop)?;
    let fake_d = batch.fake.detach();
    let fake_crop_d = fake_crop.detach();

    let disc_glo = critic_loss(
        &discs.discriminate_global(batch.real)?,
        &discs.discriminate_global(&fake_d)?,
        form,
    );
    let disc_loc = critic_loss(
        &discs.discriminate_local(&real_crop)?,
        &discs.discriminate_local(&fake_crop_d)?,
        form,
    );
    let gp = gradient_penalty(|x| discs.discriminate_global(x), batch.real, &fake_d, batch.alpha)?
        + gradient_penalty(|x| discs.discriminate_local(x), &real_crop, &fake_crop_d, batch.alpha)?;
    let gen_glo = generator_adv_loss(&discs.discriminate_global(batch.fake)?);
    let gen_loc = generator_adv_loss(&discs.discriminate_local(&fake_crop)?);
    let cls = classification_loss(batch.logits, batch.labels)?;
    Ok(AdversarialTerms {
        gen: &gen_glo + &gen_loc,
        gen_glo,
        gen_loc,
        disc_glo,
        disc_loc,
        gp,
        cls,
    })
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.size() != b.size() || a.dim() != 4 {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.size(), b.size())));
    }
    Ok(())
}

fn paired(
    out: &BTreeMap<LayerTag, Tensor>,
    gt: &BTreeMap<LayerTag, Tensor>,
    tags: &[LayerTag],
) -> (Vec<Tensor>, Vec<Tensor>) {
    tags.iter()
        .map(|t| (out[t].shallow_clone(), gt[t].shallow_clone()))
        .unzip()
}

/// Scalar value of a 0-dim tensor.
pub fn scalar(t: &Tensor) -> f64 {
    t.double_value(&[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_with_default_weights() {
        let c = LossComponents {
            tex: 1.0,
            sem: 1.0,
            ..Default::default()
        };
        // adv = glo + loc + λ_gp gp + λ_cls cls = 1 via glo
        let c = LossComponents { glo: 1.0, ..c };
        let b = total_loss(&c, &LossWeights::default()).unwrap();
        assert!((b.total - 2.1e-3).abs() < 1e-15);
        assert_eq!(total_loss(&LossComponents::default(), &LossWeights::default()).unwrap().total, 0.0);
    }

    #[test]
    fn adv_decomposes() {
        let c = LossComponents {
            glo: 0.5,
            loc: -0.25,
            gp: 0.1,
            cls: 2.0,
            ..Default::default()
        };
        let b = total_loss(&c, &LossWeights::default()).unwrap();
        assert!((b.adv - (0.5 - 0.25 + 10.0 * 0.1 + 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn doubling_sem_weight_doubles_its_contribution() {
        let c = LossComponents {
            tex: 0.3,
            sem: 0.7,
            glo: 0.2,
            ..Default::default()
        };
        let w = LossWeights::default();
        let w2 = LossWeights { sem: 2.0 * w.sem, ..w };
        let a = total_loss(&c, &w).unwrap().total;
        let b = total_loss(&c, &w2).unwrap().total;
        assert!((b - a - w.sem * 0.7).abs() < 1e-15);
    }

    #[test]
    fn non_finite_component_is_named() {
        let c = LossComponents {
            gp: f64::NAN,
            ..Default::default()
        };
        match total_loss(&c, &LossWeights::default()) {
            Err(Error::Divergence { component, .. }) => assert_eq!(component, "gp"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn equal_critic_scores_cancel() {
        let s = Tensor::from_slice(&[0.3f32, -1.2, 2.0, 0.0]).view([1, 1, 2, 2]);
        assert_eq!(scalar(&critic_loss(&s, &s, AdversarialForm::WganGp)), 0.0);
    }

    #[test]
    fn unit_gradient_critic_has_zero_penalty() {
        // D(x) = Σ x·w with ‖w‖ = 1, so ‖∇D‖ = 1 everywhere.
        let n = 3;
        let w = Tensor::ones([1, 3, 2, 2], (Kind::Double, tch::Device::Cpu)) / 12f64.sqrt();
        let critic = |x: &Tensor| Ok((x * &w).sum_dim_intlist([1i64, 2, 3].as_slice(), false, None::<Kind>));
        let real = Tensor::ones([n, 3, 2, 2], (Kind::Double, tch::Device::Cpu));
        let fake = real.zeros_like();
        let alpha = Tensor::from_slice(&[0.1f64, 0.5, 0.9]);
        let gp = gradient_penalty(critic, &real, &fake, &alpha).unwrap();
        assert!(scalar(&gp).abs() < 1e-20);
    }

    #[test]
    fn confident_correct_logits_give_near_zero_cls() {
        let mut logits = vec![0.0f32; 2 * 17];
        logits[3] = 50.0;
        logits[17 + 16] = 50.0;
        let logits = Tensor::from_slice(&logits).view([2, 17]);
        let labels = Tensor::from_slice(&[3i64, 16]);
        assert!(scalar(&classification_loss(&logits, &labels).unwrap()) < 1e-12);
        assert!(classification_loss(&logits, &Tensor::from_slice(&[1i64])).is_err());
    }

    #[test]
    fn crops_respect_bounds() {
        let x = Tensor::arange(2 * 3 * 8 * 8, (Kind::Float, tch::Device::Cpu)).view([2, 3, 8, 8]);
        let c = crop_batch(&x, &[(0, 0), (4, 4)], 4).unwrap();
        assert_eq!(c.size(), vec![2, 3, 4, 4]);
        assert_eq!(c.double_value(&[1, 0, 0, 0]), x.double_value(&[1, 0, 4, 4]));
        assert!(crop_batch(&x, &[(0, 0), (5, 0)], 4).is_err());
    }
}

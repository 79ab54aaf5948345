//! Training objectives: adversarial losses, gram-matrix style loss,
//! masked content loss, plain L2, and the weighted totals.
//!
//! Conventions: probability maps stay strictly inside (0,1) and every log
//! is epsilon-guarded; norms from the objective definitions are reduced
//! as means so the weights stay resolution-independent.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::extractor::FeatureExtractor;
use docbin_tensor::{gram, Tensor};

pub const LOG_EPS: f32 = 1e-8;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_s: f32,
    pub lambda_c: f32,
    pub lambda_l2: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_s: 0.5,
            lambda_c: 10.0,
            lambda_l2: 100.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_s < 0.0 || self.lambda_c < 0.0 || self.lambda_l2 < 0.0 {
            return Err(CoreError::Data("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_same_shape(what: &'static str, a: &Tensor<f32>, b: &Tensor<f32>) -> Result<()> {
    if a.shape() != b.shape() {
        let d = |t: &Tensor<f32>| {
            let s = t.shape();
            (
                s.first().copied().unwrap_or(0),
                s.last().copied().unwrap_or(0),
            )
        };
        return Err(CoreError::DimensionMismatch {
            what,
            a: d(a),
            b: d(b),
        });
    }
    Ok(())
}

/// Mean squared pixel difference.
pub fn l2_loss(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    check_same_shape("l2_loss", a, b)?;
    let d = a.sub(b)?;
    Ok(d.mul(&d)?.mean())
}

/// Sum over the five extractor taps of the mean squared gram difference.
/// Zero iff the gram matrices agree at every tap.
pub fn style_loss(
    extractor: &FeatureExtractor,
    generated: &Tensor<f32>,
    reference: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    check_same_shape("style_loss", generated, reference)?;
    let gen_feats = extractor.features(generated)?;
    let ref_feats = extractor.features(reference)?;
    let mut total = Tensor::scalar(0.0);
    for (g, r) in gen_feats.iter().zip(&ref_feats) {
        total = total.add(&l2_loss(&gram(g)?, &gram(r)?)?)?;
    }
    Ok(total)
}

/// Mean squared difference restricted to the mask (sum over masked pixels
/// divided by the total pixel count). The flag reports an all-zero mask,
/// in which case the loss is exactly zero.
pub fn content_loss_masked(
    clean: &Tensor<f32>,
    generated: &Tensor<f32>,
    mask: &Tensor<f32>,
) -> Result<(Tensor<f32>, bool)> {
    check_same_shape("content_loss_masked", clean, generated)?;
    check_same_shape("content_loss_masked", clean, mask)?;
    if !mask.data().iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(CoreError::Data("mask values must be exactly 0 or 1".into()));
    }
    let empty = mask.data().iter().all(|&v| v == 0.0);
    let d = mask.mul(clean)?.sub(&mask.mul(generated)?)?;
    Ok((d.mul(&d)?.mean(), empty))
}

fn check_probability_map(what: &'static str, p: &Tensor<f32>) -> Result<()> {
    if p.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(CoreError::NonFinite {
            what,
            context: "probability outside [0,1]".into(),
        });
    }
    Ok(())
}

/// −E[log D(real)] − E[log(1 − D(fake))], minimized by a perfect
/// discriminator. Uniform 0.5 maps give 2·ln 2.
pub fn gan_loss_discriminator(d_real: &Tensor<f32>, d_fake: &Tensor<f32>) -> Result<Tensor<f32>> {
    check_probability_map("gan_loss_discriminator", d_real)?;
    check_probability_map("gan_loss_discriminator", d_fake)?;
    let real_term = d_real.add_scalar(LOG_EPS).ln().mean().neg();
    let fake_term = d_fake.neg().add_scalar(1.0 + LOG_EPS).ln().mean().neg();
    Ok(real_term.add(&fake_term)?)
}

/// Non-saturating generator objective −E[log D(fake)], minimized as the
/// discriminator is fooled toward 1.
pub fn gan_loss_generator(d_fake: &Tensor<f32>) -> Result<Tensor<f32>> {
    check_probability_map("gan_loss_generator", d_fake)?;
    Ok(d_fake.add_scalar(LOG_EPS).ln().mean().neg())
}

/// adv + λ_s·style + λ_c·content.
pub fn tanet_total(
    adv: &Tensor<f32>,
    style: &Tensor<f32>,
    content: &Tensor<f32>,
    w: &LossWeights,
) -> Result<Tensor<f32>> {
    Ok(adv
        .add(&style.scale(w.lambda_s))?
        .add(&content.scale(w.lambda_c))?)
}

/// adv + λ_L2·l2.
pub fn binet_total(adv: &Tensor<f32>, l2: &Tensor<f32>, w: &LossWeights) -> Result<Tensor<f32>> {
    Ok(adv.add(&l2.scale(w.lambda_l2))?)
}

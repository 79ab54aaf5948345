//! Frozen convolutional feature extractor for the style loss.
//!
//! Five stages (channels 64,128,256,512,512, 3×3 kernels, stride 2
//! between stages) tapped after each ReLU. Default weights are He-normal
//! from a fixed seed, so gram matching runs against deterministic random
//! features without any pretrained file; a compatible weight table can
//! replace them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::networks::{NamedTable, NamedTensor};
use docbin_tensor::{conv2d, Tensor};

pub const EXTRACTOR_SEED: u64 = 0xD1BC0;
pub const STAGE_CHANNELS: [usize; 5] = [64, 128, 256, 512, 512];
const KERNEL: usize = 3;
const PAD: usize = 1;

pub struct FeatureExtractor {
    // (weight, bias) per stage; never trained, so requires_grad stays off.
    stages: Vec<(Tensor<f32>, Tensor<f32>)>,
}

impl FeatureExtractor {
    /// He-initialized random features from the fixed seed.
    pub fn new_default() -> FeatureExtractor {
        let mut rng = ChaCha8Rng::seed_from_u64(EXTRACTOR_SEED);
        let mut stages = Vec::with_capacity(5);
        let mut in_c = 1;
        for out_c in STAGE_CHANNELS {
            // He scaling keeps activation variance stable through depth;
            // a flat small std would starve the deep taps toward zero.
            let std = (2.0 / (in_c * KERNEL * KERNEL) as f64).sqrt();
            let weight = Tensor::randn(&mut rng, std, &[out_c, in_c, KERNEL, KERNEL]);
            let bias = Tensor::zeros(&[out_c]);
            stages.push((weight, bias));
            in_c = out_c;
        }
        FeatureExtractor { stages }
    }

    /// Replace the random weights with a supplied table (e.g. converted
    /// pretrained weights). Shapes must match the fixed architecture,
    /// including the single-channel first stage.
    pub fn from_named(tensors: &[NamedTensor]) -> Result<FeatureExtractor> {
        let table = NamedTable::new(tensors);
        let mut stages = Vec::with_capacity(5);
        let mut in_c = 1;
        for (i, out_c) in STAGE_CHANNELS.into_iter().enumerate() {
            let weight = table.frozen(
                &format!("extractor.{i}.weight"),
                &[out_c, in_c, KERNEL, KERNEL],
            )?;
            let bias = table.frozen(&format!("extractor.{i}.bias"), &[out_c])?;
            stages.push((weight, bias));
            in_c = out_c;
        }
        Ok(FeatureExtractor { stages })
    }

    pub fn export_state(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.stages.iter().enumerate() {
            out.push(NamedTensor {
                name: format!("extractor.{i}.weight"),
                shape: w.shape().to_vec(),
                data: w.data().to_vec(),
            });
            out.push(NamedTensor {
                name: format!("extractor.{i}.bias"),
                shape: b.shape().to_vec(),
                data: b.data().to_vec(),
            });
        }
        out
    }

    /// The five tap activations for an [N,1,H,W] input, shallow to deep.
    /// Gradients flow through to the input; the weights never accumulate
    /// any.
    pub fn features(&self, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        let (_, c, h, w) = x.dims4("extractor input")?;
        if c != 1 {
            return Err(CoreError::Data(format!(
                "extractor expects single-channel input, got {c}"
            )));
        }
        if h < 16 || w < 16 {
            return Err(CoreError::Data(format!(
                "extractor needs at least 16x16 input, got {h}x{w}"
            )));
        }
        let mut taps = Vec::with_capacity(5);
        let mut cur = x.clone();
        for (i, (weight, bias)) in self.stages.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            cur = conv2d(&cur, weight, Some(bias), stride, PAD)?.leaky_relu(0.0);
            taps.push(cur.clone());
        }
        Ok(taps)
    }
}

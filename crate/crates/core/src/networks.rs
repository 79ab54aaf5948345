//! Texture augmentation and binarization networks plus their
//! discriminators, built from shared conv/deconv blocks.
//!
//! Spatial algebra: encoders halve the side per block until 1×1, so
//! depth = log2(patch_size). Decoders mirror that with stride-2
//! transposed convs. Channel schedule min(base·2^i, 8·base).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use docbin_tensor::{batch_norm, concat_channels, conv2d, conv_transpose2d, BnStats, Mode, Tensor};

pub const LEAKY_SLOPE: f32 = 0.2;
const KERNEL: usize = 5;
const PAD: usize = 2;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    pub patch_size: usize,
    pub base_channels: usize,
}

impl NetConfig {
    pub fn new(patch_size: usize, base_channels: usize) -> Result<NetConfig> {
        if patch_size < 16 || !patch_size.is_power_of_two() {
            return Err(CoreError::Data(format!(
                "patch_size must be a power of two >= 16, got {patch_size}"
            )));
        }
        if base_channels == 0 {
            return Err(CoreError::Data("base_channels must be positive".into()));
        }
        Ok(NetConfig {
            patch_size,
            base_channels,
        })
    }

    /// Number of halvings from patch_size down to 1.
    pub fn depth(&self) -> usize {
        self.patch_size.trailing_zeros() as usize
    }

    /// Encoder output channels after block i, capped at 8×base.
    pub fn channels(&self, i: usize) -> usize {
        (self.base_channels << i).min(8 * self.base_channels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    LeakyRelu,
    Tanh,
    Sigmoid,
}

/// One conv or transposed-conv block with optional batch norm and a fixed
/// activation. Weight layout is [out,in,k,k] for conv and [in,out,k,k]
/// for deconv.
pub struct Block {
    pub weight: Tensor<f32>,
    pub bias: Tensor<f32>,
    pub gamma: Option<Tensor<f32>>,
    pub beta: Option<Tensor<f32>>,
    pub stats: Option<BnStats<f32>>,
    transposed: bool,
    stride: usize,
    output_padding: usize,
    act: Act,
}

impl Block {
    fn conv(
        rng: &mut ChaCha8Rng,
        in_c: usize,
        out_c: usize,
        stride: usize,
        bn: bool,
        act: Act,
    ) -> Block {
        Block {
            weight: Tensor::randn(rng, INIT_STD, &[out_c, in_c, KERNEL, KERNEL])
                .requires_grad(true),
            bias: Tensor::zeros(&[out_c]).requires_grad(true),
            gamma: bn.then(|| Tensor::full(1.0, &[out_c]).requires_grad(true)),
            beta: bn.then(|| Tensor::zeros(&[out_c]).requires_grad(true)),
            stats: bn.then(|| BnStats::new(out_c)),
            transposed: false,
            stride,
            output_padding: 0,
            act,
        }
    }

    /// Stride-2 transposed conv sized for exact doubling (k5 p2 op1).
    fn deconv(rng: &mut ChaCha8Rng, in_c: usize, out_c: usize, bn: bool, act: Act) -> Block {
        Block {
            weight: Tensor::randn(rng, INIT_STD, &[in_c, out_c, KERNEL, KERNEL])
                .requires_grad(true),
            bias: Tensor::zeros(&[out_c]).requires_grad(true),
            gamma: bn.then(|| Tensor::full(1.0, &[out_c]).requires_grad(true)),
            beta: bn.then(|| Tensor::zeros(&[out_c]).requires_grad(true)),
            stats: bn.then(|| BnStats::new(out_c)),
            transposed: true,
            stride: 2,
            output_padding: 1,
            act,
        }
    }

    pub fn forward(&self, x: &Tensor<f32>, mode: Mode) -> Result<Tensor<f32>> {
        let mut y = if self.transposed {
            conv_transpose2d(
                x,
                &self.weight,
                Some(&self.bias),
                self.stride,
                PAD,
                self.output_padding,
            )?
        } else {
            conv2d(x, &self.weight, Some(&self.bias), self.stride, PAD)?
        };
        if let (Some(g), Some(b), Some(s)) = (&self.gamma, &self.beta, &self.stats) {
            y = batch_norm(&y, g, b, s, mode)?;
        }
        Ok(match self.act {
            Act::LeakyRelu => y.leaky_relu(LEAKY_SLOPE),
            Act::Tanh => y.tanh(),
            Act::Sigmoid => y.sigmoid(),
        })
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        let mut out = vec![&mut self.weight, &mut self.bias];
        if let Some(g) = &mut self.gamma {
            out.push(g);
        }
        if let Some(b) = &mut self.beta {
            out.push(b);
        }
        out
    }

    fn export(&self, prefix: &str, out: &mut Vec<NamedTensor>) {
        let push = |out: &mut Vec<NamedTensor>, name: &str, t: &Tensor<f32>| {
            out.push(NamedTensor {
                name: format!("{prefix}.{name}"),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            });
        };
        push(out, "weight", &self.weight);
        push(out, "bias", &self.bias);
        if let (Some(g), Some(b), Some(s)) = (&self.gamma, &self.beta, &self.stats) {
            push(out, "gamma", g);
            push(out, "beta", b);
            let (mean, var) = s.snapshot();
            let c = s.channels();
            out.push(NamedTensor {
                name: format!("{prefix}.running_mean"),
                shape: vec![c],
                data: mean,
            });
            out.push(NamedTensor {
                name: format!("{prefix}.running_var"),
                shape: vec![c],
                data: var,
            });
        }
    }

    fn import(&mut self, prefix: &str, table: &NamedTable) -> Result<()> {
        self.weight = table.tensor(&format!("{prefix}.weight"), self.weight.shape())?;
        self.bias = table.tensor(&format!("{prefix}.bias"), self.bias.shape())?;
        if let (Some(g), Some(b), Some(s)) = (&mut self.gamma, &mut self.beta, &self.stats) {
            *g = table.tensor(&format!("{prefix}.gamma"), g.shape())?;
            *b = table.tensor(&format!("{prefix}.beta"), b.shape())?;
            let mean = table.raw(&format!("{prefix}.running_mean"), s.channels())?;
            let var = table.raw(&format!("{prefix}.running_var"), s.channels())?;
            s.restore(mean, var)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Lookup view over exported tensors for state import.
pub struct NamedTable<'a> {
    entries: std::collections::HashMap<&'a str, &'a NamedTensor>,
}

impl<'a> NamedTable<'a> {
    pub fn new(tensors: &'a [NamedTensor]) -> NamedTable<'a> {
        NamedTable {
            entries: tensors.iter().map(|t| (t.name.as_str(), t)).collect(),
        }
    }

    fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::Checkpoint(format!("missing tensor '{name}'")))
    }

    fn tensor(&self, name: &str, want_shape: &[usize]) -> Result<Tensor<f32>> {
        let t = self.get(name)?;
        if t.shape != want_shape {
            return Err(CoreError::Checkpoint(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                t.shape, want_shape
            )));
        }
        Ok(Tensor::from_vec(t.data.clone(), &t.shape)?.requires_grad(true))
    }

    /// Like `tensor` but without gradient tracking, for frozen weights.
    pub(crate) fn frozen(&self, name: &str, want_shape: &[usize]) -> Result<Tensor<f32>> {
        let t = self.get(name)?;
        if t.shape != want_shape {
            return Err(CoreError::Checkpoint(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                t.shape, want_shape
            )));
        }
        Ok(Tensor::from_vec(t.data.clone(), &t.shape)?)
    }

    fn raw(&self, name: &str, want_len: usize) -> Result<Vec<f32>> {
        let t = self.get(name)?;
        if t.data.len() != want_len {
            return Err(CoreError::Checkpoint(format!(
                "tensor '{name}' has {} values, expected {want_len}",
                t.data.len()
            )));
        }
        Ok(t.data.clone())
    }
}

fn encoder(rng: &mut ChaCha8Rng, config: &NetConfig) -> Vec<Block> {
    (0..config.depth())
        .map(|i| {
            let in_c = if i == 0 { 1 } else { config.channels(i - 1) };
            Block::conv(rng, in_c, config.channels(i), 2, true, Act::LeakyRelu)
        })
        .collect()
}

/// Decoder blocks. `bottleneck_in` is the channel count entering block 0;
/// later blocks consume the previous output concatenated with the
/// matching encoder skip, so their input is doubled.
fn decoder(rng: &mut ChaCha8Rng, config: &NetConfig, bottleneck_in: usize) -> Vec<Block> {
    let d = config.depth();
    (0..d)
        .map(|j| {
            let in_c = if j == 0 {
                bottleneck_in
            } else {
                2 * config.channels(d - 1 - j)
            };
            if j + 1 == d {
                Block::deconv(rng, in_c, 1, false, Act::Tanh)
            } else {
                Block::deconv(rng, in_c, config.channels(d - 2 - j), true, Act::LeakyRelu)
            }
        })
        .collect()
}

fn run_encoder(blocks: &[Block], x: &Tensor<f32>, mode: Mode) -> Result<Vec<Tensor<f32>>> {
    let mut feats = Vec::with_capacity(blocks.len());
    let mut cur = x.clone();
    for b in blocks {
        cur = b.forward(&cur, mode)?;
        feats.push(cur.clone());
    }
    Ok(feats)
}

/// Decoder walk shared by both generators: blocks interleaved with skip
/// concatenation from the encoder features.
fn run_decoder(
    blocks: &[Block],
    bottleneck: Tensor<f32>,
    skips: &[Tensor<f32>],
    mode: Mode,
) -> Result<Tensor<f32>> {
    let d = blocks.len();
    let mut cur = bottleneck;
    for (j, b) in blocks.iter().enumerate() {
        cur = b.forward(&cur, mode)?;
        if j + 1 < d {
            cur = concat_channels(&cur, &skips[d - 2 - j])?;
        }
    }
    Ok(cur)
}

fn check_input(config: &NetConfig, x: &Tensor<f32>, what: &'static str) -> Result<()> {
    let (_, c, h, w) = x.dims4(what)?;
    let s = config.patch_size;
    // The encoder halves each spatial dim depth() times, so any multiple
    // of the training patch size round-trips exactly; tiled inference
    // relies on that.
    if c != 1 || h == 0 || w == 0 || h % s != 0 || w % s != 0 {
        return Err(CoreError::DimensionMismatch {
            what,
            a: (h, w),
            b: (s, s),
        });
    }
    Ok(())
}

/// Texture augmentation generator: content and style encoders joined at a
/// 1×1 bottleneck by channel concatenation, decoded with content skips.
pub struct TaNet {
    pub config: NetConfig,
    pub content: Vec<Block>,
    pub style: Vec<Block>,
    pub dec: Vec<Block>,
}

impl TaNet {
    pub fn init(config: NetConfig, seed: u64) -> TaNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top = config.channels(config.depth() - 1);
        TaNet {
            content: encoder(&mut rng, &config),
            style: encoder(&mut rng, &config),
            dec: decoder(&mut rng, &config, 2 * top),
            config,
        }
    }

    pub fn forward(
        &self,
        clean: &Tensor<f32>,
        reference: &Tensor<f32>,
        mode: Mode,
    ) -> Result<Tensor<f32>> {
        check_input(&self.config, clean, "tanet clean input")?;
        check_input(&self.config, reference, "tanet reference input")?;
        let content_feats = run_encoder(&self.content, clean, mode)?;
        let style_feats = run_encoder(&self.style, reference, mode)?;
        let bottleneck = concat_channels(
            content_feats.last().expect("depth >= 1"),
            style_feats.last().expect("depth >= 1"),
        )?;
        run_decoder(&self.dec, bottleneck, &content_feats, mode)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        self.content
            .iter_mut()
            .chain(self.style.iter_mut())
            .chain(self.dec.iter_mut())
            .flat_map(Block::params_mut)
            .collect()
    }

    pub fn export_state(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (name, blocks) in [
            ("content", &self.content),
            ("style", &self.style),
            ("dec", &self.dec),
        ] {
            for (i, b) in blocks.iter().enumerate() {
                b.export(&format!("tanet.{name}.{i}"), &mut out);
            }
        }
        out
    }

    pub fn import_state(&mut self, table: &NamedTable) -> Result<()> {
        for (name, blocks) in [
            ("content", &mut self.content),
            ("style", &mut self.style),
            ("dec", &mut self.dec),
        ] {
            for (i, b) in blocks.iter_mut().enumerate() {
                b.import(&format!("tanet.{name}.{i}"), table)?;
            }
        }
        Ok(())
    }
}

/// Binarization generator: U-Net over the noisy image, same shape algebra
/// as the TANet content path.
pub struct BiNet {
    pub config: NetConfig,
    pub enc: Vec<Block>,
    pub dec: Vec<Block>,
}

impl BiNet {
    pub fn init(config: NetConfig, seed: u64) -> BiNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top = config.channels(config.depth() - 1);
        BiNet {
            enc: encoder(&mut rng, &config),
            dec: decoder(&mut rng, &config, top),
            config,
        }
    }

    pub fn forward(&self, noisy: &Tensor<f32>, mode: Mode) -> Result<Tensor<f32>> {
        check_input(&self.config, noisy, "binet input")?;
        let feats = run_encoder(&self.enc, noisy, mode)?;
        let bottleneck = feats.last().expect("depth >= 1").clone();
        run_decoder(&self.dec, bottleneck, &feats, mode)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        self.enc
            .iter_mut()
            .chain(self.dec.iter_mut())
            .flat_map(Block::params_mut)
            .collect()
    }

    pub fn export_state(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (name, blocks) in [("enc", &self.enc), ("dec", &self.dec)] {
            for (i, b) in blocks.iter().enumerate() {
                b.export(&format!("binet.{name}.{i}"), &mut out);
            }
        }
        out
    }

    pub fn import_state(&mut self, table: &NamedTable) -> Result<()> {
        for (name, blocks) in [("enc", &mut self.enc), ("dec", &mut self.dec)] {
            for (i, b) in blocks.iter_mut().enumerate() {
                b.import(&format!("binet.{name}.{i}"), table)?;
            }
        }
        Ok(())
    }
}

/// Patch discriminator: five conv blocks, strides 2,2,2,1,1, sigmoid
/// probability map. First and last blocks carry no batch norm.
pub struct Discriminator {
    pub config: NetConfig,
    pub name: String,
    pub blocks: Vec<Block>,
}

impl Discriminator {
    pub fn init(config: NetConfig, name: impl Into<String>, seed: u64) -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = config.base_channels;
        let chans = [b, 2 * b, 4 * b, 8 * b, 1];
        let strides = [2, 2, 2, 1, 1];
        let blocks = (0..5)
            .map(|i| {
                let in_c = if i == 0 { 1 } else { chans[i - 1] };
                let (bn, act) = match i {
                    0 => (false, Act::LeakyRelu),
                    4 => (false, Act::Sigmoid),
                    _ => (true, Act::LeakyRelu),
                };
                Block::conv(&mut rng, in_c, chans[i], strides[i], bn, act)
            })
            .collect();
        Discriminator {
            config,
            name: name.into(),
            blocks,
        }
    }

    pub fn forward(&self, image: &Tensor<f32>, mode: Mode) -> Result<Tensor<f32>> {
        check_input(&self.config, image, "discriminator input")?;
        let mut cur = image.clone();
        for b in &self.blocks {
            cur = b.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        self.blocks.iter_mut().flat_map(Block::params_mut).collect()
    }

    pub fn export_state(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            b.export(&format!("{}.{i}", self.name), &mut out);
        }
        out
    }

    pub fn import_state(&mut self, table: &NamedTable) -> Result<()> {
        let name = self.name.clone();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.import(&format!("{name}.{i}"), table)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use docbin_tensor::backward;

    fn cfg(s: usize, base: usize) -> NetConfig {
        NetConfig::new(s, base).unwrap()
    }

    fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f32> {
        Tensor::randn(rng, 0.5, shape)
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::new(0, 4).is_err());
        assert!(NetConfig::new(48, 4).is_err());
        assert!(NetConfig::new(8, 4).is_err());
        assert!(NetConfig::new(64, 0).is_err());
        let c = cfg(256, 64);
        assert_eq!(c.depth(), 8);
        assert_eq!(
            (0..8).map(|i| c.channels(i)).collect::<Vec<_>>(),
            vec![64, 128, 256, 512, 512, 512, 512, 512]
        );
    }

    #[test]
    fn tanet_shapes_and_range() {
        let net = TaNet::init(cfg(16, 2), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clean = randn(&mut rng, &[2, 1, 16, 16]).tanh();
        let reference = randn(&mut rng, &[2, 1, 16, 16]).tanh();
        let out = net.forward(&clean, &reference, Mode::Train).unwrap();
        assert_eq!(out.shape(), &[2, 1, 16, 16]);
        assert!(out.all_finite());
        assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn binet_shapes_and_range() {
        let net = BiNet::init(cfg(16, 2), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = randn(&mut rng, &[2, 1, 16, 16]).tanh();
        let out = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(out.shape(), &[2, 1, 16, 16]);
        assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn wrong_spatial_size_is_an_error() {
        let net = BiNet::init(cfg(16, 2), 3);
        let x = Tensor::zeros(&[1, 1, 8, 8]);
        assert!(net.forward(&x, Mode::Eval).is_err());
        let tnet = TaNet::init(cfg(16, 2), 3);
        assert!(tnet.forward(&x, &x, Mode::Eval).is_err());
        let d = Discriminator::init(cfg(16, 2), "d", 0);
        assert!(d.forward(&x, Mode::Eval).is_err());
    }

    #[test]
    fn discriminator_map_shape_and_range() {
        // 64 → 32 → 16 → 8 → 8 → 8 under strides 2,2,2,1,1.
        let d = Discriminator::init(cfg(64, 2), "d", 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = randn(&mut rng, &[2, 1, 64, 64]).tanh();
        let out = d.forward(&x, Mode::Train).unwrap();
        assert_eq!(out.shape(), &[2, 1, 8, 8]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = TaNet::init(cfg(16, 2), 7);
        let b = TaNet::init(cfg(16, 2), 7);
        let c = TaNet::init(cfg(16, 2), 8);
        assert_eq!(a.content[0].weight.data(), b.content[0].weight.data());
        assert_eq!(a.dec[2].weight.data(), b.dec[2].weight.data());
        assert_ne!(a.content[0].weight.data(), c.content[0].weight.data());
    }

    #[test]
    fn init_weight_std_near_spec() {
        let net = BiNet::init(cfg(64, 8), 9);
        // Pick a large tensor: enc block 3 weight has 32·64·25 values.
        let w = net.enc[3].weight.data();
        let n = w.len() as f64;
        let mean: f64 = w.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - INIT_STD).abs() < 0.2 * INIT_STD, "std {std}");
        assert!(net.enc[0].bias.data().iter().all(|&v| v == 0.0));
        assert!(net.enc[0]
            .gamma
            .as_ref()
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        assert!(net.enc[0]
            .beta
            .as_ref()
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn every_tanet_parameter_receives_gradient() {
        let mut net = TaNet::init(cfg(16, 2), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let clean = randn(&mut rng, &[2, 1, 16, 16]).tanh();
        let reference = randn(&mut rng, &[2, 1, 16, 16]).tanh();
        let out = net.forward(&clean, &reference, Mode::Train).unwrap();
        backward(&out.mean()).unwrap();
        for (i, p) in net.params_mut().into_iter().enumerate() {
            let g = p.grad().unwrap_or_else(|| panic!("param {i} missing grad"));
            assert!(g.iter().any(|&v| v != 0.0), "param {i} grad all zero");
        }
    }

    #[test]
    fn every_binet_and_disc_parameter_receives_gradient() {
        let mut net = BiNet::init(cfg(16, 2), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = randn(&mut rng, &[2, 1, 16, 16]).tanh();
        let out = net.forward(&x, Mode::Train).unwrap();
        backward(&out.mean()).unwrap();
        for (i, p) in net.params_mut().into_iter().enumerate() {
            let g = p
                .grad()
                .unwrap_or_else(|| panic!("binet param {i} missing grad"));
            assert!(g.iter().any(|&v| v != 0.0), "binet param {i} grad all zero");
        }

        let mut d = Discriminator::init(cfg(16, 2), "d", 14);
        let out = d.forward(&x, Mode::Train).unwrap();
        backward(&out.mean()).unwrap();
        for (i, p) in d.params_mut().into_iter().enumerate() {
            let g = p
                .grad()
                .unwrap_or_else(|| panic!("disc param {i} missing grad"));
            assert!(g.iter().any(|&v| v != 0.0), "disc param {i} grad all zero");
        }
    }

    #[test]
    fn both_tanet_inputs_are_live() {
        let net = TaNet::init(cfg(16, 2), 15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let clean = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let reference = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let clean2 = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let reference2 = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        // Eval mode so outputs do not depend on batch statistics.
        let base = net.forward(&clean, &reference, Mode::Eval).unwrap();
        let style_moved = net.forward(&clean, &reference2, Mode::Eval).unwrap();
        let content_moved = net.forward(&clean2, &reference, Mode::Eval).unwrap();
        let delta = |a: &Tensor<f32>, b: &Tensor<f32>| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max)
        };
        assert!(delta(&base, &style_moved) > 0.0, "style path dead");
        assert!(delta(&base, &content_moved) > 0.0, "content path dead");
    }

    #[test]
    fn eval_forward_is_pure() {
        let net = BiNet::init(cfg(16, 2), 17);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let a = net.forward(&x, Mode::Eval).unwrap();
        let b = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a.data(), b.data());
        // Train mode mutates running stats; eval afterwards still pure.
        net.forward(&x, Mode::Train).unwrap();
        let c = net.forward(&x, Mode::Eval).unwrap();
        let d = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(c.data(), d.data());
    }

    #[test]
    fn batch_permutation_permutes_disc_output() {
        let d = Discriminator::init(cfg(16, 2), "d", 19);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let a = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let b = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let ab = concat_batch(&a, &b);
        let ba = concat_batch(&b, &a);
        let out_ab = d.forward(&ab, Mode::Eval).unwrap();
        let out_ba = d.forward(&ba, Mode::Eval).unwrap();
        let half = out_ab.numel() / 2;
        assert_eq!(out_ab.data()[..half], out_ba.data()[half..]);
        assert_eq!(out_ab.data()[half..], out_ba.data()[..half]);
    }

    fn concat_batch(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
        let mut data = a.data().to_vec();
        data.extend_from_slice(b.data());
        let mut shape = a.shape().to_vec();
        shape[0] *= 2;
        Tensor::from_vec(data, &shape).unwrap()
    }

    #[test]
    fn state_export_import_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let src = TaNet::init(cfg(16, 2), 22);
        let x = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        let r = randn(&mut rng, &[1, 1, 16, 16]).tanh();
        // Mutate running stats so they differ from init.
        src.forward(&x, &r, Mode::Train).unwrap();
        let state = src.export_state();

        let mut dst = TaNet::init(cfg(16, 2), 999);
        dst.import_state(&NamedTable::new(&state)).unwrap();
        assert_eq!(dst.export_state(), state);
        let a = src.forward(&x, &r, Mode::Eval).unwrap();
        let b = dst.forward(&x, &r, Mode::Eval).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn import_rejects_missing_and_misshapen() {
        let src = BiNet::init(cfg(16, 2), 23);
        let mut state = src.export_state();
        state[0].shape = vec![1, 1, 3, 3];
        let mut dst = BiNet::init(cfg(16, 2), 23);
        assert!(dst.import_state(&NamedTable::new(&state)).is_err());
        let short = &src.export_state()[1..];
        assert!(dst.import_state(&NamedTable::new(short)).is_err());
    }

    #[test]
    fn param_count_matches_architecture() {
        let mut net = BiNet::init(cfg(16, 2), 24);
        // depth 4: enc blocks 4×4 params, dec: 3 BN blocks ×4 + final ×2.
        assert_eq!(net.params_mut().len(), 4 * 4 + 3 * 4 + 2);
        let mut d = Discriminator::init(cfg(16, 2), "d", 25);
        // blocks 0 and 4 have weight+bias, blocks 1..3 add gamma+beta.
        assert_eq!(d.params_mut().len(), 2 + 4 + 4 + 4 + 2);
    }
}

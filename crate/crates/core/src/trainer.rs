//! Stage-wise training loop.
//!
//! The full protocol runs three stages in order: the texture network
//! against its discriminator, then the binarizer on frozen-generator
//! outputs, then both jointly. Two reduced modes reuse the binarizer
//! loop on real paired patches as comparison baselines.
//!
//! Update order inside a step is fixed: texture discriminator, texture
//! generator, binarization discriminator, binarizer. Every backward pass
//! is preceded by a grad clear across all live networks, because a
//! generator update also deposits gradients on the discriminator it
//! probed. The trainer does no file I/O; step records go to a caller
//! sink and persistence lives in the checkpoint module.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::extractor::FeatureExtractor;
use crate::losses::{
    binet_total, content_loss_masked, gan_loss_discriminator, gan_loss_generator, l2_loss,
    style_loss, tanet_total, LossWeights,
};
use crate::networks::{BiNet, Discriminator, NamedTable, NamedTensor, NetConfig, TaNet};
use crate::pipeline::{PatchStore, Pool, Split, UnpairedSampler};
use docbin_tensor::{backward, no_grad, Adam, Mode, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Full,
    UnetBaseline,
    Pix2pixBaseline,
}

/// Everything a run needs beyond the patch store itself. Serialized
/// into checkpoints so a saved run can be reconstructed shape-for-shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub base_channels: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub lambda_s: f32,
    pub lambda_c: f32,
    pub lambda_l2: f32,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub epochs_joint: usize,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            patch_size: 256,
            base_channels: 64,
            batch_size: 8,
            seed: 0,
            lr: 1e-4,
            lambda_s: 0.5,
            lambda_c: 10.0,
            lambda_l2: 100.0,
            epochs_stage1: 10,
            epochs_stage2: 10,
            epochs_joint: 30,
            mode: TrainMode::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        NetConfig::new(self.patch_size, self.base_channels)?;
        if self.batch_size == 0 {
            return Err(CoreError::Data("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CoreError::Data(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        self.weights().validate()?;
        Ok(())
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        NetConfig::new(self.patch_size, self.base_channels)
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_s: self.lambda_s,
            lambda_c: self.lambda_c,
            lambda_l2: self.lambda_l2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Tanet,
    Binet,
    Joint,
    Baseline,
    Done,
}

impl Stage {
    pub fn next(self) -> Stage {
        match self {
            Stage::Tanet => Stage::Binet,
            Stage::Binet => Stage::Joint,
            Stage::Joint | Stage::Baseline | Stage::Done => Stage::Done,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Stage::Tanet => 0,
            Stage::Binet => 1,
            Stage::Joint => 2,
            Stage::Baseline => 3,
            Stage::Done => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Stage> {
        Ok(match code {
            0 => Stage::Tanet,
            1 => Stage::Binet,
            2 => Stage::Joint,
            3 => Stage::Baseline,
            4 => Stage::Done,
            other => {
                return Err(CoreError::Checkpoint(format!("unknown stage code {other}")));
            }
        })
    }
}

/// One optimizer cycle's worth of telemetry, written as a JSON line by
/// the CLI. `step` is the 1-based global count across stages.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub stage: Stage,
    pub losses: BTreeMap<&'static str, f64>,
    pub wall_ms: f64,
}

pub struct Trainer {
    pub(crate) config: TrainConfig,
    pub(crate) weights: LossWeights,
    pub(crate) stage: Stage,
    pub(crate) global_step: u64,
    pub(crate) stage_step: u64,
    pub(crate) tanet: Option<TaNet>,
    pub(crate) binet: BiNet,
    pub(crate) disc_g: Option<Discriminator>,
    pub(crate) disc_f: Option<Discriminator>,
    pub(crate) opt_tanet: Option<Adam<f32>>,
    pub(crate) opt_binet: Adam<f32>,
    pub(crate) opt_disc_g: Option<Adam<f32>>,
    pub(crate) opt_disc_f: Option<Adam<f32>>,
    pub(crate) extractor: FeatureExtractor,
    pub(crate) extractor_is_default: bool,
    pub(crate) sampler: UnpairedSampler,
}

const ADAM_BETA1: f64 = 0.5;
const ADAM_BETA2: f64 = 0.999;

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Trainer> {
        config.validate()?;
        let net = config.net_config()?;

        // Per-network init seeds come from a dedicated RNG stream so they
        // never collide with the split (0,1) or sampler (2,3) streams of
        // the same run seed. All four are drawn regardless of mode, so a
        // given network initializes identically across modes.
        let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
        seeds.set_stream(4);
        let seed_tanet = seeds.gen::<u64>();
        let seed_binet = seeds.gen::<u64>();
        let seed_disc_g = seeds.gen::<u64>();
        let seed_disc_f = seeds.gen::<u64>();

        let full = config.mode == TrainMode::Full;
        let adversarial_binet = config.mode != TrainMode::UnetBaseline;
        let adam = || Adam::with_betas(config.lr, ADAM_BETA1, ADAM_BETA2);

        Ok(Trainer {
            weights: config.weights(),
            stage: if full { Stage::Tanet } else { Stage::Baseline },
            global_step: 0,
            stage_step: 0,
            tanet: full.then(|| TaNet::init(net, seed_tanet)),
            binet: BiNet::init(net, seed_binet),
            disc_g: full.then(|| Discriminator::init(net, "disc_g", seed_disc_g)),
            disc_f: adversarial_binet.then(|| Discriminator::init(net, "disc_f", seed_disc_f)),
            opt_tanet: full.then(adam),
            opt_binet: adam(),
            opt_disc_g: full.then(adam),
            opt_disc_f: adversarial_binet.then(adam),
            extractor: FeatureExtractor::new_default(),
            extractor_is_default: true,
            sampler: UnpairedSampler::new(config.seed),
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn stage_step(&self) -> u64 {
        self.stage_step
    }

    pub fn binet(&self) -> &BiNet {
        &self.binet
    }

    pub fn tanet(&self) -> Option<&TaNet> {
        self.tanet.as_ref()
    }

    /// Swap in externally supplied style features (e.g. converted
    /// pretrained weights). Checkpoints then embed them.
    pub fn set_extractor(&mut self, extractor: FeatureExtractor) {
        self.extractor = extractor;
        self.extractor_is_default = false;
    }

    /// All trainable and tracked state across the live networks.
    pub fn export_all(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        if let Some(t) = &self.tanet {
            out.extend(t.export_state());
        }
        out.extend(self.binet.export_state());
        if let Some(d) = &self.disc_g {
            out.extend(d.export_state());
        }
        if let Some(d) = &self.disc_f {
            out.extend(d.export_state());
        }
        out
    }

    pub(crate) fn import_all(&mut self, table: &NamedTable) -> Result<()> {
        if let Some(t) = &mut self.tanet {
            t.import_state(table)?;
        }
        self.binet.import_state(table)?;
        if let Some(d) = &mut self.disc_g {
            d.import_state(table)?;
        }
        if let Some(d) = &mut self.disc_f {
            d.import_state(table)?;
        }
        Ok(())
    }

    /// Steps in one pass over the train split at the configured batch
    /// size. The full mode counts clean train patches (batches are
    /// unpaired draws); baseline modes count aligned train pairs.
    pub fn steps_per_epoch(&self, store: &PatchStore) -> Result<u64> {
        let n = match self.config.mode {
            TrainMode::Full => store.indices(Pool::Clean, Split::Train).len(),
            _ => store.paired_train_indices()?.len(),
        };
        if n == 0 {
            return Err(CoreError::Data("train split is empty".into()));
        }
        Ok(n.div_ceil(self.config.batch_size) as u64)
    }

    fn stage_epochs(&self, stage: Stage) -> usize {
        match stage {
            Stage::Tanet => self.config.epochs_stage1,
            Stage::Binet => self.config.epochs_stage2,
            Stage::Joint => self.config.epochs_joint,
            // Baseline modes mirror the binarizer stage's budget.
            Stage::Baseline => self.config.epochs_stage2,
            Stage::Done => 0,
        }
    }

    /// Run the current stage to completion and advance the stage marker.
    pub fn run_stage(
        &mut self,
        store: &PatchStore,
        sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<()> {
        if self.stage == Stage::Done {
            return Ok(());
        }
        let total = self.stage_epochs(self.stage) as u64 * self.steps_per_epoch(store)?;
        while self.stage_step < total {
            let record = self.step(store)?;
            sink(&record)?;
        }
        self.stage = self.stage.next();
        self.stage_step = 0;
        Ok(())
    }

    /// Run every remaining stage.
    pub fn run(
        &mut self,
        store: &PatchStore,
        sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<()> {
        while self.stage != Stage::Done {
            self.run_stage(store, sink)?;
        }
        Ok(())
    }

    /// One optimizer cycle of the current stage.
    pub fn step(&mut self, store: &PatchStore) -> Result<StepRecord> {
        let start = Instant::now();
        let mut losses = BTreeMap::new();
        match self.stage {
            Stage::Tanet => {
                let (clean, reference, mask) =
                    self.sampler.sample_batch(store, self.config.batch_size)?;
                self.tanet_round(&clean, &reference, &mask, &mut losses)?;
            }
            Stage::Binet => {
                let (clean, reference, _) =
                    self.sampler.sample_batch(store, self.config.batch_size)?;
                // Frozen texture generator: eval mode under no_grad keeps
                // parameters, running statistics, and graph untouched.
                let tanet = self
                    .tanet
                    .as_ref()
                    .expect("full mode owns a texture network");
                let generated = no_grad(|| tanet.forward(&clean, &reference, Mode::Eval))?;
                self.binet_round(&generated, &clean, true, &mut losses)?;
            }
            Stage::Joint => {
                let (clean, reference, mask) =
                    self.sampler.sample_batch(store, self.config.batch_size)?;
                let generated = self.tanet_round(&clean, &reference, &mask, &mut losses)?;
                // The binarizer trains on the batch's generated images but
                // its gradient is cut there; the texture network updates
                // only from its own objective.
                self.binet_round(&generated.detach(), &clean, true, &mut losses)?;
            }
            Stage::Baseline => {
                let (input, target) = self
                    .sampler
                    .sample_paired_batch(store, self.config.batch_size)?;
                let adversarial = self.config.mode == TrainMode::Pix2pixBaseline;
                self.binet_round(&input, &target, adversarial, &mut losses)?;
            }
            Stage::Done => {
                return Err(CoreError::Data("training is already complete".into()));
            }
        }
        self.global_step += 1;
        self.stage_step += 1;
        Ok(StepRecord {
            step: self.global_step,
            stage: self.stage,
            losses,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Texture discriminator update followed by the generator update.
    /// Returns the generated batch with its graph intact so the joint
    /// stage can hand a detached copy to the binarizer.
    fn tanet_round(
        &mut self,
        clean: &Tensor<f32>,
        reference: &Tensor<f32>,
        mask: &Tensor<f32>,
        losses: &mut BTreeMap<&'static str, f64>,
    ) -> Result<Tensor<f32>> {
        let (stage, step) = (self.stage, self.global_step);
        let generated = self
            .tanet
            .as_ref()
            .expect("tanet_round requires the full mode")
            .forward(clean, reference, Mode::Train)?;

        let disc = self.disc_g.as_ref().expect("full mode owns disc_g");
        let d_real = disc.forward(reference, Mode::Train)?;
        let d_fake = disc.forward(&generated.detach(), Mode::Train)?;
        let loss_d = gan_loss_discriminator(&d_real, &d_fake)?;
        losses.insert("loss_d_g", finite("loss_d_g", loss_d.item()?, stage, step)?);
        self.clear_all_grads();
        backward(&loss_d)?;
        {
            let mut params = self.disc_g.as_mut().unwrap().params_mut();
            self.opt_disc_g.as_mut().unwrap().step(&mut params)?;
        }

        // The adversarial term must probe the just-stepped discriminator,
        // so this forward cannot reuse d_fake.
        let d_fake_post = self
            .disc_g
            .as_ref()
            .unwrap()
            .forward(&generated, Mode::Train)?;
        let adv = gan_loss_generator(&d_fake_post)?;
        let style = style_loss(&self.extractor, &generated, reference)?;
        let (content, _) = content_loss_masked(clean, &generated, mask)?;
        let total = tanet_total(&adv, &style, &content, &self.weights)?;
        losses.insert(
            "loss_g_adv",
            finite("loss_g_adv", adv.item()?, stage, step)?,
        );
        losses.insert(
            "loss_g_style",
            finite("loss_g_style", style.item()?, stage, step)?,
        );
        losses.insert(
            "loss_g_content",
            finite("loss_g_content", content.item()?, stage, step)?,
        );
        losses.insert(
            "loss_g_total",
            finite("loss_g_total", total.item()?, stage, step)?,
        );
        let (lo, hi) = minmax(&[&d_real, &d_fake, &d_fake_post]);
        losses.insert("d_g_min", lo);
        losses.insert("d_g_max", hi);
        self.clear_all_grads();
        backward(&total)?;
        {
            let mut params = self.tanet.as_mut().unwrap().params_mut();
            self.opt_tanet.as_mut().unwrap().step(&mut params)?;
        }
        Ok(generated)
    }

    /// Binarizer update, optionally preceded by its discriminator's.
    /// Without the adversarial term the objective is the plain mean
    /// squared error, which is the regression baseline's loss.
    fn binet_round(
        &mut self,
        input: &Tensor<f32>,
        target: &Tensor<f32>,
        adversarial: bool,
        losses: &mut BTreeMap<&'static str, f64>,
    ) -> Result<()> {
        let (stage, step) = (self.stage, self.global_step);
        let out = self.binet.forward(input, Mode::Train)?;

        let adv = if adversarial {
            let disc = self
                .disc_f
                .as_ref()
                .expect("adversarial round requires disc_f");
            let d_real = disc.forward(target, Mode::Train)?;
            let d_fake = disc.forward(&out.detach(), Mode::Train)?;
            let loss_d = gan_loss_discriminator(&d_real, &d_fake)?;
            losses.insert("loss_d_f", finite("loss_d_f", loss_d.item()?, stage, step)?);
            self.clear_all_grads();
            backward(&loss_d)?;
            {
                let mut params = self.disc_f.as_mut().unwrap().params_mut();
                self.opt_disc_f.as_mut().unwrap().step(&mut params)?;
            }

            let d_fake_post = self.disc_f.as_ref().unwrap().forward(&out, Mode::Train)?;
            let (lo, hi) = minmax(&[&d_real, &d_fake, &d_fake_post]);
            losses.insert("d_f_min", lo);
            losses.insert("d_f_max", hi);
            Some(gan_loss_generator(&d_fake_post)?)
        } else {
            None
        };

        let l2 = l2_loss(&out, target)?;
        losses.insert("loss_f_l2", finite("loss_f_l2", l2.item()?, stage, step)?);
        let total = match &adv {
            Some(a) => {
                losses.insert("loss_f_adv", finite("loss_f_adv", a.item()?, stage, step)?);
                binet_total(a, &l2, &self.weights)?
            }
            None => l2,
        };
        losses.insert(
            "loss_f_total",
            finite("loss_f_total", total.item()?, stage, step)?,
        );
        self.clear_all_grads();
        backward(&total)?;
        let mut params = self.binet.params_mut();
        self.opt_binet.step(&mut params)?;
        Ok(())
    }

    /// A backward pass deposits gradients on every reachable parameter,
    /// including networks that are not being stepped, and the autograd
    /// layer rejects accumulation onto stale gradients. Clearing all of
    /// them before each backward keeps every pass independent.
    fn clear_all_grads(&mut self) {
        if let Some(t) = &mut self.tanet {
            for p in t.params_mut() {
                p.clear_grad();
            }
        }
        for p in self.binet.params_mut() {
            p.clear_grad();
        }
        if let Some(d) = &mut self.disc_g {
            for p in d.params_mut() {
                p.clear_grad();
            }
        }
        if let Some(d) = &mut self.disc_f {
            for p in d.params_mut() {
                p.clear_grad();
            }
        }
    }
}

fn finite(name: &'static str, value: f32, stage: Stage, step: u64) -> Result<f64> {
    let v = value as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CoreError::NonFinite {
            what: name,
            context: format!("stage {stage:?}, global step {step}"),
        })
    }
}

fn minmax(tensors: &[&Tensor<f32>]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in tensors {
        for &v in t.data().iter() {
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
    }
    (lo, hi)
}

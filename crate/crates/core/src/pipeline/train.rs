use std::path::Path;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{config_hash, Checkpoint, RngState};
use super::schedule::warmup_cosine_lr;
use crate::dataio::{sample_train_clip, Clip, Frame, Video};
use crate::head::{assign_targets, total_loss, LossWeights};
use crate::model::{Detector, ModelConfig};
use crate::nn::{clip_grad_norm, Adam, Ctx, ParamSet};
use crate::tca::{augment_clip, AugmentConfig};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    /// First-moment coefficient of Adam.
    pub momentum: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub tau: usize,
    /// Square input side in pixels.
    pub resolution: usize,
    /// Clips per optimizer step.
    pub batch_size: usize,
    /// Gradient norm bound; none when absent.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 3e-5,
            lr_min: 0.0,
            momentum: 0.843,
            beta2: 0.999,
            adam_eps: 1e-8,
            warmup_steps: 0,
            total_steps: 1000,
            tau: 5,
            resolution: 640,
            batch_size: 1,
            grad_clip: None,
            seed: 0,
            checkpoint_every: 0,
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr0 > 0.0) || self.lr_min < 0.0 || self.lr_min > self.lr0 {
            return bad("learning rate must satisfy 0 <= lr_min <= lr0, lr0 > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment coefficients must lie in [0, 1)");
        }
        if self.tau == 0 || self.batch_size == 0 || self.total_steps == 0 {
            return bad("tau, batch size and step count must be positive");
        }
        if self.resolution == 0 || !self.resolution.is_multiple_of(crate::backbone::MAX_STRIDE) {
            return bad("resolution must be a positive multiple of 32");
        }
        self.loss.validate()?;
        self.augment.validate()
    }
}

/// One row of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub loss_obj: f64,
    pub loss_cls: f64,
    pub loss_loc: f64,
    pub loss_total: f64,
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let ctx = || path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(ctx(), e.into()))?;
    for r in history {
        w.serialize(r).map_err(|e| Error::io(ctx(), e.into()))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub struct TrainOutcome {
    pub detector: Detector,
    pub checkpoint: Checkpoint,
    pub history: Vec<LossRecord>,
}

/// Network input for a sequence of frames: `[n, 3, H, W]`, centered.
pub fn frames_tensor<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Tensor<f32> {
    let mut data = Vec::new();
    let (mut n, mut h, mut w) = (0, 0, 0);
    for f in frames {
        (h, w) = (f.height() as usize, f.width() as usize);
        data.extend(f.to_chw().into_iter().map(|v| v - 0.5));
        n += 1;
    }
    Tensor::from_vec(&[n, 3, h, w], data)
}

fn prepare(clip: Clip, resolution: u32) -> Clip {
    if clip.meta.width == resolution && clip.meta.height == resolution {
        clip
    } else {
        clip.resized(resolution, resolution)
    }
}

/// Train a fresh detector on `videos`. Deterministic for a fixed seed.
/// Checkpoints go to `checkpoint_dir` when given.
pub fn train(
    model: &ModelConfig,
    cfg: &TrainConfig,
    videos: &[Video],
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let usable: Vec<&Video> = videos.iter().filter(|v| v.annotations.annotated_frames().next().is_some()).collect();
    if usable.is_empty() {
        return Err(Error::NoAnnotatedFrames("training set".into()));
    }
    let (detector, mut params) = Detector::init::<f32>(model, cfg.tau, cfg.seed)?;
    let hash = config_hash(&(model, cfg));
    let mut adam = Adam::new(&params, cfg.momentum, cfg.beta2, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let res = cfg.resolution;
    let geos = detector.geometries(res, res);
    let mut history = Vec::with_capacity(cfg.total_steps);
    info!("training {} parameters for {} steps", params.num_scalars(), cfg.total_steps);

    let snapshot = |params: &ParamSet<f32>, step: usize, rng: &ChaCha8Rng| Checkpoint {
        model: model.clone(),
        tau: cfg.tau,
        config_hash: hash.clone(),
        step,
        rng: RngState { seed: cfg.seed, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() },
        params: params.clone(),
    };

    for step in 0..cfg.total_steps {
        let mut frames = Vec::with_capacity(cfg.batch_size * cfg.tau);
        let mut gts = Vec::with_capacity(cfg.batch_size * cfg.tau);
        for _ in 0..cfg.batch_size {
            let video = usable[rng.random_range(0..usable.len())];
            let clip = prepare(sample_train_clip(video, cfg.tau, &mut rng)?, res as u32);
            let aug = augment_clip(&clip, &cfg.augment, &mut rng);
            frames.extend(aug.clip.frames);
            gts.extend(aug.clip.annotations);
        }
        let targets: Vec<_> = geos.iter().map(|&g| assign_targets(&gts, g)).collect();
        let x = frames_tensor(&frames);

        let mut ctx = Ctx::new(&params, true);
        let xi = ctx.g.constant(x);
        let raws = detector.forward(&mut ctx, xi)?;
        let terms = total_loss(&mut ctx.g, &raws, &targets, &cfg.loss)?;
        let [obj, cls, loc, total] = terms.values(&ctx.g);
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let mut grads = ctx.g.backward(terms.total);
        let mut grads = ctx.param_grads(&mut grads);
        drop(ctx);
        if let Some(max) = cfg.grad_clip {
            clip_grad_norm(&mut grads, max);
        }
        let lr = warmup_cosine_lr(step, cfg.total_steps, cfg.warmup_steps, cfg.lr0, cfg.lr_min);
        adam.step(&mut params, &grads, lr);
        history.push(LossRecord { step, lr, loss_obj: obj, loss_cls: cls, loss_loc: loc, loss_total: total });
        if step % 100 == 0 {
            info!("step {step} lr {lr:.3e} loss {total:.4} (obj {obj:.4} cls {cls:.4} loc {loc:.4})");
        }
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.total_steps {
                snapshot(&params, step + 1, &rng).save(&dir.join(format!("step_{:06}.ckpt", step + 1)))?;
            }
        }
    }
    let checkpoint = snapshot(&params, cfg.total_steps, &rng);
    if let Some(dir) = checkpoint_dir {
        checkpoint.save(&dir.join("model.ckpt"))?;
    }
    Ok(TrainOutcome { detector, checkpoint, history })
}

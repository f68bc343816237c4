//! The full detector: backbone, per-scale spatio-temporal branches, a
//! top-down neck and per-scale grid heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionBranchConfig, StBranch, WindowGeometry};
use crate::backbone::{check_divisible, Backbone, BackboneConfig, MAX_STRIDE, STRIDES};
use crate::head::{GridGeometry, GridPrediction};
use crate::nn::{Activation, Conv, Ctx, ParamSet};
use crate::tensor::{Scalar, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    /// One branch per scale, finest first.
    pub attention: [AttentionBranchConfig; 3],
    pub neck_channels: usize,
    pub boxes_per_cell: usize,
    pub num_classes: usize,
    /// Initial objectness probability; sets the head bias.
    pub objectness_prior: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            attention: std::array::from_fn(|_| AttentionBranchConfig::default()),
            neck_channels: 64,
            boxes_per_cell: 1,
            num_classes: 1,
            objectness_prior: 0.01,
        }
    }
}

impl ModelConfig {
    /// Small variant sized for 64x64 inputs on a CPU.
    pub fn toy() -> Self {
        let branch = |patch: usize| AttentionBranchConfig {
            embed_dim: 32,
            heads: 2,
            relative_position_bias: true,
            locality_prior: 2.0,
            mlp_ratio: 2,
            geometry: WindowGeometry { patch, window: patch, shift: [patch / 2, patch / 2, 0], depth: 1 },
        };
        Self {
            backbone: BackboneConfig {
                stem_channels: [16, 24],
                stage_channels: [32, 48, 64],
                ..BackboneConfig::default()
            },
            attention: [branch(8), branch(4), branch(2)],
            neck_channels: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self, tau: usize) -> Result<()> {
        self.backbone.validate()?;
        for a in &self.attention {
            a.validate(tau)?;
        }
        if self.neck_channels == 0 || self.boxes_per_cell == 0 {
            return Err(Error::Config("neck width and boxes per cell must be positive".into()));
        }
        if !(self.objectness_prior > 0.0 && self.objectness_prior < 1.0) {
            return Err(Error::Config(format!("objectness prior {} must be in (0, 1)", self.objectness_prior)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Detector {
    backbone: Backbone,
    branches: Vec<StBranch>,
    lateral: Vec<Conv>,
    smooth: Vec<Conv>,
    heads: Vec<Conv>,
    config: ModelConfig,
    tau: usize,
}

impl Detector {
    pub fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        config: &ModelConfig,
        tau: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate(tau)?;
        let backbone = Backbone::new(ps, "backbone", &config.backbone, rng)?;
        let nc = config.neck_channels;
        let fields = config.boxes_per_cell * (5 + config.num_classes);
        let act = config.backbone.activation;
        let prior = (config.objectness_prior / (1.0 - config.objectness_prior)).ln();
        let (mut branches, mut lateral, mut smooth, mut heads) = (vec![], vec![], vec![], vec![]);
        for (i, &c) in config.backbone.stage_channels.iter().enumerate() {
            let p = i + 3;
            branches.push(StBranch::new(ps, &format!("attn.p{p}"), c, tau, &config.attention[i], rng)?);
            lateral.push(Conv::new(ps, &format!("neck.lateral{p}"), c, nc, 1, 1, Activation::Identity, rng));
            smooth.push(Conv::new(ps, &format!("neck.smooth{p}"), nc, nc, 3, 1, act, rng));
            let head = Conv::new(ps, &format!("head.p{p}"), nc, fields, 1, 1, Activation::Identity, rng);
            let bias = ps.get_mut(head.bias_id()).data_mut();
            for b in 0..config.boxes_per_cell {
                bias[b * (5 + config.num_classes) + 4] = T::of(prior);
            }
            heads.push(head);
        }
        Ok(Self { backbone, branches, lateral, smooth, heads, config: config.clone(), tau })
    }

    /// Fresh parameters drawn from `seed`.
    pub fn init<T: Scalar>(config: &ModelConfig, tau: usize, seed: u64) -> Result<(Self, ParamSet<T>)> {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Self::new(&mut ps, config, tau, &mut rng)?;
        Ok((model, ps))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Grid geometry of each scale for an `height` x `width` input.
    pub fn geometries(&self, height: usize, width: usize) -> [GridGeometry; 3] {
        STRIDES.map(|stride| GridGeometry {
            rows: height / stride,
            cols: width / stride,
            stride,
            boxes: self.config.boxes_per_cell,
            classes: self.config.num_classes,
        })
    }

    /// `x` is `[clips * tau, 3, H, W]` with each clip's frames adjacent.
    /// Returns one `[clips * tau, rows, cols, boxes, 5 + C]` tensor per scale.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<[Var; 3]> {
        let s = ctx.g.shape(x).to_vec();
        check_divisible(s[2], s[3], MAX_STRIDE)?;
        let pyr = self.backbone.forward(ctx, x)?;
        let mut feats = Vec::with_capacity(3);
        for (branch, f) in self.branches.iter().zip(pyr.levels()) {
            feats.push(branch.forward(ctx, f)?);
        }
        let mut fused: [Option<Var>; 3] = [None; 3];
        let mut above: Option<Var> = None;
        for i in (0..3).rev() {
            let mut n = self.lateral[i].forward(ctx, feats[i]);
            if let Some(a) = above {
                let up = ctx.g.upsample2x(a);
                n = ctx.g.add(n, up);
            }
            above = Some(n);
            fused[i] = Some(self.smooth[i].forward(ctx, n));
        }
        let (boxes, fields) = (self.config.boxes_per_cell, 5 + self.config.num_classes);
        let mut out = [x; 3];
        for i in 0..3 {
            let y = self.heads[i].forward(ctx, fused[i].expect("every level fused"));
            let ys = ctx.g.shape(y).to_vec();
            let y = ctx.g.reshape(y, &[ys[0], boxes, fields, ys[2], ys[3]]);
            out[i] = ctx.g.permute(y, &[0, 3, 4, 1, 2]);
        }
        Ok(out)
    }

    /// Inference on `[clips * tau, 3, H, W]`; one prediction per frame and scale.
    pub fn predict<T: Scalar>(&self, params: &ParamSet<T>, frames: Tensor<T>) -> Result<Vec<[GridPrediction<T>; 3]>> {
        let (n, h, w) = (frames.shape()[0], frames.shape()[2], frames.shape()[3]);
        let geos = self.geometries(h, w);
        let mut ctx = Ctx::new(params, false);
        let x = ctx.g.constant(frames);
        let raws = self.forward(&mut ctx, x)?;
        let per_frame: Vec<Vec<GridPrediction<T>>> = raws
            .iter()
            .zip(geos)
            .map(|(&r, geo)| {
                let t = ctx.g.value(r);
                let per = t.numel() / n;
                let shape = [geo.rows, geo.cols, geo.boxes, geo.fields()];
                (0..n)
                    .map(|i| {
                        GridPrediction::new(Tensor::from_vec(&shape, t.data()[i * per..(i + 1) * per].to_vec()), geo)
                    })
                    .collect()
            })
            .collect();
        Ok((0..n).map(|i| std::array::from_fn(|s| per_frame[s][i].clone())).collect())
    }
}

//! Small CSP-style feature extractor with SPP on the deepest level.
//!
//! Every downsampling step is a stride-2 convolution; max pooling only
//! appears inside SPP, at stride 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Conv, Ctx, ParamSet};
use crate::tensor::{Graph, Scalar, Tensor, Var};
use crate::{Error, Result};

pub const STRIDES: [usize; 3] = [8, 16, 32];
pub const MAX_STRIDE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    /// Two stride-2 stem convolutions.
    pub stem_channels: [usize; 2],
    /// Output channels of the P3, P4 and P5 stages.
    pub stage_channels: [usize; 3],
    /// Bottlenecks per CSP stage.
    pub csp_depth: usize,
    pub spp_kernels: Vec<usize>,
    pub activation: Activation,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            stem_channels: [16, 32],
            stage_channels: [48, 64, 96],
            csp_depth: 1,
            spp_kernels: vec![5, 9, 13],
            activation: Activation::Silu,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stem_channels.iter().chain(&self.stage_channels).any(|&c| c < 2) {
            return Err(Error::Config("backbone widths must be at least 2".into()));
        }
        if self.spp_kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(format!("SPP kernels {:?} must be odd", self.spp_kernels)));
        }
        Ok(())
    }
}

/// Reject inputs whose size is not a multiple of `multiple`, reporting the
/// padding that would fix it.
pub fn check_divisible(height: usize, width: usize, multiple: usize) -> Result<()> {
    let pad = |v: usize| (multiple - v % multiple) % multiple;
    if !height.is_multiple_of(multiple) || !width.is_multiple_of(multiple) || height == 0 || width == 0 {
        return Err(Error::NotDivisible { height, width, multiple, pad_h: pad(height), pad_w: pad(width) });
    }
    Ok(())
}

/// Identity branch concatenated with stride-1, same-size max pools.
pub fn spp<T: Scalar>(g: &mut Graph<T>, x: Var, kernels: &[usize]) -> Var {
    let mut parts = vec![x];
    parts.extend(kernels.iter().map(|&k| g.max_pool_same(x, k)));
    g.concat(&parts, 1)
}

#[derive(Clone, Debug)]
struct CspStage {
    down: Conv,
    main: Conv,
    shortcut: Conv,
    blocks: Vec<(Conv, Conv)>,
    fuse: Conv,
}

impl CspStage {
    fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        name: &str,
        cin: usize,
        cout: usize,
        depth: usize,
        act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let half = (cout / 2).max(1);
        Self {
            down: Conv::new(ps, &format!("{name}.down"), cin, cout, 3, 2, act, rng),
            main: Conv::new(ps, &format!("{name}.main"), cout, half, 1, 1, act, rng),
            shortcut: Conv::new(ps, &format!("{name}.shortcut"), cout, half, 1, 1, act, rng),
            blocks: (0..depth)
                .map(|i| {
                    (
                        Conv::new(ps, &format!("{name}.block{i}.cv1"), half, half, 1, 1, act, rng),
                        Conv::new(ps, &format!("{name}.block{i}.cv2"), half, half, 3, 1, act, rng),
                    )
                })
                .collect(),
            fuse: Conv::new(ps, &format!("{name}.fuse"), 2 * half, cout, 1, 1, act, rng),
        }
    }

    fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Var {
        let x = self.down.forward(ctx, x);
        let mut m = self.main.forward(ctx, x);
        for (a, b) in &self.blocks {
            let h = a.forward(ctx, m);
            let h = b.forward(ctx, h);
            m = ctx.g.add(m, h);
        }
        let s = self.shortcut.forward(ctx, x);
        let cat = ctx.g.concat(&[m, s], 1);
        self.fuse.forward(ctx, cat)
    }
}

#[derive(Clone, Debug)]
struct SppBlock {
    reduce: Conv,
    fuse: Conv,
    kernels: Vec<usize>,
}

/// Multi-scale features of a batch of frames, each `[N, C, H/s, W/s]`.
#[derive(Clone, Copy, Debug)]
pub struct Pyramid {
    pub p3: Var,
    pub p4: Var,
    pub p5: Var,
}

impl Pyramid {
    pub fn levels(&self) -> [Var; 3] {
        [self.p3, self.p4, self.p5]
    }
}

/// Per-frame feature maps, `[C, H, W]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid<T> {
    pub p3: Tensor<T>,
    pub p4: Tensor<T>,
    pub p5: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    stem: [Conv; 2],
    stages: Vec<CspStage>,
    spp: SppBlock,
    config: BackboneConfig,
}

impl Backbone {
    pub fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        name: &str,
        config: &BackboneConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let act = config.activation;
        let [s0, s1] = config.stem_channels;
        let stem = [
            Conv::new(ps, &format!("{name}.stem0"), 3, s0, 3, 2, act, rng),
            Conv::new(ps, &format!("{name}.stem1"), s0, s1, 3, 2, act, rng),
        ];
        let mut cin = s1;
        let stages = config
            .stage_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let st = CspStage::new(ps, &format!("{name}.stage{}", i + 3), cin, c, config.csp_depth, act, rng);
                cin = c;
                st
            })
            .collect();
        let c5 = config.stage_channels[2];
        let half = (c5 / 2).max(1);
        let spp = SppBlock {
            reduce: Conv::new(ps, &format!("{name}.spp.reduce"), c5, half, 1, 1, act, rng),
            fuse: Conv::new(ps, &format!("{name}.spp.fuse"), half * (1 + config.spp_kernels.len()), c5, 1, 1, act, rng),
            kernels: config.spp_kernels.clone(),
        };
        Ok(Self { stem, stages, spp, config: config.clone() })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// `x` is `[N, 3, H, W]` with frames flattened over batch and time.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Pyramid> {
        let shape = ctx.g.shape(x).to_vec();
        check_divisible(shape[2], shape[3], MAX_STRIDE)?;
        let mut h = self.stem[0].forward(ctx, x);
        h = self.stem[1].forward(ctx, h);
        let p3 = self.stages[0].forward(ctx, h);
        let p4 = self.stages[1].forward(ctx, p3);
        let p5 = self.stages[2].forward(ctx, p4);
        let r = self.spp.reduce.forward(ctx, p5);
        let pooled = spp(&mut ctx.g, r, &self.spp.kernels);
        let p5 = self.spp.fuse.forward(ctx, pooled);
        Ok(Pyramid { p3, p4, p5 })
    }

    /// Run on `[N, 3, H, W]` frames and split the result per frame.
    pub fn extract<T: Scalar>(&self, params: &ParamSet<T>, frames: &Tensor<T>) -> Result<Vec<FeaturePyramid<T>>> {
        let mut ctx = Ctx::new(params, false);
        let x = ctx.g.constant(frames.clone());
        let p = self.forward(&mut ctx, x)?;
        let n = frames.shape()[0];
        let split = |v: Var| {
            let t = ctx.g.value(v);
            let per = t.numel() / n;
            let shape = &t.shape()[1..];
            (0..n).map(|i| Tensor::from_vec(shape, t.data()[i * per..(i + 1) * per].to_vec())).collect::<Vec<_>>()
        };
        let (p3, p4, p5) = (split(p.p3), split(p.p4), split(p.p5));
        Ok(p3.into_iter().zip(p4).zip(p5).map(|((p3, p4), p5)| FeaturePyramid { p3, p4, p5 }).collect())
    }
}

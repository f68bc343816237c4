use serde::{Deserialize, Serialize};

use super::{TargetMap, SIZE_LOGIT_CLAMP};
use crate::tensor::{Graph, Scalar, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_noobj: f64,
    pub lambda_coord: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_noobj: 5.0, lambda_coord: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_noobj >= 0.0 && self.lambda_coord >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Predicted quantities in target units: cell-relative centers, sizes in
/// stride units, objectness and class probabilities.
#[derive(Clone, Copy, Debug)]
pub struct Decoded {
    pub xy: Var,
    pub wh: Var,
    pub obj: Var,
    pub cls: Var,
}

/// Decode raw `[.., 5 + C]` head outputs inside the graph.
pub fn decode_vars<T: Scalar>(g: &mut Graph<T>, raw: Var) -> Decoded {
    let last = g.shape(raw).len() - 1;
    let classes = g.shape(raw)[last] - 5;
    let txy = g.narrow(raw, last, 0, 2);
    let twh = g.narrow(raw, last, 2, 2);
    let tobj = g.narrow(raw, last, 4, 1);
    let tcls = g.narrow(raw, last, 5, classes);
    let twh = g.clamp(twh, -SIZE_LOGIT_CLAMP, SIZE_LOGIT_CLAMP);
    Decoded { xy: g.sigmoid(txy), wh: g.exp(twh), obj: g.sigmoid(tobj), cls: g.sigmoid(tcls) }
}

fn constant<T: Scalar>(g: &mut Graph<T>, shape: &[usize], data: &[f64]) -> Var {
    g.constant(Tensor::from_f64(shape, data))
}

/// `sum (C - C_hat)^2` over responsible slots plus `lambda_noobj` times the
/// same over all other slots.
pub fn objectness_loss<T: Scalar>(g: &mut Graph<T>, obj: Var, targets: &TargetMap, weights: &LossWeights) -> Var {
    let shape = targets.slot_shape(1);
    let w: Vec<f64> = targets.mask.iter().map(|&m| m + weights.lambda_noobj * (1.0 - m)).collect();
    let mask = constant(g, &shape, &targets.mask);
    let w = constant(g, &shape, &w);
    let d = g.sub(obj, mask);
    let d2 = g.square(d);
    let wd = g.mul(w, d2);
    g.sum(wd)
}

/// `sum_c (p(c) - p_hat(c))^2` over responsible slots.
pub fn classification_loss<T: Scalar>(g: &mut Graph<T>, cls: Var, targets: &TargetMap) -> Var {
    let classes = targets.geometry.classes;
    if classes == 0 {
        return g.constant(Tensor::scalar(T::zero()));
    }
    let mask = constant(g, &targets.slot_shape(1), &targets.mask);
    let target = constant(g, &targets.slot_shape(classes), &targets.cls);
    let d = g.sub(cls, target);
    let d2 = g.square(d);
    let md = g.mul(mask, d2);
    g.sum(md)
}

/// Squared center error plus `lambda_coord` times squared error of the
/// square-rooted sizes, over responsible slots.
pub fn localization_loss<T: Scalar>(
    g: &mut Graph<T>,
    xy: Var,
    wh: Var,
    targets: &TargetMap,
    weights: &LossWeights,
) -> Result<Var> {
    if let Some(v) = g.value(wh).data().iter().map(|v| v.as_f64()).chain(targets.wh.iter().copied()).find(|v| *v < 0.0)
    {
        return Err(Error::NegativeSize(v));
    }
    let mask = constant(g, &targets.slot_shape(1), &targets.mask);
    let xy_t = constant(g, &targets.slot_shape(2), &targets.xy);
    let sqrt_t: Vec<f64> = targets.wh.iter().map(|v| v.sqrt()).collect();
    let sqrt_t = constant(g, &targets.slot_shape(2), &sqrt_t);

    let d = g.sub(xy, xy_t);
    let d2 = g.square(d);
    let center = g.mul(mask, d2);
    let center = g.sum(center);

    let s = g.sqrt(wh);
    let d = g.sub(s, sqrt_t);
    let d2 = g.square(d);
    let size = g.mul(mask, d2);
    let size = g.sum(size);
    let size = g.scale(size, weights.lambda_coord);
    Ok(g.add(center, size))
}

/// Scalar loss nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub obj: Var,
    pub cls: Var,
    pub loc: Var,
    pub total: Var,
}

impl LossTerms {
    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> [f64; 4] {
        [self.obj, self.cls, self.loc, self.total].map(|v| g.value(v).item().as_f64())
    }
}

/// The three losses of one scale, summed over every frame in `raw`
/// (`[frames, rows, cols, boxes, 5 + C]`).
pub fn scale_losses<T: Scalar>(
    g: &mut Graph<T>,
    raw: Var,
    targets: &TargetMap,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let geo = targets.geometry;
    assert_eq!(g.shape(raw), &targets.slot_shape(geo.fields()), "prediction and target grids differ");
    let d = decode_vars(g, raw);
    let obj = objectness_loss(g, d.obj, targets, weights);
    let cls = classification_loss(g, d.cls, targets);
    let loc = localization_loss(g, d.xy, d.wh, targets, weights)?;
    let total = g.add(obj, cls);
    let total = g.add(total, loc);
    Ok(LossTerms { obj, cls, loc, total })
}

/// Mean over frames and scales of the per-frame, per-scale loss sums.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    raws: &[Var],
    targets: &[TargetMap],
    weights: &LossWeights,
) -> Result<LossTerms> {
    assert_eq!(raws.len(), targets.len(), "one target map per scale");
    assert!(!raws.is_empty(), "at least one scale");
    let frames = targets[0].frames;
    assert!(targets.iter().all(|t| t.frames == frames), "scales disagree on frame count");
    let norm = 1.0 / (frames * raws.len()) as f64;
    let mut acc: Option<[Var; 3]> = None;
    for (&raw, t) in raws.iter().zip(targets) {
        let s = scale_losses(g, raw, t, weights)?;
        acc = Some(match acc {
            None => [s.obj, s.cls, s.loc],
            Some([o, c, l]) => [g.add(o, s.obj), g.add(c, s.cls), g.add(l, s.loc)],
        });
    }
    let [o, c, l] = acc.expect("non-empty").map(|v| g.scale(v, norm));
    let total = g.add(o, c);
    let total = g.add(total, l);
    Ok(LossTerms { obj: o, cls: c, loc: l, total })
}

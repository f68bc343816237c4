use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Ctx, ParamId, ParamSet};
use crate::tensor::{Scalar, Tensor, Var};

pub(crate) fn uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, ctx: &mut Ctx<'_, T>, x: Var) -> Var {
        match self {
            Activation::Silu => ctx.g.silu(x),
            Activation::Gelu => ctx.g.gelu(x),
            Activation::Identity => x,
        }
    }
}

/// Convolution with bias followed by an activation.
#[derive(Clone, Debug)]
pub struct Conv {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
    pad: usize,
    act: Activation,
    pub out_channels: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (cin * k * k) as f64;
        let bound = (3.0 / fan_in).sqrt();
        let weight = ps.register(format!("{name}.weight"), uniform(rng, &[cout, cin, k, k], bound));
        let bias = ps.register(format!("{name}.bias"), uniform(rng, &[cout], 1.0 / fan_in.sqrt()));
        Self { weight, bias, stride, pad: k / 2, act, out_channels: cout }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Var {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        let y = ctx.g.conv2d(x, w, Some(b), self.stride, self.pad);
        self.act.apply(ctx, y)
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }
}

/// Affine map over the last axis: `x [.., in] -> [.., out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let bound = 0.02 * 3f64.sqrt();
        let weight = ps.register(format!("{name}.weight"), uniform(rng, &[din, dout], bound));
        let bias = ps.register(format!("{name}.bias"), Tensor::zeros(&[dout]));
        Self { weight, bias }
    }

    /// Weight and bias start at zero, so the layer initially outputs zeros.
    pub fn zeros<T: Scalar>(ps: &mut ParamSet<T>, name: &str, din: usize, dout: usize) -> Self {
        let weight = ps.register(format!("{name}.weight"), Tensor::zeros(&[din, dout]));
        let bias = ps.register(format!("{name}.bias"), Tensor::zeros(&[dout]));
        Self { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Var {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        let y = ctx.g.matmul(x, w);
        ctx.g.add(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
    eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, dim: usize) -> Self {
        let gamma = ps.register(format!("{name}.gamma"), Tensor::full(&[dim], T::one()));
        let beta = ps.register(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta, eps: 1e-5 }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Var {
        let g = ctx.param(self.gamma);
        let b = ctx.param(self.beta);
        ctx.g.layer_norm(x, g, b, self.eps)
    }
}

//! Spatio-temporal shifted-window self-attention.
//!
//! Feature maps of a clip are stacked into a `[B, T, H, W, C]` volume and
//! attended within `M x M x T` windows, alternating plain and shifted
//! windows. Each branch ends in a zero-initialized projection added back to
//! its input, so a fresh branch is the identity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::layers::uniform;
use crate::nn::{Ctx, LayerNorm, Linear, ParamId, ParamSet};
use crate::tensor::{Graph, Scalar, Tensor, Var};
use crate::{Error, Result};

/// Logit offset for masked pairs; large enough that their softmax weight
/// underflows to zero.
pub const MASK_VALUE: f64 = -1e9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowGeometry {
    /// Spatial patch size; maps are zero-padded to a multiple of it.
    pub patch: usize,
    /// Spatial attention window `M`; must divide `patch`.
    pub window: usize,
    /// Shift of the shifted layers along `(h, w, t)`.
    pub shift: [usize; 3],
    /// Number of (plain, shifted) layer pairs.
    pub depth: usize,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        Self { patch: 8, window: 8, shift: [4, 4, 0], depth: 5 }
    }
}

impl WindowGeometry {
    pub fn validate(&self, tau: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if tau == 0 {
            return bad("temporal window must be at least 1".into());
        }
        if self.patch == 0 || self.window == 0 || !self.patch.is_multiple_of(self.window) {
            return bad(format!("window {} must divide patch {}", self.window, self.patch));
        }
        if self.shift[0] >= self.patch || self.shift[1] >= self.patch {
            return bad(format!("shift {:?} must be smaller than patch {}", self.shift, self.patch));
        }
        if self.shift[0] >= self.window || self.shift[1] >= self.window || (self.shift[2] > 0 && self.shift[2] >= tau) {
            return bad(format!("shift {:?} must be smaller than the window ({}, {tau})", self.shift, self.window));
        }
        Ok(())
    }

    /// Window extent along `(t, h, w)`.
    pub fn window_dims(&self, tau: usize) -> [usize; 3] {
        [tau, self.window, self.window]
    }

    fn shift_thw(&self) -> [usize; 3] {
        [self.shift[2], self.shift[0], self.shift[1]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionBranchConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub relative_position_bias: bool,
    /// Initial relative bias of `-locality_prior * (|dt| + |dh| + |dw|)`, so
    /// attention starts out favouring nearby tokens. 0 keeps a flat start.
    pub locality_prior: f64,
    pub mlp_ratio: usize,
    pub geometry: WindowGeometry,
}

impl Default for AttentionBranchConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            heads: 2,
            relative_position_bias: true,
            locality_prior: 0.0,
            mlp_ratio: 2,
            geometry: WindowGeometry::default(),
        }
    }
}

impl AttentionBranchConfig {
    pub fn validate(&self, tau: usize) -> Result<()> {
        if !(self.locality_prior >= 0.0) {
            return Err(Error::Config(format!("locality prior {} must be non-negative", self.locality_prior)));
        }
        if self.heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embed dim {} must be a positive multiple of {} heads",
                self.embed_dim, self.heads
            )));
        }
        self.geometry.validate(tau)
    }
}

/// `[B, T, H, W, C]` to `[B * nWin, T' * M * M, C]` with window extent
/// `dims = (T', M, M)`. Tokens inside a window are ordered `(t, h, w)`.
pub fn window_partition<T: Scalar>(g: &mut Graph<T>, x: Var, dims: [usize; 3]) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let [b, t, h, w, c] = s[..] else { panic!("expected a [B, T, H, W, C] volume, got {s:?}") };
    let [wt, wh, ww] = dims;
    if t % wt != 0 || h % wh != 0 || w % ww != 0 {
        let pad = |v: usize, m: usize| (m - v % m) % m;
        return Err(Error::NotDivisible { height: h, width: w, multiple: wh, pad_h: pad(h, wh), pad_w: pad(w, ww) });
    }
    let (nt, nh, nw) = (t / wt, h / wh, w / ww);
    let v = g.reshape(x, &[b, nt, wt, nh, wh, nw, ww, c]);
    let v = g.permute(v, &[0, 1, 3, 5, 2, 4, 6, 7]);
    Ok(g.reshape(v, &[b * nt * nh * nw, wt * wh * ww, c]))
}

/// Inverse of [`window_partition`] for a volume of shape `[b, t, h, w, c]`.
pub fn window_merge<T: Scalar>(g: &mut Graph<T>, windows: Var, volume: [usize; 5], dims: [usize; 3]) -> Var {
    let [b, t, h, w, c] = volume;
    let [wt, wh, ww] = dims;
    let v = g.reshape(windows, &[b, t / wt, h / wh, w / ww, wt, wh, ww, c]);
    let v = g.permute(v, &[0, 1, 4, 2, 5, 3, 6, 7]);
    g.reshape(v, &[b, t, h, w, c])
}

/// Cyclic roll of a `[B, T, H, W, C]` volume by `(t, h, w)`; element `i`
/// moves to `i + shift`.
pub fn cyclic_shift<T: Scalar>(g: &mut Graph<T>, x: Var, shift: [isize; 3]) -> Var {
    let mut v = x;
    for (axis, s) in [(1, shift[0]), (2, shift[1]), (3, shift[2])] {
        if s != 0 {
            v = g.roll(v, axis, s);
        }
    }
    v
}

/// Region label of each index along one axis after rolling by `-shift`.
fn region_labels(len: usize, window: usize, shift: usize) -> Vec<usize> {
    (0..len)
        .map(|i| {
            if shift == 0 || i < len - window {
                0
            } else if i < len - shift {
                1
            } else {
                2
            }
        })
        .collect()
}

/// Additive attention mask `[nWin, N, N]` for the shifted layout of a
/// `(t, h, w)` volume: pairs of tokens that were not neighbours before the
/// roll get [`MASK_VALUE`].
pub fn shift_mask(volume: [usize; 3], dims: [usize; 3], shift: [usize; 3]) -> Vec<f64> {
    let labels: Vec<Vec<usize>> = (0..3).map(|a| region_labels(volume[a], dims[a], shift[a])).collect();
    let [t, h, w] = volume;
    let [wt, wh, ww] = dims;
    let n = wt * wh * ww;
    let mut mask = Vec::with_capacity((t / wt) * (h / wh) * (w / ww) * n * n);
    for bt in 0..t / wt {
        for bh in 0..h / wh {
            for bw in 0..w / ww {
                let ids: Vec<usize> = (0..n)
                    .map(|k| {
                        let (i, j, l) = (bt * wt + k / (wh * ww), bh * wh + (k / ww) % wh, bw * ww + k % ww);
                        labels[0][i] * 9 + labels[1][j] * 3 + labels[2][l]
                    })
                    .collect();
                for &a in &ids {
                    mask.extend(ids.iter().map(|&b| if a == b { 0.0 } else { MASK_VALUE }));
                }
            }
        }
    }
    mask
}

/// Row into the relative-position table for every token pair of a window.
pub fn relative_position_index(dims: [usize; 3]) -> Vec<usize> {
    let [wt, wh, ww] = dims;
    let coords: Vec<[usize; 3]> =
        (0..wt).flat_map(|t| (0..wh).flat_map(move |h| (0..ww).map(move |w| [t, h, w]))).collect();
    let (sh, sw) = (2 * wh - 1, 2 * ww - 1);
    let mut idx = Vec::with_capacity(coords.len() * coords.len());
    for a in &coords {
        for b in &coords {
            let dt = a[0] + wt - 1 - b[0];
            let dh = a[1] + wh - 1 - b[1];
            let dw = a[2] + ww - 1 - b[2];
            idx.push((dt * sh + dh) * sw + dw);
        }
    }
    idx
}

/// `softmax(q k^T / sqrt(d) + bias) v` over the last two axes. `q`, `k`, `v`
/// are `[.., N, d]`; `bias` broadcasts against the `[.., N, N]` logits.
/// Returns the output and the attention weights.
pub fn scaled_dot_attention<T: Scalar>(g: &mut Graph<T>, q: Var, k: Var, v: Var, bias: Option<Var>) -> (Var, Var) {
    let d = *g.shape(q).last().expect("rank >= 1");
    let logits = g.matmul_t(q, k, false, true);
    let mut logits = g.scale(logits, 1.0 / (d as f64).sqrt());
    if let Some(b) = bias {
        logits = g.add(logits, b);
    }
    let weights = g.softmax_last(logits);
    (g.matmul(weights, v), weights)
}

/// Multi-head attention within windows.
#[derive(Clone, Debug)]
pub struct WindowAttention {
    qkv: Linear,
    proj: Linear,
    table: Option<ParamId>,
    heads: usize,
    dims: [usize; 3],
}

impl WindowAttention {
    pub fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        name: &str,
        dim: usize,
        heads: usize,
        dims: [usize; 3],
        relative_bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let rows = (2 * dims[0] - 1) * (2 * dims[1] - 1) * (2 * dims[2] - 1);
        let table =
            relative_bias.then(|| ps.register(format!("{name}.relative_bias"), uniform(rng, &[rows, heads], 0.02)));
        Self {
            qkv: Linear::new(ps, &format!("{name}.qkv"), dim, 3 * dim, rng),
            proj: Linear::new(ps, &format!("{name}.proj"), dim, dim, rng),
            table,
            heads,
            dims,
        }
    }

    /// Shift the relative bias table by `-gamma` per unit of `(t, h, w)`
    /// L1 distance.
    pub fn add_locality_prior<T: Scalar>(&self, ps: &mut ParamSet<T>, gamma: f64) {
        let Some(id) = self.table else { return };
        let [wt, wh, ww] = self.dims;
        let (sh, sw) = (2 * wh - 1, 2 * ww - 1);
        let table = ps.get_mut(id);
        for (row, vals) in table.data_mut().chunks_mut(self.heads).enumerate() {
            let (dt, dh, dw) = (row / (sh * sw), (row / sw) % sh, row % sw);
            let dist = dt.abs_diff(wt - 1) + dh.abs_diff(wh - 1) + dw.abs_diff(ww - 1);
            for v in vals {
                *v = T::of(v.as_f64() - gamma * dist as f64);
            }
        }
    }

    /// `windows` is `[nW, N, C]`; `mask` is `[nW_image, N, N]` for
    /// `nW = batch * nW_image`. Returns the output and the `[nW, heads, N, N]`
    /// attention weights.
    pub fn forward<T: Scalar>(
        &self,
        ctx: &mut Ctx<'_, T>,
        windows: Var,
        mask: Option<&Tensor<T>>,
    ) -> Result<(Var, Var)> {
        if !ctx.g.value(windows).all_finite() {
            return Err(Error::NonFinite("attention input".into()));
        }
        let s = ctx.g.shape(windows).to_vec();
        let [nw, n, c] = s[..] else { panic!("expected [windows, tokens, channels], got {s:?}") };
        let (h, d) = (self.heads, c / self.heads);
        let qkv = self.qkv.forward(ctx, windows);
        let qkv = ctx.g.reshape(qkv, &[nw, n, 3, h, d]);
        let qkv = ctx.g.permute(qkv, &[2, 0, 3, 1, 4]);
        let q = ctx.g.narrow(qkv, 0, 0, 1);
        let k = ctx.g.narrow(qkv, 0, 1, 1);
        let v = ctx.g.narrow(qkv, 0, 2, 1);
        let [q, k, v] = [q, k, v].map(|t| ctx.g.reshape(t, &[nw, h, n, d]));

        let mut bias = None;
        if let Some(table) = self.table {
            let idx = relative_position_index(self.dims);
            let table = ctx.param(table);
            let b = ctx.g.gather_rows(table, &idx);
            let b = ctx.g.reshape(b, &[n, n, h]);
            bias = Some(ctx.g.permute(b, &[2, 0, 1]));
        }
        let (out, weights) = match mask {
            None => scaled_dot_attention(&mut ctx.g, q, k, v, bias),
            Some(m) => {
                let per_image = m.shape()[0];
                let batch = nw / per_image;
                let mask = ctx.g.constant(m.clone().reshape(&[1, per_image, 1, n, n]));
                let bias = match bias {
                    Some(b) => ctx.g.add(mask, b),
                    None => mask,
                };
                let [q, k, v] = [q, k, v].map(|t| ctx.g.reshape(t, &[batch, per_image, h, n, d]));
                let (o, w) = scaled_dot_attention(&mut ctx.g, q, k, v, Some(bias));
                (ctx.g.reshape(o, &[nw, h, n, d]), ctx.g.reshape(w, &[nw, h, n, n]))
            }
        };
        let out = ctx.g.permute(out, &[0, 2, 1, 3]);
        let out = ctx.g.reshape(out, &[nw, n, c]);
        Ok((self.proj.forward(ctx, out), weights))
    }
}

#[derive(Clone, Debug)]
struct Block {
    norm1: LayerNorm,
    attn: WindowAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    shift: [usize; 3],
}

impl Block {
    /// `x` is a padded `[B, T, H, W, C]` volume.
    fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let vol: [usize; 5] = ctx.g.shape(x).try_into().expect("rank 5 volume");
        let dims = self.attn.dims;
        let shifted = self.shift.iter().any(|&s| s > 0);
        let back = self.shift.map(|s| s as isize);

        let y = self.norm1.forward(ctx, x);
        let y = if shifted { cyclic_shift(&mut ctx.g, y, back.map(|s| -s)) } else { y };
        let windows = window_partition(&mut ctx.g, y, dims)?;
        let mask = shifted.then(|| {
            let m = shift_mask([vol[1], vol[2], vol[3]], dims, self.shift);
            let n = dims.iter().product::<usize>();
            Tensor::from_f64(&[m.len() / (n * n), n, n], &m)
        });
        let (a, _) = self.attn.forward(ctx, windows, mask.as_ref())?;
        let a = window_merge(&mut ctx.g, a, vol, dims);
        let a = if shifted { cyclic_shift(&mut ctx.g, a, back) } else { a };
        let x = ctx.g.add(x, a);

        let y = self.norm2.forward(ctx, x);
        let y = self.fc1.forward(ctx, y);
        let y = ctx.g.gelu(y);
        let y = self.fc2.forward(ctx, y);
        Ok(ctx.g.add(x, y))
    }
}

/// One scale's spatio-temporal transformer.
#[derive(Clone, Debug)]
pub struct StBranch {
    input: Linear,
    blocks: Vec<Block>,
    output: Linear,
    config: AttentionBranchConfig,
    tau: usize,
}

impl StBranch {
    pub fn new<T: Scalar>(
        ps: &mut ParamSet<T>,
        name: &str,
        channels: usize,
        tau: usize,
        config: &AttentionBranchConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate(tau)?;
        let e = config.embed_dim;
        let geo = &config.geometry;
        let dims = geo.window_dims(tau);
        let shift = geo.shift_thw();
        let mut blocks = Vec::with_capacity(2 * geo.depth);
        for i in 0..2 * geo.depth {
            let p = format!("{name}.block{i}");
            let attn = WindowAttention::new(
                ps,
                &format!("{p}.attn"),
                e,
                config.heads,
                dims,
                config.relative_position_bias,
                rng,
            );
            if config.locality_prior > 0.0 {
                attn.add_locality_prior(ps, config.locality_prior);
            }
            blocks.push(Block {
                norm1: LayerNorm::new(ps, &format!("{p}.norm1"), e),
                attn,
                norm2: LayerNorm::new(ps, &format!("{p}.norm2"), e),
                fc1: Linear::new(ps, &format!("{p}.mlp.fc1"), e, e * config.mlp_ratio, rng),
                fc2: Linear::new(ps, &format!("{p}.mlp.fc2"), e * config.mlp_ratio, e, rng),
                shift: if i % 2 == 1 { shift } else { [0; 3] },
            });
        }
        Ok(Self {
            input: Linear::new(ps, &format!("{name}.input"), channels, e, rng),
            blocks,
            output: Linear::zeros(ps, &format!("{name}.output"), e, channels),
            config: config.clone(),
            tau,
        })
    }

    pub fn config(&self) -> &AttentionBranchConfig {
        &self.config
    }

    /// `x` is `[B * tau, C, H, W]` (frames of a clip adjacent); the result
    /// has the same shape.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let s = ctx.g.shape(x).to_vec();
        let [bt, c, h, w] = s[..] else { panic!("expected [B*T, C, H, W], got {s:?}") };
        let t = self.tau;
        assert_eq!(bt % t, 0, "batch {bt} is not a whole number of {t}-frame clips");
        let b = bt / t;
        let p = self.config.geometry.patch;
        let (ph, pw) = ((p - h % p) % p, (p - w % p) % p);

        let v = ctx.g.reshape(x, &[b, t, c, h, w]);
        let v = ctx.g.permute(v, &[0, 1, 3, 4, 2]);
        let mut v = if ph + pw > 0 {
            ctx.g.pad(v, &[(0, 0), (0, 0), (ph / 2, ph - ph / 2), (pw / 2, pw - pw / 2), (0, 0)])
        } else {
            v
        };
        v = self.input.forward(ctx, v);
        for blk in &self.blocks {
            v = blk.forward(ctx, v)?;
        }
        let mut v = self.output.forward(ctx, v);
        if ph + pw > 0 {
            v = ctx.g.narrow(v, 2, ph / 2, h);
            v = ctx.g.narrow(v, 3, pw / 2, w);
        }
        let v = ctx.g.permute(v, &[0, 1, 4, 2, 3]);
        let v = ctx.g.reshape(v, &[bt, c, h, w]);
        Ok(ctx.g.add(x, v))
    }
}

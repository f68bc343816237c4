use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aerodet::attention::{
    cyclic_shift, relative_position_index, shift_mask, window_merge, window_partition, AttentionBranchConfig, StBranch,
    WindowAttention, WindowGeometry,
};
use aerodet::nn::{Ctx, ParamSet};
use aerodet::pipeline::grad_check_params;
use aerodet::tensor::{Graph, Tensor};

use crate::{verdict, Outcome};

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product::<usize>();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn round_trips() -> Result<(), String> {
    let cases: [([usize; 5], [usize; 3], [isize; 3]); 4] = [
        ([1, 3, 8, 8, 4], [3, 4, 4], [0, 2, 2]),
        ([2, 5, 16, 8, 3], [5, 8, 8], [0, 4, 4]),
        ([1, 4, 12, 6, 2], [2, 3, 3], [1, 1, 2]),
        ([3, 1, 4, 4, 5], [1, 2, 2], [0, -1, 3]),
    ];
    for (i, (vol, dims, shift)) in cases.into_iter().enumerate() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(random(&vol, i as u64));
        let w = window_partition(&mut g, x, dims).map_err(|e| e.to_string())?;
        let back = window_merge(&mut g, w, vol, dims);
        if g.value(back).data() != g.value(x).data() {
            return Err(format!("partition/merge of {vol:?} by {dims:?} is not exact"));
        }
        let s = cyclic_shift(&mut g, x, shift);
        let un = cyclic_shift(&mut g, s, shift.map(|v| -v));
        if g.value(un).data() != g.value(x).data() {
            return Err(format!("shift {shift:?} of {vol:?} is not exact"));
        }
    }
    Ok(())
}

/// Attention module with random weights, plus its parameters.
fn module(c: usize, heads: usize, dims: [usize; 3], seed: u64) -> (ParamSet<f64>, WindowAttention) {
    let mut ps = ParamSet::new();
    let a = WindowAttention::new(&mut ps, "attn", c, heads, dims, true, &mut ChaCha8Rng::seed_from_u64(seed));
    let flat: Vec<f64> = random(&[ps.num_scalars()], seed + 1).into_vec().iter().map(|v| 0.5 * v).collect();
    ps.assign_flat(&flat);
    (ps, a)
}

/// Multi-head attention over one window's tokens written as plain loops.
fn dense(ps: &ParamSet<f64>, tokens: &[f64], n: usize, c: usize, heads: usize, dims: [usize; 3]) -> Vec<f64> {
    let get = |name: &str| ps.get(ps.id(name).unwrap()).data().to_vec();
    let (wqkv, bqkv) = (get("attn.qkv.weight"), get("attn.qkv.bias"));
    let (wp, bp) = (get("attn.proj.weight"), get("attn.proj.bias"));
    let table = get("attn.relative_bias");
    let idx = relative_position_index(dims);
    let d = c / heads;
    let proj = |i: usize, o: usize| bqkv[o] + (0..c).map(|k| tokens[i * c + k] * wqkv[k * 3 * c + o]).sum::<f64>();
    let mut cat = vec![0.0; n * c];
    for h in 0..heads {
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let dot: f64 = (0..d).map(|e| proj(i, h * d + e) * proj(j, c + h * d + e)).sum();
                    dot / (d as f64).sqrt() + table[idx[i * n + j] * heads + h]
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for (j, l) in logits.iter().enumerate() {
                for e in 0..d {
                    cat[i * c + h * d + e] += (l - m).exp() / z * proj(j, 2 * c + h * d + e);
                }
            }
        }
    }
    (0..n * c)
        .map(|k| {
            let (i, o) = (k / c, k % c);
            bp[o] + (0..c).map(|q| cat[i * c + q] * wp[q * c + o]).sum::<f64>()
        })
        .collect()
}

fn dense_equivalence() -> Result<f64, String> {
    let dims = [2, 3, 3];
    let (n, c, heads) = (18, 6, 2);
    let (ps, attn) = module(c, heads, dims, 11);
    let x = random(&[1, n, c], 12);
    let mut ctx = Ctx::new(&ps, false);
    let xv = ctx.g.constant(x.clone());
    let (o, _) = attn.forward(&mut ctx, xv, None).map_err(|e| e.to_string())?;
    let expect = dense(&ps, x.data(), n, c, heads, dims);
    Ok(ctx.g.value(o).data().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Shifted windows: returns (worst row-sum error, largest weight across a
/// wrap boundary, count of blocked pairs).
fn shifted_weights() -> Result<(f64, f64, usize), String> {
    let (t, h, w, c) = (2, 8, 8, 4);
    let dims = [2, 4, 4];
    let shift = [0usize, 2, 2];
    let (ps, attn) = module(c, 2, dims, 5);
    let mut ctx = Ctx::new(&ps, false);
    let x = ctx.g.constant(random(&[1, t, h, w, c], 6));
    let rolled = cyclic_shift(&mut ctx.g, x, shift.map(|s| -(s as isize)));
    let windows = window_partition(&mut ctx.g, rolled, dims).map_err(|e| e.to_string())?;
    let mask = Tensor::from_f64(&[4, 32, 32], &shift_mask([t, h, w], dims, shift));
    let (_, weights) = attn.forward(&mut ctx, windows, Some(&mask)).map_err(|e| e.to_string())?;
    let wts = ctx.g.value(weights).data();
    let n = 32;
    let row_err = wts.chunks(n).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);

    // token k of window (bh, bw) sits at rolled (y, x); it came from
    // ((y + 2) % h, (x + 2) % w). Two tokens are true neighbours when their
    // original offset equals their rolled offset on both axes.
    let rolled_pos = |win: usize, k: usize| ((win / 2) * 4 + (k / 4) % 4, (win % 2) * 4 + k % 4);
    let mut leak: f64 = 0.0;
    let mut blocked = 0;
    for win in 0..4 {
        for i in 0..n {
            for j in 0..n {
                let ((yi, xi), (yj, xj)) = (rolled_pos(win, i), rolled_pos(win, j));
                let orig = |p: usize, s: usize, m: usize| ((p + s) % m) as isize;
                let same_y = orig(yi, 2, h) - orig(yj, 2, h) == yi as isize - yj as isize;
                let same_x = orig(xi, 2, w) - orig(xj, 2, w) == xi as isize - xj as isize;
                if !(same_y && same_x) {
                    blocked += 1;
                    for head in 0..2 {
                        leak = leak.max(wts[((win * 2 + head) * n + i) * n + j]);
                    }
                }
            }
        }
    }
    Ok((row_err, leak, blocked))
}

fn branch_gradients() -> Result<f64, String> {
    let cfg = AttentionBranchConfig {
        embed_dim: 4,
        heads: 2,
        relative_position_bias: true,
        locality_prior: 0.0,
        mlp_ratio: 2,
        geometry: WindowGeometry { patch: 8, window: 4, shift: [2, 2, 0], depth: 1 },
    };
    let mut ps = ParamSet::new();
    let b = StBranch::new(&mut ps, "st", 4, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).map_err(|e| e.to_string())?;
    // the output projection starts at zero; randomize so every weight matters
    let flat: Vec<f64> = random(&[ps.num_scalars()], 7).into_vec().iter().map(|v| 0.5 * v).collect();
    ps.assign_flat(&flat);
    let x = random(&[2, 4, 8, 8], 8);
    let probe = random(&[512], 9);
    grad_check_params(
        &ps,
        |ctx| {
            let xv = ctx.g.constant(x.clone());
            let y = b.forward(ctx, xv).unwrap();
            let y = ctx.g.reshape(y, &[512]);
            let p = ctx.g.constant(probe.clone());
            let s = ctx.g.mul(y, p);
            ctx.g.sum(s)
        },
        1e-4,
    )
    .map_err(|e| e.to_string())
}

pub fn check() -> Outcome {
    round_trips()?;
    let dense_err = dense_equivalence()?;
    let (row_err, leak, blocked) = shifted_weights()?;
    let grad_err = branch_gradients()?;
    verdict(
        dense_err < 1e-6 && row_err < 1e-6 && leak <= 1e-8 && blocked > 0 && grad_err < 1e-4,
        format!(
            "round trips exact; dense diff {dense_err:.1e}; row sums within {row_err:.1e}; \
             max cross-boundary weight {leak:.1e} over {blocked} pairs; branch grad error {grad_err:.1e}"
        ),
    )
}

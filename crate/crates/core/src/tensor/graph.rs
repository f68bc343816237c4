use super::array::{
    broadcast_shape, broadcast_strides, contiguous_strides, gather_strided, is_tiling, numel, scatter_add_strided,
    Tensor,
};
use super::scalar::{gemm, MatRef};
use super::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Square,
    Sqrt,
    Exp,
    Sigmoid,
    Silu,
    Gelu,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, T),
    AddScalar(Var),
    Clamp(Var, T, T),
    Sum(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool, batch: usize, shared_b: bool, m: usize, k: usize, n: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    MaxPoolSame { x: Var, argmax: Vec<u32> },
    Upsample2x(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Permute { x: Var, axes: Vec<usize> },
    Pad { x: Var, before: Vec<usize> },
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    GatherRows { table: Var, idx: Vec<usize> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode autodiff tape.
///
/// Every op evaluates eagerly and records how to push gradients back to its
/// inputs. A graph lives for one forward/backward pass.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, cols: &mut [T]) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let plane = ho * wo;
    for ci in 0..c {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        drow.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &xc[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, dx: &mut [T]) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let plane = ho * wo;
    for ci in 0..c {
        let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dxc[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

fn add_into<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), g.shape());
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Reduce a gradient of broadcast shape `out_shape` back onto `shape`.
fn reduce_to<T: Scalar>(grad: &[T], out_shape: &[usize], shape: &[usize]) -> Tensor<T> {
    if out_shape == shape {
        return Tensor::from_vec(shape, grad.to_vec());
    }
    let mut dst = vec![T::zero(); numel(shape)];
    if is_tiling(shape, out_shape) {
        let block = dst.len();
        for chunk in grad.chunks(block) {
            for (d, g) in dst.iter_mut().zip(chunk) {
                *d += *g;
            }
        }
    } else {
        let strides = broadcast_strides(shape, out_shape);
        scatter_add_strided(&mut dst, 0, &strides, out_shape, grad);
    }
    Tensor::from_vec(shape, dst)
}

fn expand<T: Scalar>(t: &Tensor<T>, out_shape: &[usize]) -> Vec<T> {
    if t.shape() == out_shape {
        return t.data().to_vec();
    }
    if is_tiling(t.shape(), out_shape) {
        let n = numel(out_shape);
        return t.data().iter().copied().cycle().take(n).collect();
    }
    gather_strided(t.data(), 0, &broadcast_strides(t.shape(), out_shape), out_shape)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that never receives gradients (inputs, targets, masks).
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape =
            broadcast_shape(&sa, &sb).unwrap_or_else(|| panic!("cannot broadcast {sa:?} with {sb:?} in {kind:?}"));
        let f = |x: T, y: T| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data: Vec<T> = if sa == sb {
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect()
        } else if sa == out_shape && is_tiling(&sb, &out_shape) {
            let bd = bv.data();
            let bn = bd.len();
            av.data().chunks(bn).flat_map(|c| c.iter().zip(bd).map(|(&x, &y)| f(x, y))).collect()
        } else {
            let ea = expand(av, &out_shape);
            let eb = expand(bv, &out_shape);
            ea.iter().zip(&eb).map(|(&x, &y)| f(x, y)).collect()
        };
        let needs = self.ng(a) || self.ng(b);
        self.push(Tensor::from_vec(&out_shape, data), Op::Binary(kind, a, b), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let data: Vec<T> = x
            .data()
            .iter()
            .map(|&v| match kind {
                Unary::Square => v * v,
                Unary::Sqrt => v.sqrt(),
                Unary::Exp => v.exp(),
                Unary::Sigmoid => sigmoid(v),
                Unary::Silu => v * sigmoid(v),
                Unary::Gelu => gelu(v),
            })
            .collect();
        let t = Tensor::from_vec(x.shape(), data);
        let needs = self.ng(a);
        self.push(t, Op::Unary(kind, a), needs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(Unary::Silu, a)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(Unary::Gelu, a)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::of(s);
        let x = &self.nodes[a.0].value;
        let t = Tensor::from_vec(x.shape(), x.data().iter().map(|&v| v * s).collect());
        let needs = self.ng(a);
        self.push(t, Op::Scale(a, s), needs)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = T::of(s);
        let x = &self.nodes[a.0].value;
        let t = Tensor::from_vec(x.shape(), x.data().iter().map(|&v| v + s).collect());
        let needs = self.ng(a);
        self.push(t, Op::AddScalar(a), needs)
    }

    /// Elementwise clamp; gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::of(lo), T::of(hi));
        let x = &self.nodes[a.0].value;
        let t = Tensor::from_vec(x.shape(), x.data().iter().map(|&v| v.max(lo).min(hi)).collect());
        let needs = self.ng(a);
        self.push(t, Op::Clamp(a, lo, hi), needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.nodes[a.0].value.data().iter().copied().sum();
        let needs = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.numel().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Batched matrix product over the last two axes.
    ///
    /// `a` is `[.., m, k]` (or `[.., k, m]` with `ta`), `b` is `[.., k, n]` (or `[.., n, k]`
    /// with `tb`). A rank-2 `b` is shared across all batch entries of `a`.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert!(sa.len() >= 2 && sb.len() >= 2, "matmul needs rank >= 2, got {sa:?} {sb:?}");
        let (ar, ac) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (br, bc) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dims {sa:?} x {sb:?} (ta={ta}, tb={tb})");
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let shared_b = sb.len() == 2;
        if !shared_b {
            assert_eq!(sa[..sa.len() - 2], sb[..sb.len() - 2], "matmul batch dims differ");
        }
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![T::zero(); batch * m * n];
        let ad = self.nodes[a.0].value.data();
        let bd = self.nodes[b.0].value.data();
        if shared_b && !ta {
            // one gemm over the flattened batch
            let am = MatRef::new(ad, batch * m, k);
            let bm = MatRef::new(bd, br, bc);
            gemm(am, if tb { bm.t() } else { bm }, T::zero(), &mut out);
        } else {
            for i in 0..batch {
                let am = MatRef::new(&ad[i * m * k..(i + 1) * m * k], ar, ac);
                let boff = if shared_b { 0 } else { i * k * n };
                let bm = MatRef::new(&bd[boff..boff + k * n], br, bc);
                gemm(
                    if ta { am.t() } else { am },
                    if tb { bm.t() } else { bm },
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let needs = self.ng(a) || self.ng(b);
        self.push(Tensor::from_vec(&out_shape, out), Op::MatMul { a, b, ta, tb, batch, shared_b, m, k, n }, needs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// 2-D convolution, NCHW input and `[cout, cin, k, k]` weights.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be NCHW, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be [cout, cin, k, k], got {ws:?}");
        let (nb, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, wcin, k, k2) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        assert_eq!(k, k2, "conv2d expects square kernels");
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d kernel larger than padded input");
        let ho = conv_out(h, k, stride, pad);
        let wo = conv_out(wd, k, stride, pad);
        let plane = ho * wo;
        let ckk = cin * k * k;
        let direct = k == 1 && stride == 1 && pad == 0;
        let mut out = vec![T::zero(); nb * cout * plane];
        let xd = self.nodes[x.0].value.data();
        let wm = MatRef::new(self.nodes[w.0].value.data(), cout, ckk);
        let mut cols = if direct { Vec::new() } else { vec![T::zero(); ckk * plane] };
        for i in 0..nb {
            let xi = &xd[i * cin * h * wd..(i + 1) * cin * h * wd];
            let oi = &mut out[i * cout * plane..(i + 1) * cout * plane];
            if direct {
                gemm(wm, MatRef::new(xi, cin, plane), T::zero(), oi);
            } else {
                im2col(xi, cin, h, wd, k, stride, pad, &mut cols);
                gemm(wm, MatRef::new(&cols, ckk, plane), T::zero(), oi);
            }
        }
        if let Some(b) = b {
            let bd = self.nodes[b.0].value.data();
            assert_eq!(bd.len(), cout, "conv2d bias length");
            for (o, chunk) in out.chunks_mut(plane).enumerate() {
                let bias = bd[o % cout];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        let needs = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(Tensor::from_vec(&[nb, cout, ho, wo], out), Op::Conv2d { x, w, b, stride, pad }, needs)
    }

    /// Stride-1 max pooling with `k / 2` padding on each side (padding never wins).
    pub fn max_pool_same(&mut self, x: Var, k: usize) -> Var {
        assert!(k % 2 == 1, "max_pool_same needs an odd kernel, got {k}");
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4);
        let (h, w) = (xs[2], xs[3]);
        let r = k / 2;
        let xd = self.nodes[x.0].value.data();
        let planes = xs[0] * xs[1];
        let mut out = vec![T::zero(); xd.len()];
        let mut argmax = vec![0u32; xd.len()];
        // separable: horizontal pass then vertical pass, tracking the source index
        let mut hval = vec![T::zero(); h * w];
        let mut hidx = vec![0u32; h * w];
        for p in 0..planes {
            let src = &xd[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for xx in 0..w {
                    let lo = xx.saturating_sub(r);
                    let hi = (xx + r).min(w - 1);
                    let mut best = lo;
                    for c in lo + 1..=hi {
                        if src[y * w + c] > src[y * w + best] {
                            best = c;
                        }
                    }
                    hval[y * w + xx] = src[y * w + best];
                    hidx[y * w + xx] = (y * w + best) as u32;
                }
            }
            let dst = &mut out[p * h * w..(p + 1) * h * w];
            let arg = &mut argmax[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                let lo = y.saturating_sub(r);
                let hi = (y + r).min(h - 1);
                for xx in 0..w {
                    let mut best = lo;
                    for rr in lo + 1..=hi {
                        if hval[rr * w + xx] > hval[best * w + xx] {
                            best = rr;
                        }
                    }
                    dst[y * w + xx] = hval[best * w + xx];
                    arg[y * w + xx] = hidx[best * w + xx];
                }
            }
        }
        let needs = self.ng(x);
        self.push(Tensor::from_vec(&xs, out), Op::MaxPoolSame { x, argmax }, needs)
    }

    /// Nearest-neighbour 2x upsampling of an NCHW tensor.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4);
        let (h, w) = (xs[2], xs[3]);
        let xd = self.nodes[x.0].value.data();
        let planes = xs[0] * xs[1];
        let mut out = Vec::with_capacity(planes * 4 * h * w);
        for p in 0..planes {
            let src = &xd[p * h * w..(p + 1) * h * w];
            for y in 0..2 * h {
                let row = &src[(y / 2) * w..(y / 2 + 1) * w];
                for &v in row {
                    out.push(v);
                    out.push(v);
                }
            }
        }
        let needs = self.ng(x);
        self.push(Tensor::from_vec(&[xs[0], xs[1], 2 * h, 2 * w], out), Op::Upsample2x(x), needs)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let first = self.shape(parts[0]).to_vec();
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut total_axis = 0;
        for &p in parts {
            let s = self.shape(p);
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for (i, (&d, &f)) in s.iter().zip(&first).enumerate() {
                assert!(i == axis || d == f, "concat shape mismatch {s:?} vs {first:?}");
            }
            total_axis += s[axis];
        }
        let mut out = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.nodes[p.0].value.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total_axis;
        let needs = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::from_vec(&shape, out), Op::Concat { parts: parts.to_vec(), axis }, needs)
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(start + len <= xs[axis], "narrow {start}+{len} out of range for {xs:?} axis {axis}");
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis + 1..].iter().product();
        let xd = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * xs[axis] + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        let mut shape = xs;
        shape[axis] = len;
        let needs = self.ng(x);
        self.push(Tensor::from_vec(&shape, out), Op::Narrow { x, axis, start }, needs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.nodes[x.0].value.clone().reshape(shape);
        let needs = self.ng(x);
        self.push(t, Op::Reshape(x), needs)
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(axes.len(), xs.len(), "permute axes {axes:?} for shape {xs:?}");
        let strides = contiguous_strides(&xs);
        let out_shape: Vec<usize> = axes.iter().map(|&a| xs[a]).collect();
        let pstrides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
        let data = gather_strided(self.nodes[x.0].value.data(), 0, &pstrides, &out_shape);
        let needs = self.ng(x);
        self.push(Tensor::from_vec(&out_shape, data), Op::Permute { x, axes: axes.to_vec() }, needs)
    }

    /// Cyclic roll: element at index `i` along `axis` moves to `(i + shift) mod n`.
    pub fn roll(&mut self, x: Var, axis: usize, shift: isize) -> Var {
        let n = self.shape(x)[axis] as isize;
        let s = shift.rem_euclid(n.max(1)) as usize;
        if s == 0 {
            return x;
        }
        let n = n as usize;
        let tail = self.narrow(x, axis, n - s, s);
        let head = self.narrow(x, axis, 0, n - s);
        self.concat(&[tail, head], axis)
    }

    /// Zero padding with `(before, after)` per axis.
    pub fn pad(&mut self, x: Var, pads: &[(usize, usize)]) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(pads.len(), xs.len());
        if pads.iter().all(|&(a, b)| a == 0 && b == 0) {
            return x;
        }
        let out_shape: Vec<usize> = xs.iter().zip(pads).map(|(&d, &(a, b))| d + a + b).collect();
        let ostrides = contiguous_strides(&out_shape);
        let offset: usize = pads.iter().zip(&ostrides).map(|(&(a, _), &s)| a * s).sum();
        let mut out = vec![T::zero(); numel(&out_shape)];
        // copy via scatter-add into zeros
        scatter_add_strided(&mut out, offset, &ostrides, &xs, self.nodes[x.0].value.data());
        let before = pads.iter().map(|&(a, _)| a).collect();
        let needs = self.ng(x);
        self.push(Tensor::from_vec(&out_shape, out), Op::Pad { x, before }, needs)
    }

    pub fn softmax_last(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().expect("softmax on scalar");
        let mut out = self.nodes[x.0].value.data().to_vec();
        for row in out.chunks_mut(d) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let needs = self.ng(x);
        self.push(Tensor::from_vec(&xs, out), Op::Softmax(x), needs)
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().expect("layer_norm on scalar");
        assert_eq!(self.shape(gamma), [d]);
        assert_eq!(self.shape(beta), [d]);
        let eps = T::of(eps);
        let xd = self.nodes[x.0].value.data();
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let rows = xd.len() / d.max(1);
        let mut xhat = vec![T::zero(); xd.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xd.len()];
        let inv_d = T::one() / T::of(d as f64);
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mean) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * g[j] + bt[j];
            }
        }
        let needs = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(Tensor::from_vec(&xs, out), Op::LayerNorm { x, gamma, beta, xhat, rstd }, needs)
    }

    /// Rows of a `[r, d]` table selected by `idx`, giving `[idx.len(), d]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let ts = self.shape(table).to_vec();
        assert_eq!(ts.len(), 2);
        let d = ts[1];
        let td = self.nodes[table.0].value.data();
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            assert!(i < ts[0], "gather index {i} out of range {}", ts[0]);
            out.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        let needs = self.ng(table);
        self.push(Tensor::from_vec(&[idx.len(), d], out), Op::GatherRows { table, idx: idx.to_vec() }, needs)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar loss");
        self.backward_with(loss, Tensor::full(self.shape(loss), T::one()))
    }

    /// Reverse pass seeded with an explicit output gradient.
    pub fn backward_with(&self, out: Var, seed: Tensor<T>) -> Grads<T> {
        assert_eq!(seed.shape(), self.shape(out));
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.push_back(i, g, &mut grads);
        }
        Grads { grads }
    }

    fn push_back(&self, i: usize, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                let av = self.value(a);
                let bv = self.value(b);
                let out_shape = y.shape();
                if self.ng(a) {
                    let ga: Vec<T> = match kind {
                        Binary::Add | Binary::Sub => gd.to_vec(),
                        Binary::Mul => {
                            let eb = expand(bv, out_shape);
                            gd.iter().zip(&eb).map(|(&g, &b)| g * b).collect()
                        }
                    };
                    add_into(&mut grads[a.0], reduce_to(&ga, out_shape, av.shape()));
                }
                if self.ng(b) {
                    let gb: Vec<T> = match kind {
                        Binary::Add => gd.to_vec(),
                        Binary::Sub => gd.iter().map(|&g| -g).collect(),
                        Binary::Mul => {
                            let ea = expand(av, out_shape);
                            gd.iter().zip(&ea).map(|(&g, &a)| g * a).collect()
                        }
                    };
                    add_into(&mut grads[b.0], reduce_to(&gb, out_shape, bv.shape()));
                }
            }
            Op::Unary(kind, a) => {
                let xv = self.value(*a).data();
                let yd = y.data();
                let two = T::of(2.0);
                let half = T::of(0.5);
                let out: Vec<T> = (0..gd.len())
                    .map(|j| {
                        let d = match kind {
                            Unary::Square => two * xv[j],
                            Unary::Sqrt => half / yd[j],
                            Unary::Exp => yd[j],
                            Unary::Sigmoid => yd[j] * (T::one() - yd[j]),
                            Unary::Silu => {
                                let s = sigmoid(xv[j]);
                                s * (T::one() + xv[j] * (T::one() - s))
                            }
                            Unary::Gelu => gelu_grad(xv[j]),
                        };
                        gd[j] * d
                    })
                    .collect();
                add_into(&mut grads[a.0], Tensor::from_vec(y.shape(), out));
            }
            Op::Scale(a, s) => {
                let out = gd.iter().map(|&v| v * *s).collect();
                add_into(&mut grads[a.0], Tensor::from_vec(y.shape(), out));
            }
            Op::AddScalar(a) => add_into(&mut grads[a.0], g),
            Op::Clamp(a, lo, hi) => {
                let xv = self.value(*a).data();
                let out = gd.iter().zip(xv).map(|(&g, &x)| if x < *lo || x > *hi { T::zero() } else { g }).collect();
                add_into(&mut grads[a.0], Tensor::from_vec(y.shape(), out));
            }
            Op::Sum(a) => {
                let s = g.item();
                add_into(&mut grads[a.0], Tensor::full(self.shape(*a), s));
            }
            Op::MatMul { a, b, ta, tb, batch, shared_b, m, k, n } => {
                let (a, b) = (*a, *b);
                let (m, k, n, batch) = (*m, *k, *n, *batch);
                let ad = self.value(a).data();
                let bd = self.value(b).data();
                let sa = self.shape(a);
                let sb = self.shape(b);
                let (ar, ac) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let (br, bc) = (sb[sb.len() - 2], sb[sb.len() - 1]);
                if self.ng(a) {
                    let mut da = vec![T::zero(); ad.len()];
                    for bi in 0..batch {
                        let gm = MatRef::new(&gd[bi * m * n..(bi + 1) * m * n], m, n);
                        let boff = if *shared_b { 0 } else { bi * k * n };
                        let bm = MatRef::new(&bd[boff..boff + k * n], br, bc);
                        let opb = if *tb { bm.t() } else { bm };
                        let dst = &mut da[bi * m * k..(bi + 1) * m * k];
                        if *ta {
                            // A stored [k, m]: dA = op(B) * dC^T
                            gemm(opb, gm.t(), T::zero(), dst);
                        } else {
                            gemm(gm, opb.t(), T::zero(), dst);
                        }
                    }
                    add_into(&mut grads[a.0], Tensor::from_vec(sa, da));
                }
                if self.ng(b) {
                    let mut db = vec![T::zero(); bd.len()];
                    if *shared_b && !*ta {
                        let gm = MatRef::new(gd, batch * m, n);
                        let am = MatRef::new(ad, batch * m, k);
                        if *tb {
                            gemm(gm.t(), am, T::zero(), &mut db);
                        } else {
                            gemm(am.t(), gm, T::zero(), &mut db);
                        }
                    } else {
                        for bi in 0..batch {
                            let gm = MatRef::new(&gd[bi * m * n..(bi + 1) * m * n], m, n);
                            let am = MatRef::new(&ad[bi * m * k..(bi + 1) * m * k], ar, ac);
                            let opa = if *ta { am.t() } else { am };
                            let (off, beta) = if *shared_b { (0, T::one()) } else { (bi * k * n, T::zero()) };
                            let dst = &mut db[off..off + k * n];
                            if *tb {
                                gemm(gm.t(), opa, beta, dst);
                            } else {
                                gemm(opa.t(), gm, beta, dst);
                            }
                        }
                    }
                    add_into(&mut grads[b.0], Tensor::from_vec(sb, db));
                }
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (stride, pad) = (*stride, *pad);
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (nb, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (cout, k) = (ws[0], ws[2]);
                let ys = y.shape();
                let plane = ys[2] * ys[3];
                let ckk = cin * k * k;
                let direct = k == 1 && stride == 1 && pad == 0;
                if let Some(b) = b {
                    if self.ng(*b) {
                        let mut db = vec![T::zero(); cout];
                        for (o, chunk) in gd.chunks(plane).enumerate() {
                            db[o % cout] += chunk.iter().copied().sum::<T>();
                        }
                        add_into(&mut grads[b.0], Tensor::from_vec(&[cout], db));
                    }
                }
                let need_w = self.ng(*w);
                let need_x = self.ng(*x);
                if !need_w && !need_x {
                    return;
                }
                let xd = self.value(*x).data();
                let wm = MatRef::new(self.value(*w).data(), cout, ckk);
                let mut dw = if need_w { vec![T::zero(); cout * ckk] } else { Vec::new() };
                let mut dx = if need_x { vec![T::zero(); xd.len()] } else { Vec::new() };
                let mut cols = vec![T::zero(); if direct { 0 } else { ckk * plane }];
                let mut dcols = vec![T::zero(); if need_x && !direct { ckk * plane } else { 0 }];
                for i in 0..nb {
                    let xi = &xd[i * cin * h * wd..(i + 1) * cin * h * wd];
                    let gi = MatRef::new(&gd[i * cout * plane..(i + 1) * cout * plane], cout, plane);
                    if need_w {
                        if direct {
                            gemm(gi, MatRef::new(xi, cin, plane).t(), T::one(), &mut dw);
                        } else {
                            im2col(xi, cin, h, wd, k, stride, pad, &mut cols);
                            gemm(gi, MatRef::new(&cols, ckk, plane).t(), T::one(), &mut dw);
                        }
                    }
                    if need_x {
                        let dxi = &mut dx[i * cin * h * wd..(i + 1) * cin * h * wd];
                        if direct {
                            gemm(wm.t(), gi, T::zero(), dxi);
                        } else {
                            gemm(wm.t(), gi, T::zero(), &mut dcols);
                            col2im(&dcols, cin, h, wd, k, stride, pad, dxi);
                        }
                    }
                }
                if need_w {
                    add_into(&mut grads[w.0], Tensor::from_vec(ws, dw));
                }
                if need_x {
                    add_into(&mut grads[x.0], Tensor::from_vec(xs, dx));
                }
            }
            Op::MaxPoolSame { x, argmax } => {
                let xs = self.shape(*x);
                let plane = xs[2] * xs[3];
                let mut dx = vec![T::zero(); gd.len()];
                for (j, (&gv, &src)) in gd.iter().zip(argmax).enumerate() {
                    let p = j / plane;
                    dx[p * plane + src as usize] += gv;
                }
                add_into(&mut grads[x.0], Tensor::from_vec(xs, dx));
            }
            Op::Upsample2x(x) => {
                let xs = self.shape(*x);
                let (h, w) = (xs[2], xs[3]);
                let planes = xs[0] * xs[1];
                let mut dx = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    let src = &gd[p * 4 * h * w..(p + 1) * 4 * h * w];
                    let dst = &mut dx[p * h * w..(p + 1) * h * w];
                    for yy in 0..2 * h {
                        for xx in 0..2 * w {
                            dst[(yy / 2) * w + xx / 2] += src[yy * 2 * w + xx];
                        }
                    }
                }
                add_into(&mut grads[x.0], Tensor::from_vec(xs, dx));
            }
            Op::Concat { parts, axis } => {
                let ys = y.shape();
                let outer: usize = ys[..*axis].iter().product();
                let inner: usize = ys[axis + 1..].iter().product();
                let total = ys[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let ps = self.shape(p);
                    let len = ps[*axis] * inner;
                    if self.ng(p) {
                        let mut dp = Vec::with_capacity(outer * len);
                        for o in 0..outer {
                            dp.extend_from_slice(&gd[o * total + offset..o * total + offset + len]);
                        }
                        add_into(&mut grads[p.0], Tensor::from_vec(ps, dp));
                    }
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.shape(*x);
                let outer: usize = xs[..*axis].iter().product();
                let inner: usize = xs[axis + 1..].iter().product();
                let len = y.shape()[*axis] * inner;
                let mut dx = vec![T::zero(); numel(xs)];
                for o in 0..outer {
                    let base = (o * xs[*axis] + start) * inner;
                    dx[base..base + len].copy_from_slice(&gd[o * len..(o + 1) * len]);
                }
                add_into(&mut grads[x.0], Tensor::from_vec(xs, dx));
            }
            Op::Reshape(x) => {
                add_into(&mut grads[x.0], g.reshape(self.shape(*x)));
            }
            Op::Permute { x, axes } => {
                let xs = self.shape(*x);
                let strides = contiguous_strides(xs);
                let pstrides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
                let mut dx = vec![T::zero(); numel(xs)];
                scatter_add_strided(&mut dx, 0, &pstrides, y.shape(), gd);
                add_into(&mut grads[x.0], Tensor::from_vec(xs, dx));
            }
            Op::Pad { x, before } => {
                let xs = self.shape(*x);
                let ostrides = contiguous_strides(y.shape());
                let offset: usize = before.iter().zip(&ostrides).map(|(&a, &s)| a * s).sum();
                let dx = gather_strided(gd, offset, &ostrides, xs);
                add_into(&mut grads[x.0], Tensor::from_vec(xs, dx));
            }
            Op::Softmax(x) => {
                let d = *y.shape().last().unwrap();
                let mut dx = vec![T::zero(); gd.len()];
                for ((dr, gr), yr) in dx.chunks_mut(d).zip(gd.chunks(d)).zip(y.data().chunks(d)) {
                    let dot: T = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum();
                    for j in 0..d {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                add_into(&mut grads[x.0], Tensor::from_vec(y.shape(), dx));
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = *y.shape().last().unwrap();
                let gam = self.value(*gamma).data();
                if self.ng(*gamma) || self.ng(*beta) {
                    let mut dg = vec![T::zero(); d];
                    let mut db = vec![T::zero(); d];
                    for (gr, xr) in gd.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg[j] += gr[j] * xr[j];
                            db[j] += gr[j];
                        }
                    }
                    if self.ng(*gamma) {
                        add_into(&mut grads[gamma.0], Tensor::from_vec(&[d], dg));
                    }
                    if self.ng(*beta) {
                        add_into(&mut grads[beta.0], Tensor::from_vec(&[d], db));
                    }
                }
                if self.ng(*x) {
                    let inv_d = T::one() / T::of(d as f64);
                    let mut dx = vec![T::zero(); gd.len()];
                    for (r, ((dr, gr), xr)) in dx.chunks_mut(d).zip(gd.chunks(d)).zip(xhat.chunks(d)).enumerate() {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            m1 += dxh;
                            m2 += dxh * xr[j];
                        }
                        m1 *= inv_d;
                        m2 *= inv_d;
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            dr[j] = rstd[r] * (dxh - m1 - xr[j] * m2);
                        }
                    }
                    add_into(&mut grads[x.0], Tensor::from_vec(y.shape(), dx));
                }
            }
            Op::GatherRows { table, idx } => {
                let ts = self.shape(*table);
                let d = ts[1];
                let mut dt = vec![T::zero(); numel(ts)];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..d {
                        dt[i * d + j] += gd[r * d + j];
                    }
                }
                add_into(&mut grads[table.0], Tensor::from_vec(ts, dt));
            }
        }
    }
}

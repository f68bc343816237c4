use super::Scalar;

/// Dense row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(numel(shape), data.len(), "shape {shape:?} does not match {} elements", data.len());
        Self { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); numel(shape)] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; numel(shape)] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![], data: vec![value] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Self {
        Self::from_vec(shape, data.iter().map(|&x| T::of(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(numel(shape), self.data.len(), "reshape {:?} -> {shape:?}", self.shape);
        self.shape = shape.to_vec();
        self
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|x| U::of(x.as_f64())).collect() }
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).fold(0.0, f64::max)
    }
}

/// Copy `src` viewed through `strides` (one per output axis, possibly 0) starting at
/// `offset` into a new contiguous buffer of shape `shape`.
pub(crate) fn gather_strided<T: Copy>(src: &[T], offset: usize, strides: &[usize], shape: &[usize]) -> Vec<T> {
    let total = numel(shape);
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    if shape.is_empty() {
        out.push(src[offset]);
        return out;
    }
    let rank = shape.len();
    let inner = shape[rank - 1];
    let inner_stride = strides[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut base = offset;
    loop {
        if inner_stride == 1 {
            out.extend_from_slice(&src[base..base + inner]);
        } else {
            let mut p = base;
            for _ in 0..inner {
                out.push(src[p]);
                p += inner_stride;
            }
        }
        // advance the outer odometer
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            idx[axis] += 1;
            base += strides[axis];
            if idx[axis] < shape[axis] {
                break;
            }
            base -= strides[axis] * shape[axis];
            idx[axis] = 0;
        }
    }
}

/// Add a contiguous buffer of shape `shape` into `dst` viewed through `strides`.
/// Zero strides accumulate (reduce) over that axis.
pub(crate) fn scatter_add_strided<T: Scalar>(
    dst: &mut [T],
    offset: usize,
    strides: &[usize],
    shape: &[usize],
    src: &[T],
) {
    let total = numel(shape);
    debug_assert_eq!(total, src.len());
    if total == 0 {
        return;
    }
    if shape.is_empty() {
        dst[offset] += src[0];
        return;
    }
    let rank = shape.len();
    let inner = shape[rank - 1];
    let inner_stride = strides[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut base = offset;
    let mut s = 0;
    loop {
        if inner_stride == 1 {
            for (d, v) in dst[base..base + inner].iter_mut().zip(&src[s..s + inner]) {
                *d += *v;
            }
        } else if inner_stride == 0 {
            let mut acc = T::zero();
            for v in &src[s..s + inner] {
                acc += *v;
            }
            dst[base] += acc;
        } else {
            let mut p = base;
            for v in &src[s..s + inner] {
                dst[p] += *v;
                p += inner_stride;
            }
        }
        s += inner;
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            base += strides[axis];
            if idx[axis] < shape[axis] {
                break;
            }
            base -= strides[axis] * shape[axis];
            idx[axis] = 0;
        }
    }
}

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides that read `shape` as if expanded to `target` (0 on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(shape);
    let pad = target.len() - shape.len();
    (0..target.len()).map(|i| if i < pad || shape[i - pad] == 1 && target[i] != 1 { 0 } else { own[i - pad] }).collect()
}

/// True when `shape` broadcast to `target` is a plain repetition of a contiguous block,
/// i.e. `shape` (without leading ones) equals the trailing axes of `target`.
pub(crate) fn is_tiling(shape: &[usize], target: &[usize]) -> bool {
    let trimmed: &[usize] = {
        let lead = shape.iter().take_while(|&&d| d == 1).count();
        &shape[lead..]
    };
    trimmed.len() <= target.len() && target[target.len() - trimmed.len()..] == *trimmed
}

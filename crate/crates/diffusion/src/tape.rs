//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Feature maps are `[B, C, H, W]`, vectors are `[B, F]`. Convolutions are
//! 3x3 with padding 1 and stride 1 or 2, lowered to matrix products through
//! an im2col buffer.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    Conv { x: Var, w: Var, b: Var, stride: usize },
    Linear { x: Var, w: Var, b: Var },
    Silu(Var),
    AddChannel { x: Var, bias: Var },
    Concat(Var, Var),
    Upsample(Var),
    Mse { x: Var, target: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    differentiable: bool,
}

fn conv_out_size(n: usize, stride: usize) -> usize {
    (n + 2 - 3) / stride + 1
}

/// Output columns `ox` whose input column `ox * stride + kx - 1` is inside
/// `0..w`, as a half-open range.
fn valid_cols(w: usize, wo: usize, stride: usize, kx: usize) -> (usize, usize) {
    let lo = if kx == 0 { 1usize.div_ceil(stride).min(wo) } else { 0 };
    // largest ox with ox * stride + kx - 1 <= w - 1
    let hi = ((w + 1 - kx - 1) / stride + 1).min(wo);
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, stride: usize, cols: &mut [T]) {
    let (ho, wo) = (conv_out_size(h, stride), conv_out_size(w, stride));
    let n = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * n..(ci * 9 + ky * 3 + kx + 1) * n];
                let (lo, hi) = valid_cols(w, wo, stride, kx);
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    dst[..lo].fill(T::ZERO);
                    dst[hi..].fill(T::ZERO);
                    if stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[lo + kx - 1..hi + kx - 1]);
                    } else {
                        for (ox, d) in (lo..hi).zip(&mut dst[lo..hi]) {
                            *d = src[ox * stride + kx - 1];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, stride: usize, dx: &mut [T]) {
    let (ho, wo) = (conv_out_size(h, stride), conv_out_size(w, stride));
    let n = ho * wo;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * n..(ci * 9 + ky * 3 + kx + 1) * n];
                let (lo, hi) = valid_cols(w, wo, stride, kx);
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        for (d, &v) in dst[lo + kx - 1..hi + kx - 1].iter_mut().zip(&src[lo..hi]) {
                            *d += v;
                        }
                    } else {
                        for ox in lo..hi {
                            dst[ox * stride + kx - 1] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `C (m x n) = A (m x k) B (k x n) + beta C`, with either operand
/// optionally read transposed from its stored row-major layout.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds checked above; the three slices are distinct borrows.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

impl<T: Scalar> Tape<T> {
    /// A tape that keeps what the backward pass needs.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), differentiable: true }
    }

    /// A forward-only tape; [`Tape::backward`] refuses it.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), differentiable: false }
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records parameter number `index`; its gradient is reported under the
    /// same index by [`Tape::backward`].
    pub fn param(&mut self, index: usize, value: Tensor<T>) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Var {
        let (bn, ci, h, wd) = self.value(x).dims4();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws[1..], [ci, 3, 3], "conv weight {ws:?} does not fit {ci} input channels");
        let co = ws[0];
        let (ho, wo) = (conv_out_size(h, stride), conv_out_size(wd, stride));
        let (k, n) = (ci * 9, ho * wo);
        let mut out = Tensor::zeros(&[bn, co, ho, wo]);
        let mut cols = vec![T::ZERO; k * n];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(b).data();
            let od = out.data_mut();
            for item in 0..bn {
                im2col(&xv[item * ci * h * wd..(item + 1) * ci * h * wd], ci, h, wd, stride, &mut cols);
                let o = &mut od[item * co * n..(item + 1) * co * n];
                for (c, chunk) in o.chunks_mut(n).enumerate() {
                    chunk.fill(bv[c]);
                }
                matmul(co, k, n, wv, false, &cols, false, T::ONE, o);
            }
        }
        self.push(out, Op::Conv { x, w, b, stride })
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (bn, fin) = self.value(x).dims2();
        let (fout, wi) = self.value(w).dims2();
        assert_eq!(wi, fin, "linear weight expects {wi} inputs, got {fin}");
        let mut out = Tensor::zeros(&[bn, fout]);
        {
            let bv = self.value(b).data();
            let od = out.data_mut();
            for row in od.chunks_mut(fout) {
                row.copy_from_slice(bv);
            }
            matmul(bn, fin, fout, self.value(x).data(), false, self.value(w).data(), true, T::ONE, od);
        }
        self.push(out, Op::Linear { x, w, b })
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * sigmoid(v));
        self.push(out, Op::Silu(x))
    }

    /// Adds a per-item, per-channel bias `[B, C]` to a feature map.
    pub fn add_channel(&mut self, x: Var, bias: Var) -> Var {
        let (bn, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(bias).shape(), [bn, c]);
        let mut out = self.value(x).clone();
        let bv = self.value(bias).data();
        for (k, plane) in out.data_mut().chunks_mut(h * w).enumerate() {
            let add = bv[k];
            plane.iter_mut().for_each(|v| *v += add);
        }
        self.push(out, Op::AddChannel { x, bias })
    }

    /// Channel-wise concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (bn, ca, h, w) = self.value(a).dims4();
        let (bb, cb, hb, wb) = self.value(b).dims4();
        assert_eq!((bn, h, w), (bb, hb, wb), "concat of mismatched feature maps");
        let (sa, sb) = (ca * h * w, cb * h * w);
        let mut data = Vec::with_capacity(bn * (sa + sb));
        for item in 0..bn {
            data.extend_from_slice(&self.value(a).data()[item * sa..(item + 1) * sa]);
            data.extend_from_slice(&self.value(b).data()[item * sb..(item + 1) * sb]);
        }
        self.push(Tensor::from_vec(&[bn, ca + cb, h, w], data), Op::Concat(a, b))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample(&mut self, x: Var) -> Var {
        let (bn, c, h, w) = self.value(x).dims4();
        let mut out = Tensor::zeros(&[bn, c, 2 * h, 2 * w]);
        let xv = self.value(x).data();
        for (p, plane) in out.data_mut().chunks_mut(4 * h * w).enumerate() {
            let src = &xv[p * h * w..(p + 1) * h * w];
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    plane[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        self.push(out, Op::Upsample(x))
    }

    /// Mean squared error over every element; a one-element result.
    pub fn mse(&mut self, x: Var, target: Var) -> Var {
        let (a, b) = (self.value(x), self.value(target));
        assert_eq!(a.shape(), b.shape());
        let sum: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&p, &q)| {
                let d = (p - q).to_f64();
                d * d
            })
            .sum();
        let loss = T::from_f64(sum / a.len() as f64);
        self.push(Tensor::from_vec(&[1], vec![loss]), Op::Mse { x, target })
    }

    /// Back-propagates from the one-element `loss` and returns the gradient
    /// of each parameter index seen on the tape (`None` if unused).
    pub fn backward(&self, loss: Var, n_params: usize) -> Vec<Option<Tensor<T>>> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        assert!(self.differentiable, "an inference tape cannot be differentiated");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(&[1], vec![T::ONE]));
        let mut params: Vec<Option<Tensor<T>>> = (0..n_params).map(|_| None).collect();

        fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => match &mut params[*p] {
                    Some(existing) => existing.add_assign(&g),
                    slot => *slot = Some(g),
                },
                Op::Mse { x, target } => {
                    let scale = g.data()[0] * T::from_f64(2.0 / self.value(*x).len() as f64);
                    let a = self.value(*x).data();
                    let b = self.value(*target).data();
                    let dx: Vec<T> = a.iter().zip(b).map(|(&p, &q)| scale * (p - q)).collect();
                    let dt: Vec<T> = dx.iter().map(|&d| -d).collect();
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(&mut grads, *x, Tensor::from_vec(&shape, dx));
                    accumulate(&mut grads, *target, Tensor::from_vec(&shape, dt));
                }
                Op::Silu(x) => {
                    let xv = self.value(*x);
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        let s = sigmoid(v);
                        *d *= s * (T::ONE + v * (T::ONE - s));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::AddChannel { x, bias } => {
                    let (bn, c, h, w) = g.dims4();
                    let mut db = Tensor::zeros(&[bn, c]);
                    for (k, plane) in g.data().chunks(h * w).enumerate() {
                        db.data_mut()[k] = plane.iter().copied().sum();
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *x, g);
                }
                Op::Concat(a, b) => {
                    let (bn, ca, h, w) = self.value(*a).dims4();
                    let cb = self.value(*b).dims4().1;
                    let (sa, sb) = (ca * h * w, cb * h * w);
                    let mut da = Vec::with_capacity(bn * sa);
                    let mut dbv = Vec::with_capacity(bn * sb);
                    for item in g.data().chunks(sa + sb) {
                        da.extend_from_slice(&item[..sa]);
                        dbv.extend_from_slice(&item[sa..]);
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(&[bn, ca, h, w], da));
                    accumulate(&mut grads, *b, Tensor::from_vec(&[bn, cb, h, w], dbv));
                }
                Op::Upsample(x) => {
                    let (bn, c, h, w) = self.value(*x).dims4();
                    let mut dx = Tensor::zeros(&[bn, c, h, w]);
                    for (p, plane) in g.data().chunks(4 * h * w).enumerate() {
                        let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
                        for y in 0..2 * h {
                            for xx in 0..2 * w {
                                dst[(y / 2) * w + xx / 2] += plane[y * 2 * w + xx];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Linear { x, w, b } => {
                    let (bn, fin) = self.value(*x).dims2();
                    let fout = self.value(*w).dims2().0;
                    let mut dw = Tensor::zeros(&[fout, fin]);
                    matmul(fout, bn, fin, g.data(), true, self.value(*x).data(), false, T::ZERO, dw.data_mut());
                    let mut dx = Tensor::zeros(&[bn, fin]);
                    matmul(bn, fout, fin, g.data(), false, self.value(*w).data(), false, T::ZERO, dx.data_mut());
                    let mut db = Tensor::zeros(&[fout]);
                    for row in g.data().chunks(fout) {
                        for (d, &v) in db.data_mut().iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Conv { x, w, b, stride } => {
                    let (bn, ci, h, wd) = self.value(*x).dims4();
                    let co = self.value(*w).shape()[0];
                    let (_, _, ho, wo) = g.dims4();
                    let (k, n) = (ci * 9, ho * wo);
                    let mut dw = Tensor::zeros(&[co, ci, 3, 3]);
                    let mut db = Tensor::zeros(&[co]);
                    let mut dx = Tensor::zeros(&[bn, ci, h, wd]);
                    let mut dcols = vec![T::ZERO; k * n];
                    let mut cols = vec![T::ZERO; k * n];
                    let wv = self.value(*w).data();
                    let xv = self.value(*x).data();
                    for item in 0..bn {
                        let go = &g.data()[item * co * n..(item + 1) * co * n];
                        im2col(&xv[item * ci * h * wd..(item + 1) * ci * h * wd], ci, h, wd, *stride, &mut cols);
                        matmul(co, n, k, go, false, &cols, true, T::ONE, dw.data_mut());
                        for (c, chunk) in go.chunks(n).enumerate() {
                            db.data_mut()[c] += chunk.iter().copied().sum::<T>();
                        }
                        matmul(k, co, n, wv, true, go, false, T::ZERO, &mut dcols);
                        let plane = &mut dx.data_mut()[item * ci * h * wd..(item + 1) * ci * h * wd];
                        col2im(&dcols, ci, h, wd, *stride, plane);
                    }
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, dx);
                }
            }
        }
        params
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

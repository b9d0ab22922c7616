//! Convolution, pooling and batch normalization over NCHW tensors.
//!
//! Convolution is lowered to im2col + GEMM. Its two backward maps are
//! themselves recorded operations, and the three form a closed family under
//! differentiation, which keeps the second-order path exact.

use std::sync::Arc;

use super::{record, Op, Result, Saved, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<ConvGeom> {
        if input.len() != 4 {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: input.to_vec(),
            });
        }
        if weight.len() != 4 {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: weight.to_vec(),
            });
        }
        if stride == 0 {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        let (o, i, kh, kw) = (weight[0], weight[1], weight[2], weight[3]);
        if c != i {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: weight.to_vec(),
            });
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!(
                    "kernel {kh}x{kw} larger than padded input {}x{}",
                    h + 2 * pad,
                    w + 2 * pad
                ),
            });
        }
        Ok(ConvGeom {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![self.n, self.c, self.h, self.w]
    }

    fn weight_shape(&self) -> Vec<usize> {
        vec![self.o, self.c, self.kh, self.kw]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.n, self.o, self.oh, self.ow]
    }

    /// Calls `f(col_row, position, input_offset)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for ch in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(
                                row,
                                oy * self.ow + ox,
                                (ch * self.h + iy as usize) * self.w + ix as usize,
                            );
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        cols.iter_mut().for_each(|v| *v = T::zero());
        let p = self.positions();
        self.for_each_tap(|row, pos, src| cols[row * p + pos] = image[src]);
    }

    fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let p = self.positions();
        self.for_each_tap(|row, pos, dst| image[dst] = image[dst] + cols[row * p + pos]);
    }
}

/// Forward convolution without bias.
fn conv_raw<T: Scalar>(x: &[T], w: &[T], g: &ConvGeom) -> Vec<T> {
    let (k, p) = (g.patch(), g.positions());
    let img = g.c * g.h * g.w;
    let mut out = vec![T::zero(); g.n * g.o * p];
    let mut cols = vec![T::zero(); k * p];
    for n in 0..g.n {
        g.im2col(&x[n * img..(n + 1) * img], &mut cols);
        T::gemm(
            g.o,
            k,
            p,
            T::one(),
            w,
            k as isize,
            1,
            &cols,
            p as isize,
            1,
            T::zero(),
            &mut out[n * g.o * p..(n + 1) * g.o * p],
            p as isize,
            1,
        );
    }
    out
}

/// Adjoint of the convolution with respect to its input.
fn conv_input_grad_raw<T: Scalar>(gy: &[T], w: &[T], g: &ConvGeom) -> Vec<T> {
    let (k, p) = (g.patch(), g.positions());
    let img = g.c * g.h * g.w;
    let mut out = vec![T::zero(); g.n * img];
    let mut cols = vec![T::zero(); k * p];
    for n in 0..g.n {
        T::gemm(
            k,
            g.o,
            p,
            T::one(),
            w,
            1,
            k as isize,
            &gy[n * g.o * p..(n + 1) * g.o * p],
            p as isize,
            1,
            T::zero(),
            &mut cols,
            p as isize,
            1,
        );
        g.col2im(&cols, &mut out[n * img..(n + 1) * img]);
    }
    out
}

/// Adjoint of the convolution with respect to its weight.
fn conv_weight_grad_raw<T: Scalar>(gy: &[T], x: &[T], g: &ConvGeom) -> Vec<T> {
    let (k, p) = (g.patch(), g.positions());
    let img = g.c * g.h * g.w;
    let mut out = vec![T::zero(); g.o * k];
    let mut cols = vec![T::zero(); k * p];
    for n in 0..g.n {
        g.im2col(&x[n * img..(n + 1) * img], &mut cols);
        T::gemm(
            g.o,
            p,
            k,
            T::one(),
            &gy[n * g.o * p..(n + 1) * g.o * p],
            p as isize,
            1,
            &cols,
            1,
            p as isize,
            T::one(),
            &mut out,
            k as isize,
            1,
        );
    }
    out
}

fn conv_nobias<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> Result<Tensor<T>> {
    let out = conv_raw(x.data(), w.data(), &geom);
    record(out, geom.output_shape(), &[x, w], || Op::Conv {
        x: Saved::of(x),
        w: Saved::of(w),
        geom,
    })
}

pub(crate) fn conv_input_grad<T: Scalar>(gy: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> Result<Tensor<T>> {
    let out = conv_input_grad_raw(gy.data(), w.data(), &geom);
    record(out, geom.input_shape(), &[gy, w], || Op::ConvInputGrad {
        g: Saved::of(gy),
        w: Saved::of(w),
        geom,
    })
}

pub(crate) fn conv_weight_grad<T: Scalar>(gy: &Tensor<T>, x: &Tensor<T>, geom: ConvGeom) -> Result<Tensor<T>> {
    let out = conv_weight_grad_raw(gy.data(), x.data(), &geom);
    record(out, geom.weight_shape(), &[gy, x], || Op::ConvWeightGrad {
        g: Saved::of(gy),
        x: Saved::of(x),
        geom,
    })
}

/// Forward convolution for use inside backward rules (geometry already known).
pub(crate) fn conv_apply<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> Result<Tensor<T>> {
    conv_nobias(x, w, geom)
}

/// 2-D cross-correlation of an NCHW input with an OIHW kernel.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let geom = ConvGeom::new(input.shape(), weight.shape(), stride, padding)?;
    let out = conv_nobias(input, weight, geom)?;
    match bias {
        None => Ok(out),
        Some(b) => {
            if b.shape() != [geom.o] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    lhs: vec![geom.o],
                    rhs: b.shape().to_vec(),
                });
            }
            out.add(&b.reshape(&[geom.o, 1, 1])?)
        }
    }
}

/// Window-wise maximum; the gradient flows to the first maximal element of
/// each window in row-major order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    pool(input, k, stride, false)
}

/// [`maxpool2d`] that keeps partial windows at the bottom/right border, so
/// every extent `h` maps to `ceil((h − k) / stride) + 1` (at least 1).
pub fn maxpool2d_ceil<T: Scalar>(input: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    pool(input, k, stride, true)
}

fn pool<T: Scalar>(input: &Tensor<T>, k: usize, stride: usize, ceil: bool) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(TensorError::Rank {
            op: "maxpool2d",
            expected: 4,
            shape: s.to_vec(),
        });
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let fits = if ceil { h > 0 && w > 0 } else { k <= h && k <= w };
    if k == 0 || stride == 0 || !fits {
        return Err(TensorError::Invalid {
            op: "maxpool2d",
            msg: format!("window {k} (stride {stride}) does not fit {h}x{w}"),
        });
    }
    let extent = |len: usize| {
        if !ceil {
            (len - k) / stride + 1
        } else if len <= k {
            1
        } else {
            (len - k).div_ceil(stride) + 1
        }
    };
    let (oh, ow) = (extent(h), extent(w));
    let data = input.data();
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let (y0, y1) = (oy * stride, (oy * stride + k).min(h));
            for ox in 0..ow {
                let (x0, x1) = (ox * stride, (ox * stride + k).min(w));
                let mut best = base + y0 * w + x0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let at = base + y * w + x;
                        if data[at] > data[best] {
                            best = at;
                        }
                    }
                }
                idx.push(best);
            }
        }
    }
    input.gather(Arc::new(idx), &[n, c, oh, ow])
}

/// Batch normalization from the statistics of the current batch only.
pub fn batchnorm2d<T: Scalar>(input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(TensorError::Rank {
            op: "batchnorm2d",
            expected: 4,
            shape: s.to_vec(),
        });
    }
    let c = s[1];
    let count = s[0] * s[2] * s[3];
    if count < 2 {
        return Err(TensorError::Invalid {
            op: "batchnorm2d",
            msg: format!("need at least 2 values per channel, got {count}"),
        });
    }
    if !(eps > T::zero()) {
        return Err(TensorError::Invalid {
            op: "batchnorm2d",
            msg: "eps must be positive".into(),
        });
    }
    for p in [gamma, beta] {
        if p.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm2d",
                lhs: vec![c],
                rhs: p.shape().to_vec(),
            });
        }
    }
    let stat = [1, c, 1, 1];
    let inv_count = T::one() / T::from_f64(count as f64);
    let mean = input.sum_to(&stat)?.scale(inv_count)?;
    let centered = input.sub(&mean)?;
    let var = centered.mul(&centered)?.sum_to(&stat)?.scale(inv_count)?;
    let inv_std = var.add_scalar(eps)?.powf(T::from_f64(-0.5))?;
    let scale = inv_std.mul(&gamma.reshape(&stat)?)?;
    centered.mul(&scale)?.add(&beta.reshape(&stat)?)
}

//! Dense forward kernels and their hand-written backward passes.
//!
//! No autodiff graph anywhere in the crate: each composite's backward is
//! assembled from these primitives and checked against 64-bit central finite
//! differences (see [`super::fd`]).

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

/// y = x W + b for x: [n, d_in], W: [d_in, d_out], b: [d_out].
pub fn linear<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, d_in, d_out) = linear_dims(x, w, b, "linear")?;
    let mut y = Tensor::zeros(vec![n, d_out]);
    {
        let xd = x.data();
        let wd = w.data();
        let yd = y.data_mut();
        for i in 0..n {
            let row = &mut yd[i * d_out..(i + 1) * d_out];
            row.copy_from_slice(&b.data()[..d_out]);
            for d in 0..d_in {
                let xv = xd[i * d_in + d];
                let wrow = &wd[d * d_out..(d + 1) * d_out];
                for (o, &wv) in wrow.iter().enumerate() {
                    row[o] += xv * wv;
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of `linear` w.r.t. its inputs given the upstream gradient `dy`.
pub fn linear_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let d_out = *w.shape().last().unwrap_or(&0);
    let b = Tensor::zeros(vec![d_out.max(1)]);
    let (n, d_in, d_out) = linear_dims(x, w, &b, "linear_backward")?;
    dy.check_shape(&[n, d_out], "linear_backward dy")?;

    let mut dx = Tensor::zeros(vec![n, d_in]);
    let mut dw = Tensor::zeros(vec![d_in, d_out]);
    let mut db = Tensor::zeros(vec![d_out]);
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    {
        let dxd = dx.data_mut();
        for i in 0..n {
            let dyrow = &dyd[i * d_out..(i + 1) * d_out];
            for d in 0..d_in {
                let wrow = &wd[d * d_out..(d + 1) * d_out];
                let mut acc = S::zero();
                for (o, &wv) in wrow.iter().enumerate() {
                    acc += dyrow[o] * wv;
                }
                dxd[i * d_in + d] = acc;
            }
        }
    }
    {
        let dwd = dw.data_mut();
        let dbd = db.data_mut();
        for i in 0..n {
            let dyrow = &dyd[i * d_out..(i + 1) * d_out];
            for d in 0..d_in {
                let xv = xd[i * d_in + d];
                let drow = &mut dwd[d * d_out..(d + 1) * d_out];
                for (o, &g) in dyrow.iter().enumerate() {
                    drow[o] += xv * g;
                }
            }
            for (o, &g) in dyrow.iter().enumerate() {
                dbd[o] += g;
            }
        }
    }
    Ok((dx, dw, db))
}

fn linear_dims<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    ctx: &'static str,
) -> Result<(usize, usize, usize)> {
    let (xs, ws, bs) = (x.shape(), w.shape(), b.shape());
    if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
        return Err(Error::ShapeMismatch {
            ctx,
            expected: vec![xs.first().copied().unwrap_or(0), ws[0], ws[1]],
            got: xs.to_vec(),
        });
    }
    Ok((xs[0], xs[1], ws[1]))
}

/// 3x3 convolution with zero padding 1 and stride 1 or 2.
///
/// x: [c_in, H, W], k: [c_out, c_in, 3, 3], b: [c_out];
/// output [c_out, ceil(H/stride), ceil(W/stride)].
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
) -> Result<Tensor<S>> {
    let (c_in, h, w, c_out, oh, ow) = conv_dims(x, k, b, stride, "conv2d")?;
    let mut y = Tensor::zeros(vec![c_out, oh, ow]);
    let xd = x.data();
    let kd = k.data();
    let bd = b.data();
    let yd = y.data_mut();
    for co in 0..c_out {
        let kbase = co * c_in * 9;
        for oy in 0..oh {
            let iy0 = (oy * stride) as isize - 1;
            for ox in 0..ow {
                let ix0 = (ox * stride) as isize - 1;
                let mut acc = bd[co];
                for ci in 0..c_in {
                    let kc = &kd[kbase + ci * 9..kbase + ci * 9 + 9];
                    let xplane = &xd[ci * h * w..(ci + 1) * h * w];
                    for ky in 0..3usize {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = &xplane[iy as usize * w..(iy as usize + 1) * w];
                        for kx in 0..3usize {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += kc[ky * 3 + kx] * xrow[ix as usize];
                        }
                    }
                }
                yd[co * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    Ok(y)
}

/// Gradients of `conv2d` given upstream `dy` of shape [c_out, H', W'].
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    stride: usize,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let c_out = k.shape()[0];
    let b = Tensor::zeros(vec![c_out]);
    let (c_in, h, w, c_out, oh, ow) = conv_dims(x, k, &b, stride, "conv2d_backward")?;
    dy.check_shape(&[c_out, oh, ow], "conv2d_backward dy")?;

    let mut dx = Tensor::zeros(vec![c_in, h, w]);
    let mut dk = Tensor::zeros(vec![c_out, c_in, 3, 3]);
    let mut db = Tensor::zeros(vec![c_out]);
    let xd = x.data();
    let kd = k.data();
    let dyd = dy.data();
    let dxd = dx.data_mut();
    let dkd = dk.data_mut();
    let dbd = db.data_mut();
    for co in 0..c_out {
        let kbase = co * c_in * 9;
        for oy in 0..oh {
            let iy0 = (oy * stride) as isize - 1;
            for ox in 0..ow {
                let g = dyd[co * oh * ow + oy * ow + ox];
                let ix0 = (ox * stride) as isize - 1;
                dbd[co] += g;
                for ci in 0..c_in {
                    for ky in 0..3usize {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = ci * h * w + iy as usize * w + ix as usize;
                            let kidx = kbase + ci * 9 + ky * 3 + kx;
                            dkd[kidx] += g * xd[xi];
                            dxd[xi] += g * kd[kidx];
                        }
                    }
                }
            }
        }
    }
    Ok((dx, dk, db))
}

fn conv_dims<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
    ctx: &'static str,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (xs, ks, bs) = (x.shape(), k.shape(), b.shape());
    let ok = xs.len() == 3
        && ks.len() == 4
        && bs.len() == 1
        && ks[1] == xs[0]
        && ks[2] == 3
        && ks[3] == 3
        && bs[0] == ks[0]
        && (stride == 1 || stride == 2)
        && xs[1] >= 3
        && xs[2] >= 3;
    if !ok {
        return Err(Error::ShapeMismatch {
            ctx,
            expected: vec![ks[1], 3, 3],
            got: xs.to_vec(),
        });
    }
    let oh = xs[1].div_ceil(stride);
    let ow = xs[2].div_ceil(stride);
    Ok((xs[0], xs[1], xs[2], ks[0], oh, ow))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn activate<S: Scalar>(kind: Activation, x: &Tensor<S>) -> Tensor<S> {
    match kind {
        Activation::Relu => x.map(|v| if v > S::zero() { v } else { S::zero() }),
        Activation::Sigmoid => x.map(sigmoid_scalar),
    }
}

/// Gradient w.r.t. the activation input; `x` is the same input passed forward.
pub fn activate_backward<S: Scalar>(kind: Activation, x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    debug_assert!(x.same_shape(dy));
    match kind {
        Activation::Relu => {
            let mut dx = dy.clone();
            for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                if xv <= S::zero() {
                    *d = S::zero();
                }
            }
            dx
        }
        Activation::Sigmoid => {
            let mut dx = dy.clone();
            for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                let s = sigmoid_scalar(xv);
                *d = *d * s * (S::one() - s);
            }
            dx
        }
    }
}

#[inline]
pub fn sigmoid_scalar<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

/// In-place relu backward given the pre-activation values.
pub fn relu_backward_inplace<S: Scalar>(pre: &Tensor<S>, grad: &mut Tensor<S>) {
    debug_assert!(pre.same_shape(grad));
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= S::zero() {
            *g = S::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;

    fn randt(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.normal())
    }

    // Independent oracle: naive triple-loop matmul.
    fn naive_matmul(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (n, d_in, d_out) = (x.shape()[0], x.shape()[1], w.shape()[1]);
        let mut out = vec![0.0; n * d_out];
        for i in 0..n {
            for o in 0..d_out {
                let mut acc = b.data()[o];
                for d in 0..d_in {
                    acc += x.data()[i * d_in + d] * w.data()[d * d_out + o];
                }
                out[i * d_out + o] = acc;
            }
        }
        out
    }

    #[test]
    fn linear_identity_weights() {
        let x = Tensor::new(vec![1, 2], vec![1.0f32, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(vec![2]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_zero_input_passes_bias() {
        let x = Tensor::zeros(vec![1, 2]);
        let w = Tensor::new(vec![2, 2], vec![0.3f32, -0.7, 1.5, 0.2]).unwrap();
        let b = Tensor::new(vec![2], vec![3.0f32, -1.0]).unwrap();
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn linear_matches_naive_matmul() {
        let mut rng = Rng::from_seed(42);
        let x = randt(&[2, 3], &mut rng);
        let w = randt(&[3, 2], &mut rng);
        let b = randt(&[2], &mut rng);
        let y = linear(&x, &w, &b).unwrap();
        let expect = naive_matmul(&x, &w, &b);
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_shape_mismatch_errors() {
        let x = Tensor::<f32>::zeros(vec![1, 3]);
        let w = Tensor::<f32>::zeros(vec![2, 2]);
        let b = Tensor::<f32>::zeros(vec![2]);
        assert!(linear(&x, &w, &b).is_err());
    }

    // Independent oracle: direct sliding-window convolution.
    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Vec<f64> {
        let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let c_out = k.shape()[0];
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let mut out = vec![0.0; c_out * oh * ow];
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[co];
                    for ci in 0..c_in {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * stride + ky) as isize - 1;
                                let ix = (ox * stride + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += k.data()[((co * c_in + ci) * 3 + ky) * 3 + kx]
                                        * x.data()[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_zero_kernel_zero_output() {
        let x = Tensor::<f32>::filled(vec![1, 5, 5], 1.0);
        let k = Tensor::<f32>::zeros(vec![2, 1, 3, 3]);
        let b = Tensor::<f32>::zeros(vec![2]);
        let y = conv2d(&x, &k, &b, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let mut rng = Rng::from_seed(5);
        let x: Tensor<f64> = randt(&[1, 6, 6], &mut rng);
        let mut k = Tensor::<f64>::zeros(vec![1, 1, 3, 3]);
        k.data_mut()[4] = 1.0; // center tap
        let b = Tensor::zeros(vec![1]);
        let y = conv2d(&x, &k, &b, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_matches_naive_stride2() {
        let mut rng = Rng::from_seed(17);
        let x = randt(&[1, 5, 5], &mut rng);
        let k = randt(&[2, 1, 3, 3], &mut rng);
        let b = randt(&[2], &mut rng);
        let y = conv2d(&x, &k, &b, 2).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        let expect = naive_conv(&x, &k, &b, 2);
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_output_shape_contract() {
        let x = Tensor::<f32>::zeros(vec![1, 64, 64]);
        let k = Tensor::<f32>::zeros(vec![8, 1, 3, 3]);
        let b = Tensor::<f32>::zeros(vec![8]);
        assert_eq!(conv2d(&x, &k, &b, 2).unwrap().shape(), &[8, 32, 32]);
        assert_eq!(conv2d(&x, &k, &b, 1).unwrap().shape(), &[8, 64, 64]);
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let x = Tensor::new(vec![3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let y = activate(Activation::Relu, &x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let z = Tensor::new(vec![1], vec![0.0f32]).unwrap();
        let s = activate(Activation::Sigmoid, &z);
        assert_eq!(s.data(), &[0.5]);
    }

    #[test]
    fn sigmoid_gradient_at_zero_is_quarter() {
        let x = Tensor::new(vec![1], vec![0.0f64]).unwrap();
        let dy = Tensor::filled(vec![1], 1.0);
        let dx = activate_backward(Activation::Sigmoid, &x, &dy);
        assert!((dx.data()[0] - 0.25).abs() < 1e-12);
    }
}

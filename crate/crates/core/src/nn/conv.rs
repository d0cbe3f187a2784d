use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use rayon::prelude::*;

use super::{init::WeightInit, Layer, Param, Tensor};

fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    debug_assert!(
        (len + 2 * pad - k).is_multiple_of(stride),
        "conv geometry must divide exactly: len={len} k={k} s={stride} p={pad}"
    );
    (len + 2 * pad - k) / stride + 1
}

/// Unfolds `x` (C, H, W) into a `(C*k*k, out_h*out_w)` matrix.
fn im2col(x: ArrayView3<f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = conv_out_len(h, k, stride, pad);
    let ow = conv_out_len(w, k, stride, pad);
    let mut cols = Array2::<f64>::zeros((c * k * k, oh * ow));
    let xs = x.as_slice().expect("contiguous input");
    let out = cols.as_slice_mut().unwrap();
    for ci in 0..c {
        let xbase = ci * h * w;
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let rbase = row * oh * ow;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let ii = ii as usize;
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        out[rbase + oi * ow + oj] = xs[xbase + ii * w + jj as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds a `(C*k*k, oh*ow)` matrix back into (C, H, W),
/// accumulating overlaps.
fn col2im(
    cols: ArrayView2<f64>,
    shape: (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let (c, h, w) = shape;
    let oh = conv_out_len(h, k, stride, pad);
    let ow = conv_out_len(w, k, stride, pad);
    let mut x = Array3::<f64>::zeros(shape);
    let xs = x.as_slice_mut().unwrap();
    let cs = cols.as_slice().expect("contiguous cols");
    for ci in 0..c {
        let xbase = ci * h * w;
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let rbase = row * oh * ow;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let ii = ii as usize;
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        xs[xbase + ii * w + jj as usize] += cs[rbase + oi * ow + oj];
                    }
                }
            }
        }
    }
    x
}

/// 2-D convolution, weights stored as `(out_c, in_c*k*k)`.
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param,
    pub bias: Param,
    cached_x: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: &mut WeightInit,
    ) -> Self {
        let fan_in = in_c * k * k;
        let w = init.he((out_c, fan_in), fan_in);
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::new(format!("{name}.w"), w.into_dyn()),
            bias: Param::new(format!("{name}.b"), ndarray::Array1::zeros(out_c).into_dyn()),
            cached_x: None,
        }
    }

    /// Same as [`Conv2d::new`] but with zero-initialized weights (score heads).
    pub fn new_zeroed(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = Array2::<f64>::zeros((out_c, in_c * k * k));
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::new(format!("{name}.w"), w.into_dyn()),
            bias: Param::new(format!("{name}.b"), ndarray::Array1::zeros(out_c).into_dyn()),
            cached_x: None,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_len(h, self.k, self.stride, self.pad),
            conv_out_len(w, self.k, self.stride, self.pad),
        )
    }

    fn forward_one(&self, x: ArrayView3<f64>) -> Array3<f64> {
        let (_, h, w) = x.dim();
        let (oh, ow) = self.out_shape(h, w);
        let cols = im2col(x, self.k, self.stride, self.pad);
        let w2 = self
            .weight
            .w
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let mut y = w2.dot(&cols);
        let b = self.bias.w.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        for (mut row, bi) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
            row += *bi;
        }
        y.into_shape_with_order((self.out_c, oh, ow)).unwrap()
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_shape(h, w);
        let mut y = Array4::zeros((n, self.out_c, oh, ow));
        let items: Vec<Array3<f64>> = x
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|xi| self.forward_one(xi))
            .collect();
        for (mut yi, item) in y.axis_iter_mut(Axis(0)).zip(items) {
            yi.assign(&item);
        }
        self.cached_x = Some(x);
        y
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let x = self.cached_x.take().expect("forward before backward");
        let (n, _, h, w) = x.dim();
        let (_, _, oh, ow) = grad.dim();
        let w2 = self
            .weight
            .w
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let per_item: Vec<(Array3<f64>, Array2<f64>, ndarray::Array1<f64>)> = x
            .axis_iter(Axis(0))
            .into_par_iter()
            .zip(grad.axis_iter(Axis(0)).into_par_iter())
            .map(|(xi, gi)| {
                let cols = im2col(xi, self.k, self.stride, self.pad);
                let g2 = gi
                    .to_shape((self.out_c, oh * ow))
                    .unwrap()
                    .to_owned();
                let gw = g2.dot(&cols.t());
                let gb = g2.sum_axis(Axis(1));
                let gcols = w2.t().dot(&g2);
                let gx = col2im(
                    gcols.view(),
                    (self.in_c, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                );
                (gx, gw, gb)
            })
            .collect();
        let mut gx = Array4::zeros(x.raw_dim());
        let mut gw_acc = self.weight.g.view_mut().into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut gb_acc = self.bias.g.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
        for (i, (gxi, gw, gb)) in per_item.into_iter().enumerate() {
            gx.slice_mut(s![i, .., .., ..]).assign(&gxi);
            gw_acc += &gw;
            gb_acc += &gb;
        }
        let _ = n;
        gx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Transposed 2-D convolution (fractionally strided upsampling),
/// weights stored as `(in_c, out_c*k*k)`.
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param,
    pub bias: Param,
    cached_x: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: &mut WeightInit,
    ) -> Self {
        let fan_in = in_c * k * k;
        let w = init.he((in_c, out_c * k * k), fan_in);
        ConvTranspose2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::new(format!("{name}.w"), w.into_dyn()),
            bias: Param::new(format!("{name}.b"), ndarray::Array1::zeros(out_c).into_dyn()),
            cached_x: None,
        }
    }

    /// Bilinear-interpolation initialization (the FCN upsampling convention).
    /// Requires `in_c == out_c`; each channel upsamples itself.
    pub fn new_bilinear(name: &str, channels: usize, k: usize, stride: usize, pad: usize) -> Self {
        let mut w = Array2::<f64>::zeros((channels, channels * k * k));
        let f = (k as f64 + 1.0) / 2.0;
        let center = if k % 2 == 1 { f - 1.0 } else { f - 0.5 };
        for c in 0..channels {
            for i in 0..k {
                for j in 0..k {
                    let v = (1.0 - ((i as f64) - center).abs() / f)
                        * (1.0 - ((j as f64) - center).abs() / f);
                    w[[c, (c * k + i) * k + j]] = v;
                }
            }
        }
        ConvTranspose2d {
            in_c: channels,
            out_c: channels,
            k,
            stride,
            pad,
            weight: Param::new(format!("{name}.w"), w.into_dyn()),
            bias: Param::new(
                format!("{name}.b"),
                ndarray::Array1::zeros(channels).into_dyn(),
            ),
            cached_x: None,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.k - 2 * self.pad,
            (w - 1) * self.stride + self.k - 2 * self.pad,
        )
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&mut self, x: Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_c, "conv-transpose input channels");
        let (oh, ow) = self.out_shape(h, w);
        let w2 = self
            .weight
            .w
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let b = self.bias.w.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let items: Vec<Array3<f64>> = x
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|xi| {
                let xf = xi.to_shape((self.in_c, h * w)).unwrap().to_owned();
                let cols = w2.t().dot(&xf);
                let mut y = col2im(
                    cols.view(),
                    (self.out_c, oh, ow),
                    self.k,
                    self.stride,
                    self.pad,
                );
                for (mut plane, bi) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
                    plane += *bi;
                }
                y
            })
            .collect();
        let mut y = Array4::zeros((n, self.out_c, oh, ow));
        for (mut yi, item) in y.axis_iter_mut(Axis(0)).zip(items) {
            yi.assign(&item);
        }
        self.cached_x = Some(x);
        y
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let x = self.cached_x.take().expect("forward before backward");
        let (_, _, h, w) = x.dim();
        let w2 = self
            .weight
            .w
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let per_item: Vec<(Array2<f64>, Array2<f64>, ndarray::Array1<f64>)> = x
            .axis_iter(Axis(0))
            .into_par_iter()
            .zip(grad.axis_iter(Axis(0)).into_par_iter())
            .map(|(xi, gi)| {
                let gcols = im2col(gi, self.k, self.stride, self.pad);
                let xf = xi.to_shape((self.in_c, h * w)).unwrap().to_owned();
                let gx = w2.dot(&gcols);
                let gw = xf.dot(&gcols.t());
                let gb = gi.sum_axis(Axis(1)).sum_axis(Axis(1));
                (gx, gw, gb)
            })
            .collect();
        let n = x.dim().0;
        let mut gx = Array4::zeros((n, self.in_c, h, w));
        let mut gw_acc = self.weight.g.view_mut().into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut gb_acc = self.bias.g.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
        for (i, (gxi, gw, gb)) in per_item.into_iter().enumerate() {
            gx.slice_mut(s![i, .., .., ..])
                .assign(&gxi.into_shape_with_order((self.in_c, h, w)).unwrap());
            gw_acc += &gw;
            gb_acc += &gb;
        }
        gx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c.
        let mut rng = crate::test_rng(7);
        let x = Array3::from_shape_fn((2, 6, 6), |_| crate::unit_rand(&mut rng));
        let cols = im2col(x.view(), 3, 1, 1);
        let c = Array2::from_shape_fn(cols.raw_dim(), |_| crate::unit_rand(&mut rng));
        let lhs: f64 = (&cols * &c).sum();
        let back = col2im(c.view(), (2, 6, 6), 3, 1, 1);
        let rhs: f64 = (&x * &back).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut conv = Conv2d::new_zeroed("id", 1, 1, 3, 1, 1);
        // delta kernel: center tap = 1
        let mut w = conv.weight.w.view_mut().into_dimensionality::<ndarray::Ix2>().unwrap();
        w[[0, 4]] = 1.0;
        let x = Array::from_shape_fn((1, 1, 5, 5), |(_, _, i, j)| (i * 5 + j) as f64);
        let y = conv.forward(x.clone());
        assert_eq!(y, x);
    }

    #[test]
    fn conv_transpose_doubles_resolution() {
        let mut rng = crate::test_rng(3);
        let mut init = WeightInit::new(1);
        let mut ct = ConvTranspose2d::new("up", 3, 2, 4, 2, 1, &mut init);
        let x = Array4::from_shape_fn((1, 3, 5, 7), |_| crate::unit_rand(&mut rng));
        let y = ct.forward(x);
        assert_eq!(y.dim(), (1, 2, 10, 14));
    }
}

use ndarray::{Array4, Array4 as A4};

use super::{Layer, Tensor};

/// Argmax locations recorded by a max-pool, one flat `h*W + w` index per
/// pooled window, plus the pre-pool spatial size needed to unpool.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    pub input_h: usize,
    pub input_w: usize,
    /// Shape `(n, c, out_h, out_w)`, values are flat indices into the input plane.
    pub argmax: ndarray::Array4<usize>,
}

fn pool_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Max pooling with window `k` and stride `s`.
///
/// Output length is `ceil(len / s)`; windows that extend past the border are
/// clipped. This single rule covers the stride-2 pools (including the odd
/// 15 -> 8 stage) and the stride-1 "same" pool of the detector.
pub fn max_pool(x: &Tensor, k: usize, stride: usize) -> (Tensor, PoolIndices) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (pool_out_len(h, stride), pool_out_len(w, stride));
    let mut y = A4::zeros((n, c, oh, ow));
    let mut argmax = Array4::<usize>::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                let i0 = oi * stride;
                let i1 = (i0 + k).min(h);
                for oj in 0..ow {
                    let j0 = oj * stride;
                    let j1 = (j0 + k).min(w);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = i0 * w + j0;
                    for i in i0..i1 {
                        for j in j0..j1 {
                            let v = x[[ni, ci, i, j]];
                            if v > best {
                                best = v;
                                best_idx = i * w + j;
                            }
                        }
                    }
                    y[[ni, ci, oi, oj]] = best;
                    argmax[[ni, ci, oi, oj]] = best_idx;
                }
            }
        }
    }
    (
        y,
        PoolIndices {
            input_h: h,
            input_w: w,
            argmax,
        },
    )
}

/// Places each pooled value back at its recorded argmax location, zeros
/// elsewhere. Overlapping windows (stride < k) accumulate.
pub fn unpool(values: &Tensor, indices: &PoolIndices) -> Tensor {
    let (n, c, oh, ow) = values.dim();
    assert_eq!(indices.argmax.dim(), (n, c, oh, ow), "unpool index shape");
    let (h, w) = (indices.input_h, indices.input_w);
    let mut y = A4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let flat = indices.argmax[[ni, ci, oi, oj]];
                    y[[ni, ci, flat / w, flat % w]] += values[[ni, ci, oi, oj]];
                }
            }
        }
    }
    y
}

/// Gathers a gradient at the recorded argmax locations (adjoint of [`unpool`]).
pub fn unpool_backward(grad: &Tensor, indices: &PoolIndices) -> Tensor {
    let (n, c, oh, ow) = indices.argmax.dim();
    let w = indices.input_w;
    let mut g = A4::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let flat = indices.argmax[[ni, ci, oi, oj]];
                    g[[ni, ci, oi, oj]] = grad[[ni, ci, flat / w, flat % w]];
                }
            }
        }
    }
    g
}

/// Max-pool as a [`Layer`]; keeps its own indices for the backward pass.
pub struct MaxPool2d {
    pub k: usize,
    pub stride: usize,
    indices: Option<PoolIndices>,
}

impl MaxPool2d {
    pub fn new(k: usize, stride: usize) -> Self {
        MaxPool2d {
            k,
            stride,
            indices: None,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (pool_out_len(h, self.stride), pool_out_len(w, self.stride))
    }

    /// Forward that also hands the indices to the caller (SegNet encoders).
    pub fn forward_with_indices(&self, x: &Tensor) -> (Tensor, PoolIndices) {
        max_pool(x, self.k, self.stride)
    }

    pub fn backward_from_indices(grad: &Tensor, indices: &PoolIndices) -> Tensor {
        unpool(grad, indices)
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: Tensor) -> Tensor {
        let (y, idx) = max_pool(&x, self.k, self.stride);
        self.indices = Some(idx);
        y
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let idx = self.indices.take().expect("forward before backward");
        unpool(&grad, &idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pool_2x2_stride2() {
        let x = array![[[
            [1.0, 2.0, 5.0, 3.0],
            [4.0, 0.0, 1.0, 1.0],
            [0.5, 0.25, 9.0, 2.0],
            [0.0, 0.0, 1.0, 8.0],
        ]]];
        let (y, idx) = max_pool(&x, 2, 2);
        assert_eq!(y, array![[[[4.0, 5.0], [0.5, 9.0]]]]);
        let back = unpool(&y, &idx);
        assert_eq!(back[[0, 0, 1, 0]], 4.0);
        assert_eq!(back[[0, 0, 0, 2]], 5.0);
        assert_eq!(back[[0, 0, 2, 0]], 0.5);
        assert_eq!(back[[0, 0, 2, 2]], 9.0);
        assert_eq!(back.iter().filter(|v| **v != 0.0).count(), 4);
    }

    #[test]
    fn odd_length_is_ceil_pooled() {
        let x = Tensor::ones((1, 1, 15, 15));
        let (y, _) = max_pool(&x, 2, 2);
        assert_eq!(y.dim(), (1, 1, 8, 8));
    }

    #[test]
    fn stride1_keeps_resolution() {
        let x = Tensor::ones((1, 1, 13, 13));
        let (y, _) = max_pool(&x, 2, 1);
        assert_eq!(y.dim(), (1, 1, 13, 13));
    }

    #[test]
    fn constant_map_unpools_one_value_per_window() {
        let x = Tensor::ones((1, 1, 4, 4));
        let (y, idx) = max_pool(&x, 2, 2);
        let back = unpool(&y, &idx);
        assert_eq!(back.iter().filter(|v| **v != 0.0).count(), 4);
        assert_eq!(back.sum(), y.sum());
    }
}

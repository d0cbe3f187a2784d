use image::RgbImage;
use ndarray::s;

use crate::error::Result;
use crate::model_spec::{LayerKind, LayerSpec, ModelSpec, Shape3};
use crate::nn::{
    Conv2d, ConvTranspose2d, Layer, MaxPool2d, Param, Relu, Sequential, Tensor, Trainable,
    WeightInit,
};

use super::{check_input_size, probs_from_logits, ProbabilityMask, Segmenter, SegmenterKind};

/// VGG-16 convolutional trunk: filters per block, two or three 3x3 convs per
/// block, each block followed by a 2x2 max-pool.
const VGG_BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

/// Channels of the first 1x1 convolution in the score head.
const SCORE_MID: usize = 256;

fn scaled(c: usize, divisor: usize) -> usize {
    (c / divisor).max(2)
}

/// Spatial size of the coarse score map for a given input: five ceil-mode
/// halvings. A 320x240 input yields 10x8.
pub fn coarse_grid_size(w: usize, h: usize) -> (usize, usize) {
    let mut w = w;
    let mut h = h;
    for _ in 0..5 {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    (w, h)
}

/// FCN8 over a VGG-16 trunk: the trunk's fully connected layers are dropped,
/// two 1x1 convolutions produce a coarse 2-channel score map, and the fusion
/// head upsamples while summing 1x1-scored feature maps from the last three
/// pooling stages, ending at input resolution with 2 channels.
pub struct Fcn8 {
    pub width_divisor: usize,
    blocks: Vec<Sequential>,
    pools: Vec<MaxPool2d>,
    score_head: Sequential,
    score_pool4: Conv2d,
    score_pool3: Conv2d,
    up2: ConvTranspose2d,
    up4: ConvTranspose2d,
    up8: ConvTranspose2d,
    // forward caches for the fusion wiring
    cache: Option<FusionCache>,
}

struct FusionCache {
    p3_hw: (usize, usize),
    p4_hw: (usize, usize),
    in_hw: (usize, usize),
}

fn crop_spatial(t: &Tensor, h: usize, w: usize) -> Tensor {
    t.slice(s![.., .., ..h, ..w]).to_owned()
}

/// Adjoint of `crop_spatial`: zero-pads at bottom/right.
fn pad_spatial(t: &Tensor, h: usize, w: usize) -> Tensor {
    let (n, c, th, tw) = t.dim();
    let mut out = Tensor::zeros((n, c, h, w));
    out.slice_mut(s![.., .., ..th, ..tw]).assign(t);
    out
}

impl Fcn8 {
    pub fn new(width_divisor: usize, seed: u64) -> Self {
        let mut init = WeightInit::new(seed);
        let mut blocks = Vec::new();
        let mut pools = Vec::new();
        let mut in_c = 3;
        let mut p3_c = 0;
        let mut p4_c = 0;
        for (bi, &(filters, convs)) in VGG_BLOCKS.iter().enumerate() {
            let out_c = scaled(filters, width_divisor);
            let mut layers: Vec<Box<dyn Layer>> = Vec::new();
            for ci in 0..convs {
                let c_in = if ci == 0 { in_c } else { out_c };
                layers.push(Box::new(Conv2d::new(
                    &format!("vgg{}_{}", bi + 1, ci + 1),
                    c_in,
                    out_c,
                    3,
                    1,
                    1,
                    &mut init,
                )));
                layers.push(Box::new(Relu::new()));
            }
            blocks.push(Sequential::new(layers));
            pools.push(MaxPool2d::new(2, 2));
            if bi == 2 {
                p3_c = out_c;
            }
            if bi == 3 {
                p4_c = out_c;
            }
            in_c = out_c;
        }
        let mid = scaled(SCORE_MID, width_divisor);
        let score_head = Sequential::new(vec![
            Box::new(Conv2d::new("score_a", in_c, mid, 1, 1, 0, &mut init)),
            Box::new(Relu::new()),
            Box::new(Conv2d::new_zeroed("score_b", mid, 2, 1, 1, 0)),
        ]);
        Fcn8 {
            width_divisor,
            blocks,
            pools,
            score_head,
            score_pool4: Conv2d::new_zeroed("score_pool4", p4_c, 2, 1, 1, 0),
            score_pool3: Conv2d::new_zeroed("score_pool3", p3_c, 2, 1, 1, 0),
            up2: ConvTranspose2d::new_bilinear("up2", 2, 4, 2, 1),
            up4: ConvTranspose2d::new_bilinear("up4", 2, 4, 2, 1),
            up8: ConvTranspose2d::new_bilinear("up8", 2, 16, 8, 4),
            cache: None,
        }
    }

    /// Two-channel logit map at input resolution.
    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let (_, _, in_h, in_w) = x.dim();
        let mut cur = x;
        let mut p3 = None;
        let mut p4 = None;
        for bi in 0..5 {
            cur = self.blocks[bi].forward(cur);
            cur = self.pools[bi].forward(cur);
            if bi == 2 {
                p3 = Some(cur.clone());
            }
            if bi == 3 {
                p4 = Some(cur.clone());
            }
        }
        let p3 = p3.unwrap();
        let p4 = p4.unwrap();
        let p3_hw = (p3.dim().2, p3.dim().3);
        let p4_hw = (p4.dim().2, p4.dim().3);

        let coarse = self.score_head.forward(cur);
        let u2 = self.up2.forward(coarse);
        let u2 = crop_spatial(&u2, p4_hw.0, p4_hw.1);
        let f4 = u2 + self.score_pool4.forward(p4);
        let u4 = self.up4.forward(f4);
        let u4 = crop_spatial(&u4, p3_hw.0, p3_hw.1);
        let f3 = u4 + self.score_pool3.forward(p3);
        let out = self.up8.forward(f3);
        self.cache = Some(FusionCache {
            p3_hw,
            p4_hw,
            in_hw: (in_h, in_w),
        });
        crop_spatial(&out, in_h, in_w)
    }

    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        let cache = self.cache.take().expect("forward before backward");
        let (uh, uw) = self.up8.out_shape(cache.p3_hw.0, cache.p3_hw.1);
        let g = pad_spatial(&grad, uh, uw);
        let g_f3 = self.up8.backward(g);
        // f3 = crop(up4(f4)) + score_pool3(p3)
        let g_p3_score = self.score_pool3.backward(g_f3.clone());
        let (uh4, uw4) = self.up4.out_shape(cache.p4_hw.0, cache.p4_hw.1);
        let g_u4 = pad_spatial(&g_f3, uh4, uw4);
        let g_f4 = self.up4.backward(g_u4);
        let g_p4_score = self.score_pool4.backward(g_f4.clone());
        let coarse_hw = {
            let (h, w) = cache.p4_hw;
            // up2 input was the coarse map; recover its size from the pad
            (h.div_ceil(2), w.div_ceil(2))
        };
        let (uh2, uw2) = self.up2.out_shape(coarse_hw.0, coarse_hw.1);
        let g_u2 = pad_spatial(&g_f4, uh2, uw2);
        let g_coarse = self.up2.backward(g_u2);
        let g_p5 = self.score_head.backward(g_coarse);

        // trunk backward with skip gradients joining at pool3/pool4 outputs
        let mut g = self.pools[4].backward(g_p5);
        g = self.blocks[4].backward(g);
        g = g + g_p4_score;
        g = self.pools[3].backward(g);
        g = self.blocks[3].backward(g);
        g = g + g_p3_score;
        g = self.pools[2].backward(g);
        g = self.blocks[2].backward(g);
        g = self.pools[1].backward(g);
        g = self.blocks[1].backward(g);
        g = self.pools[0].backward(g);
        let _ = cache.in_hw;
        self.blocks[0].backward(g)
    }
}

impl Trainable for Fcn8 {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.blocks {
            Layer::visit_params(b, f);
        }
        Layer::visit_params(&mut self.score_head, f);
        self.score_pool4.visit_params(f);
        self.score_pool3.visit_params(f);
        self.up2.visit_params(f);
        self.up4.visit_params(f);
        self.up8.visit_params(f);
    }
}

impl Segmenter for Fcn8 {
    fn kind(&self) -> SegmenterKind {
        SegmenterKind::Fcn8
    }

    fn segment(&mut self, image: &RgbImage) -> Result<ProbabilityMask> {
        check_input_size(SegmenterKind::Fcn8, image)?;
        let x = super::image_to_tensor(image, 0.0, 1.0);
        let logits = self.forward(x);
        Ok(probs_from_logits(&logits))
    }
}

/// Condensed layer table for `describe-model` output.
pub fn fcn8_spec(width_divisor: usize) -> ModelSpec {
    let mut rows = Vec::new();
    let mut cur = Shape3::new(320, 240, 3);
    for &(filters, convs) in &VGG_BLOCKS {
        let f = scaled(filters, width_divisor);
        for _ in 0..convs {
            let out = Shape3::new(cur.w, cur.h, f);
            rows.push(LayerSpec {
                index: rows.len() + 1,
                kind: LayerKind::Conv,
                filters: Some(f),
                size: Some("3 x 3".into()),
                input: Some(cur),
                output: Some(out),
            });
            cur = out;
        }
        let out = Shape3::new(cur.w.div_ceil(2), cur.h.div_ceil(2), cur.c);
        rows.push(LayerSpec {
            index: rows.len() + 1,
            kind: LayerKind::Max,
            filters: None,
            size: Some("2 x 2".into()),
            input: Some(cur),
            output: Some(out),
        });
        cur = out;
    }
    for (f, k) in [(scaled(SCORE_MID, width_divisor), 1usize), (2, 1)] {
        let out = Shape3::new(cur.w, cur.h, f);
        rows.push(LayerSpec {
            index: rows.len() + 1,
            kind: LayerKind::Conv,
            filters: Some(f),
            size: Some(format!("{k} x {k}")),
            input: Some(cur),
            output: Some(out),
        });
        cur = out;
    }
    rows.push(LayerSpec {
        index: rows.len() + 1,
        kind: LayerKind::Up,
        filters: Some(2),
        size: Some("8 x (fuse pool3, pool4)".into()),
        input: Some(cur),
        output: Some(Shape3::new(320, 240, 2)),
    });
    ModelSpec {
        name: "fcn8".into(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn coarse_grid_is_10x8_for_320x240() {
        assert_eq!(coarse_grid_size(320, 240), (10, 8));
    }

    #[test]
    fn tiny_forward_reaches_input_resolution() {
        let mut net = Fcn8::new(16, 1);
        let x = Tensor::zeros((1, 3, 48, 64));
        let y = net.forward(x);
        assert_eq!(y.dim(), (1, 2, 48, 64));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut net = Fcn8::new(16, 2);
        let mut rng = crate::test_rng(3);
        let x = Tensor::from_shape_fn((1, 3, 32, 32), |_| {
            (crate::unit_rand(&mut rng) + 1.0) / 2.0
        });
        let logits = net.forward(x);
        let p1 = crate::nn::softmax2_probs(&logits);
        // p0 + p1 = 1 by construction of the two-class softmax; check the
        // explicit exponential route agrees
        let explicit = Array3::from_shape_fn(p1.raw_dim(), |(n, i, j)| {
            let a: f64 = logits[[n, 0, i, j]];
            let b: f64 = logits[[n, 1, i, j]];
            b.exp() / (a.exp() + b.exp())
        });
        for (x, y) in p1.iter().zip(explicit.iter()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn tiny_backward_runs_and_produces_grads() {
        let mut net = Fcn8::new(16, 1);
        let mut rng = crate::test_rng(4);
        let x = Tensor::from_shape_fn((1, 3, 32, 32), |_| crate::unit_rand(&mut rng));
        let y = net.forward(x);
        net.backward(Tensor::ones(y.raw_dim()));
        let mut any_nonzero = false;
        net.visit_params(&mut |p| {
            if p.g.iter().any(|g| *g != 0.0) {
                any_nonzero = true;
            }
        });
        assert!(any_nonzero);
    }
}

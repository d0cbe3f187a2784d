use image::RgbImage;

use crate::error::Result;
use crate::model_spec::{LayerKind, LayerSpec, ModelSpec, Shape3};
use crate::nn::{
    max_pool, unpool, unpool_backward, Conv2d, Layer, Param, PoolIndices, Relu, Tensor, Trainable,
    WeightInit,
};

use super::{check_input_size, probs_from_logits, ProbabilityMask, Segmenter, SegmenterKind};

/// Encoder stages at full width: filters and conv count per stage; each stage
/// ends in a 2x2 max-pool whose argmax indices are kept for the decoder.
const ENC_STAGES: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

/// Decoder conv filters per stage (after each unpooling), mirroring the
/// encoder; the very last conv maps to the 2 output classes.
const DEC_STAGES: [&[usize]; 5] = [
    &[512, 512, 512],
    &[512, 512, 256],
    &[256, 256, 128],
    &[128, 64],
    &[64, 2],
];

fn scaled(c: usize, divisor: usize) -> usize {
    if c == 2 {
        2
    } else {
        (c / divisor).max(2)
    }
}

/// Encoder-decoder segmentation network: 13 VGG-style encoder convolutions
/// with five index-recording max-pools, and a mirrored decoder that upsamples
/// by placing values back at the recorded argmax locations before convolving.
pub struct SegNet {
    pub width_divisor: usize,
    enc: Vec<Vec<(Conv2d, Relu)>>,
    dec: Vec<Vec<(Conv2d, Option<Relu>)>>,
    pool_indices: Vec<PoolIndices>,
}

impl SegNet {
    pub fn new(width_divisor: usize, seed: u64) -> Self {
        let mut init = WeightInit::new(seed);
        let mut enc = Vec::new();
        let mut in_c = 3;
        for (si, &(filters, convs)) in ENC_STAGES.iter().enumerate() {
            let out_c = scaled(filters, width_divisor);
            let mut stage = Vec::new();
            for ci in 0..convs {
                let c_in = if ci == 0 { in_c } else { out_c };
                stage.push((
                    Conv2d::new(
                        &format!("enc{}_{}", si + 1, ci + 1),
                        c_in,
                        out_c,
                        3,
                        1,
                        1,
                        &mut init,
                    ),
                    Relu::new(),
                ));
            }
            enc.push(stage);
            in_c = out_c;
        }
        let mut dec = Vec::new();
        for (si, filters) in DEC_STAGES.iter().enumerate() {
            let mut stage = Vec::new();
            for (ci, &f) in filters.iter().enumerate() {
                let out_c = scaled(f, width_divisor);
                let last = si == 4 && ci == filters.len() - 1;
                stage.push((
                    Conv2d::new(
                        &format!("dec{}_{}", si + 1, ci + 1),
                        in_c,
                        out_c,
                        3,
                        1,
                        1,
                        &mut init,
                    ),
                    if last { None } else { Some(Relu::new()) },
                ));
                in_c = out_c;
            }
            dec.push(stage);
        }
        SegNet {
            width_divisor,
            enc,
            dec,
            pool_indices: Vec::new(),
        }
    }

    /// Two-channel logit map at input resolution.
    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let mut cur = x;
        self.pool_indices.clear();
        for stage in &mut self.enc {
            for (conv, relu) in stage {
                cur = relu.forward(conv.forward(cur));
            }
            let (pooled, idx) = max_pool(&cur, 2, 2);
            self.pool_indices.push(idx);
            cur = pooled;
        }
        for (si, stage) in self.dec.iter_mut().enumerate() {
            let idx = &self.pool_indices[4 - si];
            cur = unpool(&cur, idx);
            for (conv, relu) in stage {
                cur = conv.forward(cur);
                if let Some(relu) = relu {
                    cur = relu.forward(cur);
                }
            }
        }
        cur
    }

    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        assert_eq!(self.pool_indices.len(), 5, "forward before backward");
        let mut g = grad;
        for (si, stage) in self.dec.iter_mut().enumerate().rev() {
            for (conv, relu) in stage.iter_mut().rev() {
                if let Some(relu) = relu {
                    g = relu.backward(g);
                }
                g = conv.backward(g);
            }
            g = unpool_backward(&g, &self.pool_indices[4 - si]);
        }
        for (si, stage) in self.enc.iter_mut().enumerate().rev() {
            // pool backward: scatter the gradient to the argmax locations
            g = unpool(&g, &self.pool_indices[si]);
            for (conv, relu) in stage.iter_mut().rev() {
                g = conv.backward(relu.backward(g));
            }
        }
        self.pool_indices.clear();
        g
    }
}

impl Trainable for SegNet {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for stage in &mut self.enc {
            for (conv, _) in stage {
                conv.visit_params(f);
            }
        }
        for stage in &mut self.dec {
            for (conv, _) in stage {
                conv.visit_params(f);
            }
        }
    }
}

impl Segmenter for SegNet {
    fn kind(&self) -> SegmenterKind {
        SegmenterKind::SegNet
    }

    fn segment(&mut self, image: &RgbImage) -> Result<ProbabilityMask> {
        check_input_size(SegmenterKind::SegNet, image)?;
        let x = super::image_to_tensor(image, 0.0, 1.0);
        let logits = self.forward(x);
        Ok(probs_from_logits(&logits))
    }
}

/// Full layer table of the network for a 320x240 input, 36 rows: encoder
/// convs with pools, then unpooling stages with their decoder convs.
pub fn segnet_spec(width_divisor: usize) -> ModelSpec {
    let mut rows: Vec<LayerSpec> = Vec::new();
    let mut cur = Shape3::new(320, 240, 3);
    // encoder pre-pool sizes, innermost last; the decoder restores them
    let mut pre_pool = Vec::new();
    for &(filters, convs) in &ENC_STAGES {
        let f = scaled(filters, width_divisor);
        for _ in 0..convs {
            let out = Shape3::new(cur.w, cur.h, f);
            rows.push(LayerSpec {
                index: rows.len() + 1,
                kind: LayerKind::Enc,
                filters: Some(f),
                size: Some("3 x 3".into()),
                input: Some(cur),
                output: Some(out),
            });
            cur = out;
        }
        pre_pool.push((cur.w, cur.h));
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
    for (si, filters) in DEC_STAGES.iter().enumerate() {
        let (w, h) = pre_pool[4 - si];
        let out = Shape3::new(w, h, cur.c);
        rows.push(LayerSpec {
            index: rows.len() + 1,
            kind: LayerKind::Up,
            filters: None,
            size: Some("2 x 2".into()),
            input: Some(cur),
            output: Some(out),
        });
        cur = out;
        for &f in filters.iter() {
            let f = scaled(f, width_divisor);
            let out = Shape3::new(cur.w, cur.h, f);
            rows.push(LayerSpec {
                index: rows.len() + 1,
                kind: LayerKind::Dec,
                filters: Some(f),
                size: Some("3 x 3".into()),
                input: Some(cur),
                output: Some(out),
            });
            cur = out;
        }
    }
    ModelSpec {
        name: "segnet".into(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_traces_table_rows() {
        let spec = segnet_spec(1);
        spec.validate_chain().unwrap();
        assert_eq!(spec.rows.len(), 36);
        // innermost feature map
        assert_eq!(spec.rows[17].output, Some(Shape3::new(10, 8, 512)));
        // first unpooling restores the odd 20 x 15 size
        assert_eq!(spec.rows[18].kind, LayerKind::Up);
        assert_eq!(spec.rows[18].output, Some(Shape3::new(20, 15, 512)));
        // row 31 (1-based): fourth unpooling, 128 input channels
        assert_eq!(spec.rows[30].kind, LayerKind::Up);
        assert_eq!(spec.rows[30].input, Some(Shape3::new(80, 60, 128)));
        assert_eq!(spec.rows[30].output, Some(Shape3::new(160, 120, 128)));
        // final row: two-class map at input resolution
        assert_eq!(spec.rows[35].output, Some(Shape3::new(320, 240, 2)));
    }

    #[test]
    fn tiny_forward_round_trips_resolution() {
        let mut net = SegNet::new(16, 1);
        let x = Tensor::zeros((1, 3, 48, 64));
        let y = net.forward(x);
        assert_eq!(y.dim(), (1, 2, 48, 64));
    }

    #[test]
    fn tiny_backward_runs_and_produces_grads() {
        let mut net = SegNet::new(16, 2);
        let mut rng = crate::test_rng(9);
        let x = Tensor::from_shape_fn((1, 3, 32, 32), |_| crate::unit_rand(&mut rng));
        let y = net.forward(x.clone());
        let g = net.backward(Tensor::ones(y.raw_dim()));
        assert_eq!(g.raw_dim(), x.raw_dim());
        let mut any_nonzero = false;
        net.visit_params(&mut |p| {
            if p.g.iter().any(|g| *g != 0.0) {
                any_nonzero = true;
            }
        });
        assert!(any_nonzero);
    }
}

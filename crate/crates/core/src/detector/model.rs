use crate::error::{Error, Result};
use crate::model_spec::{LayerKind, LayerSpec, ModelSpec, Shape3};
use crate::nn::{Conv2d, Layer, LeakyRelu, MaxPool2d, Param, Sequential, Trainable, WeightInit};

use super::DetectorConfig;

/// Filter counts of the nine convolutional layers at full width.
const CONV_FILTERS: [usize; 8] = [16, 32, 64, 128, 256, 512, 1024, 1024];

fn scaled(filters: usize, divisor: usize) -> usize {
    (filters / divisor).max(1)
}

/// Layer table of the Fast-YOLO detector: 9 conv layers interleaved with
/// 6 max-pools (the sixth with stride 1), a 1x1 final conv and the
/// detection layer.
pub fn fast_yolo_spec(cfg: &DetectorConfig, width_divisor: usize) -> ModelSpec {
    let s = cfg.input_size;
    let mut rows: Vec<LayerSpec> = Vec::new();
    let mut cur = Shape3::new(s, s, 3);

    fn push_conv(rows: &mut Vec<LayerSpec>, cur: &mut Shape3, filters: usize, k: usize) {
        let out = Shape3::new(cur.w, cur.h, filters);
        rows.push(LayerSpec {
            index: rows.len(),
            kind: LayerKind::Conv,
            filters: Some(filters),
            size: Some(format!("{k} x {k} / 1")),
            input: Some(*cur),
            output: Some(out),
        });
        *cur = out;
    }
    fn push_max(rows: &mut Vec<LayerSpec>, cur: &mut Shape3, stride: usize) {
        let out = Shape3::new(cur.w.div_ceil(stride), cur.h.div_ceil(stride), cur.c);
        rows.push(LayerSpec {
            index: rows.len(),
            kind: LayerKind::Max,
            filters: None,
            size: Some(format!("2 x 2 / {stride}")),
            input: Some(*cur),
            output: Some(out),
        });
        *cur = out;
    }
    // conv/max pairs through the fifth pool, then the stride-1 pool
    for (i, &f) in CONV_FILTERS[..6].iter().enumerate() {
        push_conv(&mut rows, &mut cur, scaled(f, width_divisor), 3);
        push_max(&mut rows, &mut cur, if i == 5 { 1 } else { 2 });
    }
    push_conv(&mut rows, &mut cur, scaled(CONV_FILTERS[6], width_divisor), 3);
    push_conv(&mut rows, &mut cur, scaled(CONV_FILTERS[7], width_divisor), 3);
    push_conv(&mut rows, &mut cur, cfg.final_filters(), 1);
    rows.push(LayerSpec {
        index: rows.len(),
        kind: LayerKind::Detection,
        filters: None,
        size: None,
        input: None,
        output: None,
    });
    ModelSpec {
        name: "fast-yolo".into(),
        rows,
    }
}

/// The trainable Fast-YOLO network. `width_divisor` scales every hidden
/// channel count down for desk-scale experiments; the architecture (layer
/// kinds, kernels, strides, final filter count) is unchanged.
pub struct FastYolo {
    pub cfg: DetectorConfig,
    pub width_divisor: usize,
    net: Sequential,
}

impl FastYolo {
    pub fn new(cfg: DetectorConfig, width_divisor: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.final_filters() != cfg.anchors.len() * (5 + cfg.classes) {
            return Err(Error::ModelConfig(
                "anchor/class product must equal final filter count".into(),
            ));
        }
        let mut init = WeightInit::new(seed);
        let mut layers: Vec<Box<dyn Layer>> = Vec::new();
        let mut in_c = 3;
        for (i, &f) in CONV_FILTERS[..6].iter().enumerate() {
            let out_c = scaled(f, width_divisor);
            layers.push(Box::new(Conv2d::new(
                &format!("conv{i}"),
                in_c,
                out_c,
                3,
                1,
                1,
                &mut init,
            )));
            layers.push(Box::new(LeakyRelu::new(0.1)));
            layers.push(Box::new(MaxPool2d::new(2, if i == 5 { 1 } else { 2 })));
            in_c = out_c;
        }
        for (i, &f) in CONV_FILTERS[6..8].iter().enumerate() {
            let out_c = scaled(f, width_divisor);
            layers.push(Box::new(Conv2d::new(
                &format!("conv{}", i + 6),
                in_c,
                out_c,
                3,
                1,
                1,
                &mut init,
            )));
            layers.push(Box::new(LeakyRelu::new(0.1)));
            in_c = out_c;
        }
        layers.push(Box::new(Conv2d::new(
            "head",
            in_c,
            cfg.final_filters(),
            1,
            1,
            0,
            &mut init,
        )));
        Ok(FastYolo {
            cfg,
            width_divisor,
            net: Sequential::new(layers),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        fast_yolo_spec(&self.cfg, self.width_divisor)
    }

    /// Raw head output `(n, anchors*(5+classes), grid, grid)`.
    pub fn forward(&mut self, x: crate::nn::Tensor) -> crate::nn::Tensor {
        assert_eq!(
            (x.dim().2, x.dim().3),
            (self.cfg.input_size, self.cfg.input_size),
            "detector input size"
        );
        self.net.forward(x)
    }

    pub fn backward(&mut self, grad: crate::nn::Tensor) -> crate::nn::Tensor {
        self.net.backward(grad)
    }
}

impl Trainable for FastYolo {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        Layer::visit_params(&mut self.net, f);
    }
}

use image::RgbImage;
use ndarray::{concatenate, s, Axis};

use crate::error::Result;
use crate::model_spec::{LayerKind, LayerSpec, ModelSpec, Shape3};
use crate::nn::{
    Conv2d, ConvTranspose2d, Layer, LeakyRelu, Param, Relu, Sequential, Tanh, Tensor, Trainable,
    WeightInit,
};

use super::{check_input_size, probs_from_tanh_rgb, ProbabilityMask, Segmenter, SegmenterKind};

/// Encoder channel progression at full width; depths beyond the array repeat
/// the last entry (the 256-input generator uses all eight).
const DOWN_FILTERS: [usize; 8] = [64, 128, 256, 512, 512, 512, 512, 512];

fn scaled(c: usize, divisor: usize) -> usize {
    (c / divisor).max(2)
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("channel concat")
}

fn split_channels(g: &Tensor, c_first: usize) -> (Tensor, Tensor) {
    (
        g.slice(s![.., ..c_first, .., ..]).to_owned(),
        g.slice(s![.., c_first.., .., ..]).to_owned(),
    )
}

/// U-Net generator for image-to-mask translation: strided 4x4 convolutions
/// halve the resolution down to 1x1, transposed convolutions mirror the way
/// back up, each decoder stage concatenating the matching encoder activation;
/// the output is a 3-channel tanh image in `[-1, 1]`.
pub struct UnetGenerator {
    pub input_size: u32,
    pub width_divisor: usize,
    downs: Vec<(Conv2d, LeakyRelu)>,
    ups: Vec<(ConvTranspose2d, Relu)>,
    final_up: ConvTranspose2d,
    final_act: Tanh,
    skips: Vec<Tensor>,
}

impl UnetGenerator {
    /// `input_size` must be a power of two (256 at full scale).
    pub fn new(input_size: u32, width_divisor: usize, seed: u64) -> Self {
        assert!(input_size.is_power_of_two(), "generator input size");
        let depth = input_size.trailing_zeros() as usize;
        assert!(depth >= 2, "generator needs at least a 4x4 input");
        let mut init = WeightInit::new(seed);
        let mut enc_c = Vec::with_capacity(depth);
        let mut downs = Vec::new();
        let mut in_c = 3;
        for d in 0..depth {
            let f = DOWN_FILTERS[d.min(DOWN_FILTERS.len() - 1)];
            let out_c = scaled(f, width_divisor);
            downs.push((
                Conv2d::new(&format!("g_down{d}"), in_c, out_c, 4, 2, 1, &mut init),
                LeakyRelu::new(0.2),
            ));
            enc_c.push(out_c);
            in_c = out_c;
        }
        // decoder: stage i consumes the bottleneck (no skip) or the previous
        // output concatenated with the mirrored encoder activation
        let mut ups = Vec::new();
        for d in (1..depth).rev() {
            let cat_c = if d == depth - 1 {
                enc_c[d]
            } else {
                enc_c[d + 1] + enc_c[d]
            };
            let out_c = enc_c[d];
            ups.push((
                ConvTranspose2d::new(&format!("g_up{d}"), cat_c, out_c, 4, 2, 1, &mut init),
                Relu::new(),
            ));
        }
        let cat_c = if depth == 1 { enc_c[0] } else { enc_c[1] + enc_c[0] };
        let final_up = ConvTranspose2d::new("g_out", cat_c, 3, 4, 2, 1, &mut init);
        UnetGenerator {
            input_size,
            width_divisor,
            downs,
            ups,
            final_up,
            final_act: Tanh::new(),
            skips: Vec::new(),
        }
    }

    /// 3-channel tanh output at input resolution.
    pub fn forward(&mut self, x: Tensor) -> Tensor {
        self.skips.clear();
        let mut cur = x;
        for (conv, act) in &mut self.downs {
            cur = act.forward(conv.forward(cur));
            self.skips.push(cur.clone());
        }
        let depth = self.downs.len();
        for (ui, (up, act)) in self.ups.iter_mut().enumerate() {
            // mirrored encoder stage for this decoder step
            let d = depth - 1 - ui;
            let fed = if ui == 0 {
                cur
            } else {
                concat_channels(&cur, &self.skips[d])
            };
            cur = act.forward(up.forward(fed));
        }
        let fed = if depth == 1 {
            cur
        } else {
            concat_channels(&cur, &self.skips[0])
        };
        self.final_act.forward(self.final_up.forward(fed))
    }

    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        let depth = self.downs.len();
        let g = self.final_act.backward(grad);
        let g = self.final_up.backward(g);
        let (mut g_cur, mut g_skip0) = if depth == 1 {
            (g, None)
        } else {
            let c_prev = self.ups.last().map(|(u, _)| u.out_c).unwrap();
            let (a, b) = split_channels(&g, c_prev);
            (a, Some(b))
        };
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; depth];
        if let Some(g0) = g_skip0.take() {
            skip_grads[0] = Some(g0);
        }
        for (ui, (up, act)) in self.ups.iter_mut().enumerate().rev() {
            let d = depth - 1 - ui;
            let g = up.backward(act.backward(g_cur));
            if ui == 0 {
                g_cur = g;
            } else {
                let c_prev = up.in_c - self.skips[d].dim().1;
                let (a, b) = split_channels(&g, c_prev);
                g_cur = a;
                let entry = &mut skip_grads[d];
                *entry = Some(match entry.take() {
                    Some(acc) => acc + b,
                    None => b,
                });
            }
        }
        // encoder backward, adding each stage's skip gradient on the way down
        for (d, (conv, act)) in self.downs.iter_mut().enumerate().rev() {
            if let Some(sg) = skip_grads[d].take() {
                g_cur = g_cur + sg;
            }
            g_cur = conv.backward(act.backward(g_cur));
        }
        self.skips.clear();
        g_cur
    }
}

impl Trainable for UnetGenerator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (conv, _) in &mut self.downs {
            conv.visit_params(f);
        }
        for (up, _) in &mut self.ups {
            up.visit_params(f);
        }
        self.final_up.visit_params(f);
    }
}

impl Segmenter for UnetGenerator {
    fn kind(&self) -> SegmenterKind {
        SegmenterKind::Gan
    }

    fn segment(&mut self, image: &RgbImage) -> Result<ProbabilityMask> {
        check_input_size(SegmenterKind::Gan, image)?;
        let x = super::image_to_tensor(image, -1.0, 1.0);
        let out = self.forward(x);
        Ok(probs_from_tanh_rgb(&out))
    }
}

/// Patch discriminator: judges `(input image, candidate mask)` pairs as a
/// 6-channel tensor and emits a grid of real/fake logits, each covering one
/// receptive-field patch.
pub struct PatchDiscriminator {
    pub width_divisor: usize,
    net: Sequential,
}

/// `(filters, stride)` of the discriminator convolutions at full width; the
/// final 1-filter layer emits the logit grid.
const DISC_LAYERS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 2), (512, 1), (1, 1)];

impl PatchDiscriminator {
    pub fn new(width_divisor: usize, seed: u64) -> Self {
        let mut init = WeightInit::new(seed);
        let mut layers: Vec<Box<dyn Layer>> = Vec::new();
        let mut in_c = 6;
        for (i, &(f, stride)) in DISC_LAYERS.iter().enumerate() {
            let out_c = if f == 1 { 1 } else { scaled(f, width_divisor) };
            layers.push(Box::new(Conv2d::new(
                &format!("d_conv{i}"),
                in_c,
                out_c,
                4,
                stride,
                1,
                &mut init,
            )));
            if i + 1 < DISC_LAYERS.len() {
                layers.push(Box::new(LeakyRelu::new(0.2)));
            }
            in_c = out_c;
        }
        PatchDiscriminator {
            width_divisor,
            net: Sequential::new(layers),
        }
    }

    /// Patch logits for an `(image, mask)` pair, both 3-channel in `[-1, 1]`.
    pub fn forward(&mut self, image: &Tensor, mask: &Tensor) -> Tensor {
        self.net.forward(concat_channels(image, mask))
    }

    /// Gradient w.r.t. the mask half of the input pair.
    pub fn backward_to_mask(&mut self, grad: Tensor) -> Tensor {
        let g = self.net.backward(grad);
        split_channels(&g, 3).1
    }
}

impl Trainable for PatchDiscriminator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        Layer::visit_params(&mut self.net, f);
    }
}

/// Condensed generator layer table for `describe-model` output.
pub fn unet_generator_spec(input_size: u32, width_divisor: usize) -> ModelSpec {
    let depth = input_size.trailing_zeros() as usize;
    let mut rows: Vec<LayerSpec> = Vec::new();
    let s = input_size as usize;
    let mut cur = Shape3::new(s, s, 3);
    let mut enc = Vec::new();
    for d in 0..depth {
        let f = scaled(
            DOWN_FILTERS[d.min(DOWN_FILTERS.len() - 1)],
            width_divisor,
        );
        let out = Shape3::new(cur.w / 2, cur.h / 2, f);
        rows.push(LayerSpec {
            index: rows.len() + 1,
            kind: LayerKind::Enc,
            filters: Some(f),
            size: Some("4 x 4 / 2".into()),
            input: Some(cur),
            output: Some(out),
        });
        enc.push(out);
        cur = out;
    }
    for d in (0..depth).rev() {
        let (f, out_wh) = if d == 0 {
            (3, s)
        } else {
            (enc[d - 1].c, enc[d - 1].w)
        };
        let out = Shape3::new(out_wh, out_wh, f);
        rows.push(LayerSpec {
            index: rows.len() + 1,
            kind: LayerKind::Dec,
            filters: Some(f),
            size: Some("4 x 4 / 2".into()),
            input: Some(cur),
            output: Some(out),
        });
        cur = out;
    }
    ModelSpec {
        name: "gan-generator".into(),
        rows,
    }
}

/// Condensed discriminator layer table for `describe-model` output.
pub fn patch_discriminator_spec(input_size: u32, width_divisor: usize) -> ModelSpec {
    let mut rows: Vec<LayerSpec> = Vec::new();
    let s = input_size as usize;
    let mut cur = Shape3::new(s, s, 6);
    for &(f, stride) in &DISC_LAYERS {
        let out_c = if f == 1 { 1 } else { scaled(f, width_divisor) };
        let next = |len: usize| (len + 2 - 4) / stride + 1;
        let out = Shape3::new(next(cur.w), next(cur.h), out_c);
        rows.push(LayerSpec {
            index: rows.len() + 1,
            kind: LayerKind::Conv,
            filters: Some(out_c),
            size: Some(format!("4 x 4 / {stride}")),
            input: Some(cur),
            output: Some(out),
        });
        cur = out;
    }
    ModelSpec {
        name: "gan-discriminator".into(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_output_shape_and_range() {
        let mut g = UnetGenerator::new(32, 16, 1);
        let mut rng = crate::test_rng(11);
        let x = Tensor::from_shape_fn((1, 3, 32, 32), |_| crate::unit_rand(&mut rng));
        let y = g.forward(x);
        assert_eq!(y.dim(), (1, 3, 32, 32));
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn generator_backward_runs_and_produces_grads() {
        let mut g = UnetGenerator::new(16, 16, 2);
        let mut rng = crate::test_rng(12);
        let x = Tensor::from_shape_fn((1, 3, 16, 16), |_| crate::unit_rand(&mut rng));
        let y = g.forward(x.clone());
        let gx = g.backward(Tensor::ones(y.raw_dim()));
        assert_eq!(gx.raw_dim(), x.raw_dim());
        let mut any_nonzero = false;
        g.visit_params(&mut |p| {
            if p.g.iter().any(|v| *v != 0.0) {
                any_nonzero = true;
            }
        });
        assert!(any_nonzero);
    }

    #[test]
    fn discriminator_patch_grid_at_full_scale_geometry() {
        // 256 -> 128 -> 64 -> 32 -> 31 -> 30
        let spec = patch_discriminator_spec(256, 1);
        spec.validate_chain().unwrap();
        assert_eq!(spec.rows[4].output, Some(Shape3::new(30, 30, 1)));
        // run a reduced-width copy on real tensors at a smaller size
        let mut d = PatchDiscriminator::new(16, 3);
        let img = Tensor::zeros((1, 3, 32, 32));
        let mask = Tensor::zeros((1, 3, 32, 32));
        let y = d.forward(&img, &mask);
        // 32 -> 16 -> 8 -> 4, then the two stride-1 layers: 4 -> 3 -> 2
        assert_eq!(y.dim(), (1, 1, 2, 2));
    }

    #[test]
    fn discriminator_mask_gradient_shape() {
        let mut d = PatchDiscriminator::new(16, 4);
        let mut rng = crate::test_rng(13);
        let img = Tensor::from_shape_fn((1, 3, 32, 32), |_| crate::unit_rand(&mut rng));
        let mask = Tensor::from_shape_fn((1, 3, 32, 32), |_| crate::unit_rand(&mut rng));
        let y = d.forward(&img, &mask);
        let g = d.backward_to_mask(Tensor::ones(y.raw_dim()));
        assert_eq!(g.dim(), (1, 3, 32, 32));
    }

    #[test]
    fn generator_spec_mirrors_encoder() {
        let spec = unet_generator_spec(256, 1);
        spec.validate_chain().unwrap();
        assert_eq!(spec.rows.len(), 16);
        assert_eq!(spec.rows[7].output, Some(Shape3::new(1, 1, 512)));
        assert_eq!(spec.rows[15].output, Some(Shape3::new(256, 256, 3)));
    }
}

//! Minimal CPU neural-network kernels with explicit backward passes.
//!
//! Everything operates on `f64` tensors in `(batch, channel, height, width)`
//! layout. Layers cache whatever their backward pass needs during `forward`;
//! a network owns its layers and wires gradients by hand.

mod activations;
mod adam;
mod conv;
mod init;
mod loss;
mod pool;

pub use activations::{LeakyRelu, Relu, Sigmoid, Tanh};
pub use adam::Adam;
pub use conv::{Conv2d, ConvTranspose2d};
pub use init::WeightInit;
pub use loss::{
    bce_with_logits, l1_loss, sigmoid, softmax2_cross_entropy, softmax2_probs,
};
pub use pool::{max_pool, unpool, unpool_backward, MaxPool2d, PoolIndices};

use ndarray::{Array4, ArrayD};

/// Activation tensor: `(batch, channel, height, width)`.
pub type Tensor = Array4<f64>;

/// One trainable array together with its gradient and Adam state.
pub struct Param {
    pub name: String,
    pub w: ArrayD<f64>,
    pub g: ArrayD<f64>,
    pub m: ArrayD<f64>,
    pub v: ArrayD<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, w: ArrayD<f64>) -> Self {
        let g = ArrayD::zeros(w.raw_dim());
        let m = g.clone();
        let v = g.clone();
        Param {
            name: name.into(),
            w,
            g,
            m,
            v,
        }
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }
}

/// A differentiable layer. `forward` consumes its input so the layer can keep
/// it for the backward pass without cloning.
pub trait Layer: Send {
    fn forward(&mut self, x: Tensor) -> Tensor;
    fn backward(&mut self, grad: Tensor) -> Tensor;
    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
}

/// A plain chain of layers.
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Sequential { layers }
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: Tensor) -> Tensor {
        self.layers.iter_mut().fold(x, |x, l| l.forward(x))
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        self.layers
            .iter_mut()
            .rev()
            .fold(grad, |g, l| l.backward(g))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
    }
}

impl Trainable for Sequential {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        Layer::visit_params(self, f);
    }
}

/// Anything holding trainable parameters.
pub trait Trainable {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.w.len());
        n
    }

    /// Scales every gradient so the global L2 norm is at most `max_norm`.
    fn clip_grad_norm(&mut self, max_norm: f64) {
        let mut sq = 0.0;
        self.visit_params(&mut |p| sq += p.g.iter().map(|g| g * g).sum::<f64>());
        let norm = sq.sqrt();
        if norm > max_norm {
            let scale = max_norm / norm;
            self.visit_params(&mut |p| p.g.mapv_inplace(|g| g * scale));
        }
    }
}

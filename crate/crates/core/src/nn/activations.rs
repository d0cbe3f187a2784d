use super::{Layer, Tensor};

pub struct Relu {
    cached: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { cached: None }
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for Relu {
    fn forward(&mut self, mut x: Tensor) -> Tensor {
        x.mapv_inplace(|v| v.max(0.0));
        self.cached = Some(x.clone());
        x
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let y = self.cached.take().expect("forward before backward");
        grad.zip_mut_with(&y, |g, y| {
            if *y <= 0.0 {
                *g = 0.0;
            }
        });
        grad
    }
}

pub struct LeakyRelu {
    pub alpha: f64,
    cached: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Self {
        LeakyRelu {
            alpha,
            cached: None,
        }
    }
}

impl Layer for LeakyRelu {
    fn forward(&mut self, x: Tensor) -> Tensor {
        let y = x.mapv(|v| if v > 0.0 { v } else { self.alpha * v });
        self.cached = Some(x);
        y
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let x = self.cached.take().expect("forward before backward");
        grad.zip_mut_with(&x, |g, x| {
            if *x <= 0.0 {
                *g *= self.alpha;
            }
        });
        grad
    }
}

pub struct Sigmoid {
    cached_y: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Sigmoid { cached_y: None }
    }
}

impl Default for Sigmoid {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for Sigmoid {
    fn forward(&mut self, mut x: Tensor) -> Tensor {
        x.mapv_inplace(super::loss::sigmoid);
        self.cached_y = Some(x.clone());
        x
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let y = self.cached_y.take().expect("forward before backward");
        grad.zip_mut_with(&y, |g, y| *g *= y * (1.0 - y));
        grad
    }
}

pub struct Tanh {
    cached_y: Option<Tensor>,
}

impl Tanh {
    pub fn new() -> Self {
        Tanh { cached_y: None }
    }
}

impl Default for Tanh {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for Tanh {
    fn forward(&mut self, mut x: Tensor) -> Tensor {
        x.mapv_inplace(f64::tanh);
        self.cached_y = Some(x.clone());
        x
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let y = self.cached_y.take().expect("forward before backward");
        grad.zip_mut_with(&y, |g, y| *g *= 1.0 - y * y);
        grad
    }
}

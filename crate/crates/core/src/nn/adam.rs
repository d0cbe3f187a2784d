use super::{Param, Trainable};

/// Adam optimizer; first/second-moment state lives on each [`Param`].
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    pub fn step<T: Trainable + ?Sized>(&mut self, net: &mut T) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        net.visit_params(&mut |p: &mut Param| {
            let Param { w, g, m, v, .. } = p;
            let w = w.as_slice_mut().unwrap();
            let g = g.as_slice().unwrap();
            let m = m.as_slice_mut().unwrap();
            let v = v.as_slice_mut().unwrap();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        });
    }
}

use ndarray::{Array2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded weight initializer.
pub struct WeightInit {
    rng: ChaCha8Rng,
}

impl WeightInit {
    pub fn new(seed: u64) -> Self {
        WeightInit {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-style normal initialization: N(0, sqrt(2 / fan_in)).
    pub fn he<Sh: ShapeBuilder<Dim = ndarray::Ix2>>(&mut self, shape: Sh, fan_in: usize) -> Array2<f64> {
        let std = (2.0 / fan_in as f64).sqrt();
        Array2::from_shape_fn(shape, |_| self.normal() * std)
    }

    /// Standard-normal draw via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1: f64 = self.rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = self.rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

//! Seeded sampling. ChaCha8 is counter-based and produces the same stream on
//! every platform for a given seed and stream id.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{Matrix, Vector};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner, spare: None }
    }

    /// Independent generator on another stream of the same seed.
    pub fn derive(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// ±1 from the low bit of the stream.
    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn gaussian_vector(&mut self, n: usize) -> Vector {
        Vector::from_iterator(n, (0..n).map(|_| self.gaussian()))
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        // Fill row-major so the draw order is independent of storage layout.
        let vals: Vec<f64> = (0..rows * cols).map(|_| self.gaussian()).collect();
        Matrix::from_row_slice(rows, cols, &vals)
    }

    /// Uniform direction on the unit sphere scaled by `radius`.
    pub fn sphere_vector(&mut self, n: usize, radius: f64) -> Vector {
        loop {
            let v = self.gaussian_vector(n);
            let norm = v.norm();
            if norm > 1e-12 {
                return v * (radius / norm);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
            assert_eq!(a.rademacher(), b.rademacher());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = Rng::with_stream(1, 0);
        let mut b = Rng::with_stream(1, 1);
        let va: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(va, vb);
    }

    #[test]
    fn gaussian_moments() {
        let mut r = Rng::new(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn rademacher_is_balanced() {
        let mut r = Rng::new(9);
        let s: f64 = (0..100_000).map(|_| r.rademacher()).sum();
        assert!(s.abs() < 1500.0);
    }
}

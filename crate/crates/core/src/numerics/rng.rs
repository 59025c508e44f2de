use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Seeded, splittable random stream.
///
/// Backed by ChaCha8, a counter-based generator: `split(k)` selects an
/// independent stream `k` under the same seed, so components can own their
/// own deterministic streams derived from one run seed.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this generator's seed. Does not advance `self`.
    pub fn split(&self, stream: u64) -> Rng {
        // keep nested splits distinct from first-level ones
        let id = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(stream.wrapping_add(1));
        Self::with_stream(self.seed, id)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform<T: Scalar>(&mut self, lo: T, hi: T) -> Result<T> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidRange {
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        loop {
            let u: f64 = self.inner.random();
            let v = T::cast(lo.as_f64() + (hi.as_f64() - lo.as_f64()) * u);
            // rounding can land exactly on `hi`
            if v >= lo && v < hi {
                return Ok(v);
            }
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        items.shuffle(&mut self.inner);
    }

    pub fn choose<'a, E>(&mut self, items: &'a [E]) -> Option<&'a E> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.below(items.len())])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(
                a.uniform(0.0f64, 1.0).unwrap().to_bits(),
                b.uniform(0.0f64, 1.0).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn degenerate_range() {
        let mut r = Rng::new(1);
        assert!(matches!(r.uniform(1.0, 1.0), Err(Error::InvalidRange { .. })));
        assert!(r.uniform(2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_mean() {
        let mut r = Rng::new(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = r.uniform(0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&v));
            sum += v;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn split_streams_are_independent_and_reproducible() {
        let root = Rng::new(9);
        let mut a = root.split(1);
        let mut b = root.split(2);
        let mut a2 = Rng::new(9).split(1);
        let xa: Vec<f64> = (0..8).map(|_| a.unit()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.unit()).collect();
        let xa2: Vec<f64> = (0..8).map(|_| a2.unit()).collect();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
        assert_ne!(root.split(1).split(2).unit(), root.split(2).unit());
    }

    #[test]
    fn f32_draws_stay_in_range() {
        let mut r = Rng::new(3);
        for _ in 0..10_000 {
            let v: f32 = r.uniform(-1.0f32, 1.0).unwrap();
            assert!((-1.0..1.0).contains(&v));
        }
    }
}

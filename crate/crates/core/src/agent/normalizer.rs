use serde::{Deserialize, Serialize};

use crate::Real;

/// Running per-feature mean and variance (Welford), applied as
/// `(x - mean) / sqrt(var + eps)`. An empty normaliser is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer<T> {
    pub count: u64,
    pub mean: Vec<T>,
    pub m2: Vec<T>,
}

impl<T: Real> ObsNormalizer<T> {
    pub fn new(size: usize) -> Self {
        Self {
            count: 0,
            mean: vec![T::zero(); size],
            m2: vec![T::zero(); size],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn update(&mut self, x: &[T]) {
        assert_eq!(x.len(), self.mean.len(), "observation size");
        self.count += 1;
        let n = T::lit(self.count as f64);
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn variance(&self) -> Vec<T> {
        if self.count == 0 {
            return vec![T::one(); self.mean.len()];
        }
        let n = T::lit(self.count as f64);
        self.m2.iter().map(|&s| s / n).collect()
    }

    pub fn normalize(&self, x: &[T]) -> Vec<T> {
        if self.count == 0 {
            return x.to_vec();
        }
        let eps = T::lit(1e-8);
        x.iter()
            .zip(&self.mean)
            .zip(self.variance())
            .map(|((&v, &m), var)| (v - m) / (var + eps).sqrt())
            .collect()
    }
}

//! Streaming mean and variance with an order-fixed merge.

use serde::{Deserialize, Serialize};

/// Welford accumulator for one scalar channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Merges chunk results in the order given.
pub fn merge_ordered<'a>(parts: impl IntoIterator<Item = &'a Welford>) -> Welford {
    let mut acc = Welford::new();
    for p in parts {
        acc.merge(p);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0).collect();
        let mut w = Welford::new();
        xs.iter().for_each(|x| w.push(*x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_relative_eq!(w.mean(), mean, max_relative = 1e-13);
        assert_relative_eq!(w.variance(), var, max_relative = 1e-12);
    }

    #[test]
    fn merge_equals_single_stream() {
        let xs: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let mut whole = Welford::new();
        xs.iter().for_each(|x| whole.push(*x));
        let mut a = Welford::new();
        let mut b = Welford::new();
        xs[..123].iter().for_each(|x| a.push(*x));
        xs[123..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert_eq!(a.count(), whole.count());
        assert_relative_eq!(a.mean(), whole.mean(), max_relative = 1e-12);
        assert_relative_eq!(a.variance(), whole.variance(), max_relative = 1e-12);
    }

    #[test]
    fn empty_merge_is_identity() {
        let mut a = Welford::new();
        a.push(1.0);
        a.push(2.0);
        let before = a;
        a.merge(&Welford::new());
        assert_eq!(a, before);
    }
}

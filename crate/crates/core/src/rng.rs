//! Reproducible per-path Gaussian streams.
//!
//! Each path owns a ChaCha8 stream selected by `(seed, path_index)`. Normals
//! are produced by Box-Muller, so every step consumes a fixed number of
//! 32-bit words and the draws of step `i` start at word `i * stride(n)`. The
//! increments are therefore a pure function of `(seed, path, step)` and do not
//! depend on how paths are distributed over workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct PathNormals {
    rng: ChaCha8Rng,
    dim: usize,
}

impl PathNormals {
    pub fn new(seed: u64, path_index: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { rng, dim }
    }

    /// 32-bit words consumed per step.
    pub fn stride(dim: usize) -> u128 {
        // two u64 per Box-Muller pair
        4 * dim.div_ceil(2) as u128
    }

    /// Repositions the stream at the start of `step`.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * Self::stride(self.dim));
    }

    #[inline]
    fn uniform_open(&mut self) -> f64 {
        // (0, 1]
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    /// Fills `out` with independent `N(0, scale^2)` draws for the next step.
    #[inline]
    pub fn fill(&mut self, out: &mut [f64], scale: f64) {
        debug_assert_eq!(out.len(), self.dim);
        let mut i = 0;
        while i < self.dim {
            let u1 = self.uniform_open();
            let u2 = self.uniform_open();
            let r = (-2.0 * u1.ln()).sqrt() * scale;
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            out[i] = r * c;
            if i + 1 < self.dim {
                out[i + 1] = r * s;
            }
            i += 2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seek_matches_sequential_draws() {
        let mut a = PathNormals::new(7, 3, 3);
        let mut seq = vec![[0.0; 3]; 5];
        for s in seq.iter_mut() {
            a.fill(s, 1.0);
        }
        let mut b = PathNormals::new(7, 3, 3);
        let mut out = [0.0; 3];
        b.seek(4);
        b.fill(&mut out, 1.0);
        assert_eq!(out, seq[4]);
        b.seek(1);
        b.fill(&mut out, 1.0);
        assert_eq!(out, seq[1]);
    }

    #[test]
    fn streams_differ_between_paths() {
        let mut a = PathNormals::new(1, 0, 2);
        let mut b = PathNormals::new(1, 1, 2);
        let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
        a.fill(&mut x, 1.0);
        b.fill(&mut y, 1.0);
        assert_ne!(x, y);
    }

    #[test]
    fn moments_are_standard_normal() {
        let mut a = PathNormals::new(11, 0, 1);
        let n = 200_000;
        let mut x = [0.0];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            a.fill(&mut x, 1.0);
            s1 += x[0];
            s2 += x[0] * x[0];
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}

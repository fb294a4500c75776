//! Reproducible per-path noise.
//!
//! Every path owns a pair of ChaCha8 streams selected by
//! `(master_seed, lane, path_index)`: the key is expanded from the master
//! seed and the lane, the ChaCha stream id is the path index, and the block
//! counter is the position inside the path. Nothing is shared between paths,
//! so batches may be split across any number of workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lane {
    Increments,
    Bridge,
}

impl Lane {
    fn salt(self) -> u64 {
        match self {
            Lane::Increments => 0x6a09_e667_f3bc_c908,
            Lane::Bridge => 0xbb67_ae85_84ca_a73b,
        }
    }
}

/// SplitMix64 finaliser.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a master seed and a list of 64-bit words.
pub(crate) fn derive_seed(master_seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(master_seed), |acc, w| mix64(acc ^ mix64(*w)))
}

fn lane_key(master_seed: u64, lane: Lane) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = master_seed ^ lane.salt();
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Identifies the noise driving one path.
///
/// The increments are a pure function of `(master_seed, path_index)`;
/// `counter` offsets the starting position inside the stream (in 32-bit
/// words) and is normally zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    pub master_seed: u64,
    pub path_index: u64,
    pub counter: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            master_seed,
            path_index,
            counter: 0,
        }
    }

    fn rng(&self, lane: Lane) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(lane_key(self.master_seed, lane));
        rng.set_stream(self.path_index);
        rng.set_word_pos(u128::from(self.counter));
        rng
    }

    /// Sequential standard normal draws for this path.
    pub fn normals(&self) -> NormalSource {
        NormalSource {
            rng: self.rng(Lane::Increments),
        }
    }

    /// `n_steps` Brownian increments of dimension `dim_noise`, each
    /// coordinate `N(0, dt)`.
    pub fn gaussian_increments(&self, n_steps: usize, dim_noise: usize, dt: f64) -> Vec<Vec<f64>> {
        let mut src = self.normals();
        let scale = dt.sqrt();
        (0..n_steps)
            .map(|_| (0..dim_noise).map(|_| scale * src.next_normal()).collect())
            .collect()
    }

    /// Uniform draw in `[0, 1)` reserved for the barrier test of step
    /// `step → step+1`. Independent of how many other draws were made.
    pub fn bridge_uniform(&self, step: usize) -> f64 {
        let mut rng = self.rng(Lane::Bridge);
        rng.set_word_pos(u128::from(self.counter) + 2 * step as u128);
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Standard normal variates from a path's increment lane.
pub struct NormalSource {
    rng: ChaCha8Rng,
}

impl NormalSource {
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill(&mut self, out: &mut [f64], scale: f64) {
        for o in out {
            *o = scale * self.next_normal();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_are_deterministic() {
        let s = NoiseStream::new(42, 0);
        assert_eq!(
            s.gaussian_increments(3, 1, 0.25),
            s.gaussian_increments(3, 1, 0.25)
        );
    }

    #[test]
    fn paths_get_different_streams() {
        let a = NoiseStream::new(42, 0).gaussian_increments(3, 1, 0.25);
        let b = NoiseStream::new(42, 1).gaussian_increments(3, 1, 0.25);
        assert_ne!(a, b);
        let c = NoiseStream::new(43, 0).gaussian_increments(3, 1, 0.25);
        assert_ne!(a, c);
    }

    #[test]
    fn shapes() {
        let inc = NoiseStream::new(1, 9).gaussian_increments(5, 3, 0.01);
        assert_eq!(inc.len(), 5);
        assert!(inc.iter().all(|v| v.len() == 3));
    }

    #[test]
    fn increment_variance_matches_dt() {
        // 10^6 increments with dt = 0.005: the sample variance has relative
        // standard deviation sqrt(2 / 10^6) ≈ 0.14%, so 1% is > 7 sigma.
        let dt = 0.005;
        let inc = NoiseStream::new(42, 0).gaussian_increments(1_000_000, 1, dt);
        let n = inc.len() as f64;
        let mean = inc.iter().map(|v| v[0]).sum::<f64>() / n;
        let var = inc.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / dt - 1.0).abs() < 0.01, "variance {var}");
        assert!(mean.abs() < 5.0 * (dt / n).sqrt());
    }

    #[test]
    fn bridge_uniform_is_positional() {
        let s = NoiseStream::new(7, 3);
        let u5 = s.bridge_uniform(5);
        let _ = s.bridge_uniform(2);
        assert_eq!(s.bridge_uniform(5), u5);
        assert_ne!(s.bridge_uniform(4), u5);
        for k in 0..1000 {
            let u = s.bridge_uniform(k);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn bridge_lane_is_independent_of_increment_lane() {
        let s = NoiseStream::new(7, 3);
        let mut r = s.rng(Lane::Increments);
        let first = (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        assert_ne!(first, s.bridge_uniform(0));
    }
}

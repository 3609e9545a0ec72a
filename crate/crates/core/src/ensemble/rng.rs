//! Brownian increments keyed on `(seed, path, step)`.
//!
//! Each path owns one ChaCha8 stream (`stream = path_id`) under a key derived
//! from the seed. Step `k` reads words `4k .. 4k+4` of that stream, i.e. two
//! `u64`, and turns them into one normal deviate by Box–Muller. The fixed
//! consumption per step makes random access ([`brownian_increment`]) and
//! sequential reading ([`PathNoise`]) produce identical values.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const WORDS_PER_STEP: u128 = 4;

fn standard_normal(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `ΔB` for the given path and step: a `N(0, dt)` deviate that depends only on
/// its arguments.
pub fn brownian_increment(seed: u64, path_id: u64, step: u64, dt: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    let a = rng.next_u64();
    let b = rng.next_u64();
    dt.sqrt() * standard_normal(a, b)
}

/// Sequential increments of one path, starting at step 0.
#[derive(Debug, Clone)]
pub struct PathNoise {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl PathNoise {
    pub fn new(seed: u64, path_id: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id);
        Self { rng, sqrt_dt: dt.sqrt() }
    }

    #[inline]
    pub fn next_increment(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        self.sqrt_dt * standard_normal(a, b)
    }
}

//! Counter-addressable Gaussian noise.
//!
//! Every simulated pulse draws its noise from `P` ChaCha8 streams. The draw
//! for pulse `i` on stream `k` sits at a fixed word offset (`4·i`) of the
//! stream keyed by `(seed, domain, k)`, so any contiguous range of pulses can
//! be generated independently and the result never depends on how the index
//! range was partitioned.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// 32-bit words consumed per pulse on each stream (two `u64`).
const WORDS_PER_PULSE: u128 = 4;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Noise domains keep independent experiments on disjoint streams.
pub mod domain {
    pub const PROTOCOL: u32 = 1;
    pub const CHARACTERIZATION: u32 = 2;
}

/// `P` streams, each yielding a pair of independent standard normals per pulse.
#[derive(Clone)]
pub struct NormalStreams<const P: usize> {
    streams: [ChaCha8Rng; P],
}

impl<const P: usize> NormalStreams<P> {
    /// Positions the streams at pulse `start_index`.
    pub fn new(seed: u64, domain: u32, start_index: u64) -> Self {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let streams = std::array::from_fn(|k| {
            let mut s = base.clone();
            s.set_stream((u64::from(domain) << 32) | k as u64);
            s.set_word_pos(u128::from(start_index) * WORDS_PER_PULSE);
            s
        });
        Self { streams }
    }

    /// Draws this pulse's normals and advances to the next pulse.
    #[inline]
    pub fn next_pulse(&mut self) -> [[f64; 2]; P] {
        std::array::from_fn(|k| {
            let s = &mut self.streams[k];
            box_muller(s.next_u64(), s.next_u64())
        })
    }
}

/// Maps two uniform words to two independent standard normals.
#[inline]
fn box_muller(a: u64, b: u64) -> [f64; 2] {
    // u1 in (0, 1] keeps the logarithm finite.
    let u1 = ((a >> 11) as f64 + 1.0) * INV_2_53;
    let u2 = (b >> 11) as f64 * INV_2_53;
    let radius = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    [radius * c, radius * s]
}

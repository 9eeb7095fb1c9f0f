//! Deterministic random streams.
//!
//! Every stochastic consumer in a run (fading, each agent's exploration,
//! replay sampling, parameter init) draws from its own named substream
//! derived from one master seed. Streams are independent ChaCha8 instances,
//! so consuming one never perturbs another: enabling the attacker does not
//! shift the fading realization, and the same master seed reproduces a run
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Derives named substreams from a master seed.
#[derive(Debug, Clone, Copy)]
pub struct StreamSeeder {
    master: u64,
}

impl StreamSeeder {
    pub fn new(master: u64) -> Self {
        StreamSeeder { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Builds the substream for `name`. Calling twice with the same name
    /// returns an identical generator; callers own exactly one instance
    /// per name.
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        // FNV-1a over the name, then splitmix over (master, name hash) to
        // fill the 256-bit seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in name.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut state = self.master ^ h.rotate_left(17);
        for chunk in seed.chunks_mut(8) {
            state = splitmix64(&mut state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard-normal sampler (Box-Muller). Generates pairs and caches the
/// spare so the stream is consumed deterministically.
#[derive(Debug, Clone)]
pub struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn new(rng: ChaCha8Rng) -> Self {
        NormalSource { rng, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // Guard against ln(0).
        let u1: f64 = loop {
            let u = self.rng.gen::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

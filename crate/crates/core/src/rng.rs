//! Counter-based deterministic random streams.
//!
//! Every stochastic subsystem draws from its own stream keyed by
//! `(seed, purpose, id...)`. Draw `i` of a stream is `mix(key + (i+1)·γ)`,
//! i.e. a SplitMix64 sequence started at the stream key, so results depend
//! only on the key and the draw index and never on how other streams were
//! consumed.

use rand::rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Placement = 1,
    Mobility = 2,
    AppPhase = 3,
    Selection = 4,
    Reselection = 5,
    Shadowing = 6,
    Fading = 7,
    Test = 99,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Stream for one `(purpose, ue)` pair.
    pub fn new(seed: u64, purpose: Purpose, id: u64) -> Self {
        Self::keyed(seed, purpose, &[id])
    }

    /// Stream keyed by an arbitrary tuple of ids, e.g. `(tx, rx, subframe)`.
    pub fn keyed(seed: u64, purpose: Purpose, ids: &[u64]) -> Self {
        let mut key = mix(seed ^ GOLDEN);
        key = mix(key ^ (purpose as u64).wrapping_mul(GOLDEN));
        for &id in ids {
            key = mix(key.wrapping_add(GOLDEN) ^ id);
        }
        RngStream { key, counter: 0 }
    }

    /// Number of draws taken so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}

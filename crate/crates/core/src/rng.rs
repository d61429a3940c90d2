//! Counter-based random streams.
//!
//! Every trajectory draws from its own ChaCha stream selected by a
//! `(seed, stream)` pair. Streams are independent keystreams of the same
//! key, so a sample's draws never depend on which worker produced it or in
//! what order samples ran.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream roles, mixed into the stream id so the bath draw and the Wiener
/// path of the same sample index never share a keystream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamRole {
    InitialData = 0,
    Wiener = 1,
    Auxiliary = 2,
    Model = 3,
}

#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha12Rng,
    seed: u64,
    stream: u64,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            seed,
            stream,
        }
    }

    /// Stream for sample `index` acting in `role`.
    pub fn for_sample(seed: u64, index: u64, role: StreamRole) -> Self {
        Self::new(seed, (index << 2) | role as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

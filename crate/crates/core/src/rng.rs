//! Counter-based random streams.
//!
//! A draw is a pure function of `(seed, label, index)`, so any stream can be
//! replayed from any position without carrying generator state, and streams
//! with different labels never share a sequence.

/// Stream keyed by a seed and a label; draws are addressed by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterStream {
    key: u64,
}

impl CounterStream {
    pub fn new(seed: u64, label: &str) -> Self {
        Self {
            key: mix64(seed ^ mix64(fnv1a64(label.as_bytes()))),
        }
    }

    pub fn u64_at(&self, index: u64) -> u64 {
        let x = self.key ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        mix64(mix64(x).wrapping_add(self.key))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn uniform_at(&self, index: u64) -> f64 {
        (self.u64_at(index) >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// The two independent streams a simulation consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStreams {
    /// Indexed by global slot number.
    pub channel: CounterStream,
    /// Indexed by frame number.
    pub packet: CounterStream,
}

impl RandomStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            channel: CounterStream::new(seed, "channel"),
            packet: CounterStream::new(seed, "packet"),
        }
    }
}

/// Derives a child seed, e.g. one per sweep repetition.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    CounterStream::new(seed, label).u64_at(index)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Reproducible per-path random streams.
//!
//! Every path gets its own ChaCha8 stream: the 256-bit key is derived from
//! the root seed, the experiment tag and a lane (what the stream drives),
//! and the 64-bit ChaCha stream id is the path index. Paths can therefore
//! be simulated in any order, on any thread, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for the sampled paths.
pub type PathRng = ChaCha8Rng;

/// What a derived stream is used for. Separate lanes keep e.g. the Wiener
/// path of a sample identical when only the jump stream is re-drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    Wiener,
    Jumps,
    Remainder,
    Bridge,
    /// Anything not covered above, numbered by the caller.
    Aux(u32),
}

impl Lane {
    fn code(self) -> u64 {
        match self {
            Lane::Wiener => 1,
            Lane::Jumps => 2,
            Lane::Remainder => 3,
            Lane::Bridge => 4,
            Lane::Aux(k) => 0x100 + u64::from(k),
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes, used to fold tags into seeds and to fingerprint configs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Root of all streams of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRoot {
    root: u64,
    tag_hash: u64,
}

impl StreamRoot {
    pub fn new(root: u64, tag: &str) -> Self {
        Self {
            root,
            tag_hash: fnv1a(tag.as_bytes()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.root
    }

    /// Same root seed, different experiment tag.
    pub fn retag(&self, tag: &str) -> Self {
        Self::new(self.root, tag)
    }

    /// Stream for `lane` of path `index`.
    pub fn stream(&self, index: u64, lane: Lane) -> PathRng {
        let mut key = [0u8; 32];
        let mut state = mix64(self.root ^ mix64(self.tag_hash ^ mix64(lane.code())));
        for chunk in key.chunks_exact_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// Stable identifier of the (path, lane) stream, recorded in runs.
    pub fn stream_id(&self, index: u64, lane: Lane) -> u64 {
        mix64(self.root ^ mix64(self.tag_hash ^ mix64(lane.code() ^ mix64(index))))
    }
}

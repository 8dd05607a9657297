//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha12 stream whose key is
//! derived from a master seed and a path of integers (for example
//! `[BOOTSTRAP, replicate]`). Streams for different paths are independent and
//! can be created in any order on any thread, so serial and parallel runs
//! produce identical draws.
//!
//! Changing the derivation below changes every seeded result in the crate;
//! bump [`GENERATOR_VERSION`] when doing so.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Identifies the generator and key-derivation scheme. Reported alongside
/// seeded results.
pub const GENERATOR_VERSION: &str = "chacha12-splitmix64-v1";

pub type StreamRng = ChaCha12Rng;

/// Domain tags used as the first path element so that unrelated consumers of
/// the same master seed never share a stream.
pub mod tag {
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const COVARIANCE: u64 = 0x636f_7661;
    pub const INTERACTION: u64 = 0x696e_7472;
    pub const GATE: u64 = 0x6761_7465;
    pub const REPLICATE: u64 = 0x7265_706c;
    pub const UNITS: u64 = 0x756e_6974;
    pub const INTERACTION_UNITS: u64 = 0x6761_6d6d;
    pub const TRUTH: u64 = 0x7472_7574;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a path into a 64-bit key.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(GOLDEN)))
    })
}

/// Opens the stream at `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(master, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_stream() {
        let a: Vec<u64> = stream(7, &[1, 2]).random_iter().take(4).collect();
        let b: Vec<u64> = stream(7, &[1, 2]).random_iter().take(4).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_diverge() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[2, 1]).random();
        let c: u64 = stream(8, &[1, 2]).random();
        let d: u64 = stream(7, &[1]).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn derivation_is_pinned() {
        // Reference SplitMix64: the first output from state 0.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(derive_seed(0, &[]), splitmix64(0));
        let first: u64 = stream(1, &[tag::BOOTSTRAP, 0]).random();
        let again: u64 = stream(1, &[tag::BOOTSTRAP, 0]).random();
        assert_eq!(first, again);
    }
}

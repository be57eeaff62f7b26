//! Seed-derived random streams. All randomness flows from one 64-bit seed
//! through named sub-streams so results never depend on worker scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, domain, a, b)`. Training uses
/// `(seed, domain, iteration, sample-index)`; other consumers pick their own
/// domain tag.
pub fn derive_rng(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha12Rng {
    let mut s = mix(seed ^ 0xA076_1D64_78BD_642F);
    s = mix(s ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    s = mix(s ^ a.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(1));
    s = mix(s ^ b.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7).wrapping_add(1));
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix(s.wrapping_add(i as u64 + 1)).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Domain tag for within-iteration rollout sampling.
pub const DOMAIN_ROLLOUT: u64 = 1;
/// Domain tag for evaluation initial-position draws.
pub const DOMAIN_EVAL: u64 = 2;

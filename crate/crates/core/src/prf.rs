//! Keyed mixing and reproducible random streams.
//!
//! Everything here is bit-exact: other implementations following the same
//! recipe reproduce the same positions, keys and random streams.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

/// The generator behind every random stream in the toolkit.
pub type Rng = Xoshiro256StarStar;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 output finalizer.
#[inline]
pub fn splitmix_finalize(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(MIX1);
    z ^= z >> 27;
    z = z.wrapping_mul(MIX2);
    z ^ (z >> 31)
}

/// Keyed 64-bit mixing function of two words.
///
/// `F(F(k ^ rotl(a,17) ^ G*(a+1)) ^ rotl(b,31) ^ M*(b+1))` with `F` the
/// SplitMix64 finalizer. Statistical quality only; not a cryptographic PRF.
#[inline]
pub fn prf64(key: u64, a: u64, b: u64) -> u64 {
    let inner =
        splitmix_finalize(key ^ a.rotate_left(17) ^ GOLDEN.wrapping_mul(a.wrapping_add(1)));
    splitmix_finalize(inner ^ b.rotate_left(31) ^ MIX1.wrapping_mul(b.wrapping_add(1)))
}

/// Maps a 64-bit word to `[0, 1)` using its top 53 bits.
#[inline]
pub fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Folds a label path into a seed: `h = F(master)`, then `h = F(h ^ label)`.
pub fn derive_seed(master_seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix_finalize(master_seed), |h, &l| splitmix_finalize(h ^ l))
}

/// Random stream for a labelled task.
///
/// The xoshiro256** state is filled from the derived seed with the
/// SplitMix64 sequence, so the all-zero state cannot occur.
pub fn derive_rng(master_seed: u64, labels: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master_seed, labels))
}

/// Stable numeric label for a string tag, for use in label paths.
pub fn label(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

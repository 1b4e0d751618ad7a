use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha stream `index` under `seed`. Parallel loops key each
/// iteration by its index so results do not depend on scheduling.
pub(crate) fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed for an independent purpose `tag` under a user seed (SplitMix64 mix).
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) type SearchRng = ChaCha8Rng;

/// Mixes a base seed with a stream tag and index (splitmix64 finaliser) so
/// sub-searches get independent, reproducible streams.
pub(crate) fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_from(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) mod streams {
    pub const SPLIT: u64 = 1;
    pub const SINGLE: u64 = 2;
    pub const CANDIDATES: u64 = 3;
    pub const MEDOIDS: u64 = 4;
    pub const SEEDS: u64 = 5;
    pub const STUDY: u64 = 6;
}

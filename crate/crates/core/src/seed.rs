//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a ChaCha8 generator seeded
//! through [`derive_seed`], so a single master seed fans out into
//! independent, reproducible streams. The stream layout is:
//!
//! * stream 0 — world ensemble generation
//! * stream 1 + r — clustering/k-means for repeat `r`
//! * within the ensemble, world `i` uses `derive_seed(ensemble_seed, i)`
//! * within k-means, restart `r` uses `derive_seed(kmeans_seed, r)`
//!
//! Adding repeats therefore never perturbs the sampled worlds, and worlds
//! can be generated in parallel without changing the result.

/// SplitMix64 finalizer over `master` offset by a Weyl increment per stream.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add((stream.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Seeded inputs shared by the benchmarks.

use plaquekit::raster::{BinaryMask, GrayImage};
use plaquekit::synth::{confluent_discs, render_plate, render_probability, PlateSpec, SyntheticPlate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random mask with the given foreground density.
pub fn random_mask(side: usize, density: f64, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BinaryMask::from_fn(side, side, |_, _| rng.gen_bool(density))
}

/// Square probability map of a well whose plaques cover `coverage` of it.
pub fn well_probability(side: usize, coverage: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discs = confluent_discs(side, coverage, (7.0, 12.0), &mut rng);
    render_probability(side, side, &discs, 0.05, 0.95)
}

/// The default 3×4 synthetic plate.
pub fn plate(seed: u64) -> SyntheticPlate {
    render_plate(&PlateSpec {
        seed,
        ..Default::default()
    })
    .expect("default spec renders")
}

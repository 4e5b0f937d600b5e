//! Seeded workloads shared by the benchmarks.

use mobmine::synth::{hour_modes, random_trace, separated_blobs};
use mobmine::{encode_hour_cyclic, LatLon, Point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `k` tight blobs of `per` points each around Beijing.
pub fn blob_points(k: usize, per: usize) -> Vec<LatLon> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    separated_blobs(
        &mut rng,
        LatLon::new(39.99993, 116.32730),
        k,
        40.0,
        900.0,
        (per, per + 1),
    )
    .points
}

/// A random dwell-and-move trace of `n` fixes.
pub fn trace(n: usize) -> Vec<Point> {
    random_trace(&mut ChaCha8Rng::seed_from_u64(2), "bench", n)
}

/// Cyclic features of trips drawn around three start hours.
pub fn hour_features(per_mode: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    hour_modes(&mut rng, &[7.0, 13.0, 22.0], 0.3, per_mode)
        .into_iter()
        .map(|(h, _)| encode_hour_cyclic(h).expect("hour in range").as_array())
        .collect()
}

//! Independent reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tonguenet::annotation::{annotate, revert_to_contour, SpacingKind, SpacingPolicy};
use tonguenet::dataset::{synth_frame, SynthConfig};
use tonguenet::geometry::{resample_by_arclength, Point2};
use tonguenet::seed::stream_seed;
use tonguenet::training::percentile;

/// Plain double loop: mean over both point sets of the distance to the
/// nearest point of the other set.
pub fn brute_msd(a: &[Point2], b: &[Point2]) -> f64 {
    let nearest = |p: &Point2, set: &[Point2]| {
        set.iter()
            .map(|q| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let sa: f64 = a.iter().map(|p| nearest(p, b)).sum();
    let sb: f64 = b.iter().map(|p| nearest(p, a)).sum();
    (sa + sb) / (a.len() + b.len()) as f64
}

/// Random walk with 1..=max_len points in a 128x128 box.
pub fn random_polyline(rng: &mut impl Rng, max_len: usize) -> Vec<Point2> {
    let n = rng.random_range(1..=max_len);
    let mut p = Point2::new(rng.random_range(0.0..128.0), rng.random_range(0.0..128.0));
    (0..n)
        .map(|_| {
            p = Point2::new(p.x + rng.random_range(-4.0..4.0), p.y + rng.random_range(-4.0..4.0));
            p
        })
        .collect()
}

pub struct MsdOracleResult {
    pub max_rel_err: f64,
    pub symmetric: bool,
    pub identity_zero: bool,
}

pub fn msd_against_oracle(pairs: usize, seed: u64) -> MsdOracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MsdOracleResult { max_rel_err: 0.0, symmetric: true, identity_zero: true };
    for _ in 0..pairs {
        let a = random_polyline(&mut rng, 200);
        let b = random_polyline(&mut rng, 200);
        let fast = tonguenet::geometry::msd(&a, &b).unwrap();
        let slow = brute_msd(&a, &b);
        out.max_rel_err = out.max_rel_err.max((fast - slow).abs() / slow.abs().max(1e-300));
        out.symmetric &= fast == tonguenet::geometry::msd(&b, &a).unwrap();
        out.identity_zero &= tonguenet::geometry::msd(&a, &a).unwrap() == 0.0;
    }
    out
}

/// MSD between the clean synthetic contour and the curve reverted from its
/// landmarks, both resampled to 100 points, for `count` 128x128 frames.
pub fn spline_round_trip(spacing: SpacingKind, n_points: usize, count: usize, seed: u64) -> Vec<f64> {
    let cfg = SynthConfig { spacing, n_points, ..SynthConfig::default() };
    (0..count as u64)
        .map(|i| {
            let frame = synth_frame(&cfg, stream_seed(seed, i, 0)).unwrap();
            let policy = match spacing {
                SpacingKind::Equal => SpacingPolicy::equal(n_points),
                SpacingKind::Random => SpacingPolicy::random(n_points, cfg.width, stream_seed(seed, i, 1)),
            };
            let l = annotate(&frame.contour, &policy, cfg.width).unwrap();
            let a = resample_by_arclength(&frame.contour, 100).unwrap();
            let b = resample_by_arclength(&revert_to_contour(&l).unwrap(), 100).unwrap();
            brute_msd(a.points(), b.points())
        })
        .collect()
}

pub fn p95(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 95.0)
}

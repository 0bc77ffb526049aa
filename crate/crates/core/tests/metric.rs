#[path = "support/oracles.rs"]
mod oracles;

use oracles::*;
use proptest::prelude::*;
use tonguenet::geometry::{msd, Point2};

#[test]
fn msd_matches_brute_force_on_random_pairs() {
    let r = msd_against_oracle(1000, 42);
    assert!(r.max_rel_err <= 1e-9, "max relative error {:e}", r.max_rel_err);
    assert!(r.symmetric);
    assert!(r.identity_zero);
}

#[test]
fn msd_of_parallel_lines_is_their_offset() {
    let a: Vec<Point2> = (0..50).map(|i| Point2::new(i as f64, 10.0)).collect();
    let b: Vec<Point2> = (0..50).map(|i| Point2::new(i as f64, 13.0)).collect();
    assert!((msd(&a, &b).unwrap() - 3.0).abs() < 1e-12);
    assert!(msd(&a, &[]).is_err());
}

fn points() -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..60)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
}

proptest! {
    #[test]
    fn msd_agrees_with_oracle(a in points(), b in points()) {
        let fast = msd(&a, &b).unwrap();
        let slow = brute_msd(&a, &b);
        prop_assert!((fast - slow).abs() <= 1e-9 * slow.max(1e-12));
        prop_assert_eq!(fast, msd(&b, &a).unwrap());
        prop_assert!(fast >= 0.0);
    }

    #[test]
    fn msd_is_translation_invariant(a in points(), b in points(), dx in -20.0..20.0f64, dy in -20.0..20.0f64) {
        let shift = |v: &[Point2]| v.iter().map(|p| Point2::new(p.x + dx, p.y + dy)).collect::<Vec<_>>();
        let d0 = msd(&a, &b).unwrap();
        let d1 = msd(&shift(&a), &shift(&b)).unwrap();
        prop_assert!((d0 - d1).abs() < 1e-9 * d0.max(1.0));
    }
}

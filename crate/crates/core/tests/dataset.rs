use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tonguenet::dataset::*;
use tonguenet::geometry::{LandmarkSet, Point2};
use tonguenet::Error;

fn marker_sample(at: Point2) -> Sample {
    let mut img = ImageGray::zeros(128, 128);
    let (cx, cy) = (at.x.round() as i64, at.y.round() as i64);
    for y in cy - 2..=cy + 2 {
        for x in cx - 2..=cx + 2 {
            img.set(x as usize, y as usize, 1.0);
        }
    }
    Sample::new(img, LandmarkSet::new(vec![at]).unwrap(), "m").unwrap()
}

#[test]
fn marker_follows_its_landmark() {
    let cfg = AugmentConfig::default();
    let mut moved = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let at = Point2::new(30.0 + (seed % 7) as f64 * 10.0, 40.0 + (seed % 5) as f64 * 10.0);
        let s = marker_sample(at);
        let out = augment(&s, &cfg, &mut rng);
        let p = out.landmarks.points()[0];
        moved += (p != at) as usize;
        let v = out.image.sample_bilinear(p.x, p.y);
        assert!(v >= 0.5, "seed {seed}: intensity {v} at {p:?}");
    }
    assert!(moved >= 90, "only {moved} of 100 draws were applied");
}

#[test]
fn augmentation_keeps_landmarks_in_frame() {
    let cfg = AugmentConfig::default();
    let synth = SynthConfig::default();
    for seed in 0..200 {
        let s = synth_generate(&synth, seed).unwrap();
        let out = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        assert!(out.landmarks.within(128, 128));
        assert!(out.landmarks.is_sorted_by_x());
    }
}

#[test]
fn rotation_draws_cover_the_range() {
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let thetas: Vec<f64> = (0..10_000).map(|_| cfg.draw(&mut rng).rot_deg).collect();
    let lo = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo < -20.0 && hi > 20.0, "range [{lo}, {hi}]");
    assert!(lo >= -25.0 && hi <= 25.0);
}

#[test]
fn flip_only_mirrors_landmarks() {
    let s = marker_sample(Point2::new(10.0, 20.0));
    let cfg = AugmentConfig { hflip_prob: 1.0, ..AugmentConfig::identity() };
    let out = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(out.landmarks.points()[0], Point2::new(117.0, 20.0));
    for y in 0..128 {
        assert_eq!(out.image.get(117, y), s.image.get(10, y));
    }
}

#[test]
fn paper_split_sizes() {
    let (a, b, c) = split_dataset((0..2000).collect(), (0.9, 0.05, 0.05), 1).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (1800, 100, 100));
    let (a, b, c) = split_dataset((0..20).collect(), (0.9, 0.05, 0.05), 1).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (18, 1, 1));
    assert!(matches!(split_dataset((0..20).collect::<Vec<i32>>(), (0.9, 0.05, 0.1), 1), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_disjoint_and_exhaustive(n in 20usize..500, seed: u64) {
        let (a, b, c) = split_dataset((0..n).collect(), (0.9, 0.05, 0.05), seed).unwrap();
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn synthetic_intensities_are_clamped(
        seed: u64,
        speckle in 0.0..3.0f64,
        noise in 0.0..1.0f64,
        sigma in 0.5..8.0f64,
    ) {
        let cfg = SynthConfig {
            width: 32,
            height: 32,
            speckle_scale: speckle,
            noise_sigma: noise,
            band_sigma: sigma,
            n_points: 5,
            ..SynthConfig::default()
        };
        let s = synth_generate(&cfg, seed).unwrap();
        prop_assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn normalize_inverts(seed in 0u64..1000) {
        let s = synth_generate(&SynthConfig { width: 64, height: 48, n_points: 6, ..SynthConfig::default() }, seed).unwrap();
        let (_, t) = normalize(&s).unwrap();
        prop_assert!(t.iter().all(|v| (0.0..=1.0).contains(v)));
        let back = denormalize(&t, 64, 48).unwrap();
        for (p, q) in back.points().iter().zip(s.landmarks.points()) {
            prop_assert!(p.dist(*q) < 1e-6);
        }
    }
}

#[test]
fn normalize_corners_and_centre() {
    let pts = vec![Point2::new(0.0, 0.0), Point2::new(63.5, 63.5), Point2::new(127.0, 127.0)];
    let s = Sample::new(ImageGray::zeros(128, 128), LandmarkSet::new(pts).unwrap(), "c").unwrap();
    assert_eq!(normalize(&s).unwrap().1, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
    let bad = LandmarkSet::new(vec![Point2::new(128.0, 0.0)]).unwrap();
    assert!(matches!(Sample::new(ImageGray::zeros(128, 128), bad, "b"), Err(Error::Contract(_))));
}

#[test]
fn dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    let samples = synth_dataset(&cfg, 10, 4).unwrap();
    let meta = DatasetMeta {
        width: 128,
        height: 128,
        n_points: 10,
        seed: 4,
        generator_version: GENERATOR_VERSION.into(),
    };
    save_dataset(dir.path(), &samples, &meta).unwrap();
    assert_eq!(load_meta(dir.path()).unwrap(), meta);
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded.len(), 10);
    for (a, b) in samples.iter().zip(&loaded) {
        assert_eq!(a.id, b.id);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
        }
        for (p, q) in a.landmarks.points().iter().zip(b.landmarks.points()) {
            assert!(p.dist(*q) < 1e-4);
        }
    }
}

#[test]
fn orphans_and_bad_headers_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let samples = synth_dataset(&SynthConfig { width: 32, height: 32, n_points: 5, ..SynthConfig::default() }, 3, 0).unwrap();
    let meta = DatasetMeta { width: 32, height: 32, n_points: 5, seed: 0, generator_version: GENERATOR_VERSION.into() };
    save_dataset(dir.path(), &samples, &meta).unwrap();

    let img = dir.path().join("images").join("00001.pgm");
    std::fs::remove_file(&img).unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("00001"), "{err}");

    std::fs::write(&img, b"P5\n32 32\n65535\n").unwrap();
    assert!(matches!(read_pgm(&img), Err(Error::UnsupportedFormat { .. })));

    std::fs::write(dir.path().join("images").join("extra.pgm"), b"").unwrap();
    write_pgm(&img, &samples[1].image).unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("extra"), "{err}");
}

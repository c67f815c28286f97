use labloop_analysis::ingest::{normalize_min_max, write_cube, write_curve, write_image_raw, SpectralUnit};
use labloop_analysis::synthetic::{render_blobs, rng};
use labloop_analysis::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn brute_force_nn(points: &[[f64; 2]]) -> Vec<(f64, usize)> {
    (0..points.len())
        .map(|i| {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..points.len() {
                if i == j {
                    continue;
                }
                let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
                if d < best.0 || (d == best.0 && j < best.1) {
                    best = (d, j);
                }
            }
            best
        })
        .collect()
}

fn mixture(seed: u64, n: usize, dim: usize, k: usize) -> Vec<f64> {
    let mut r = rng(seed);
    let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
    let mut out = Vec::with_capacity(n * dim);
    for i in 0..n {
        let c = &centres[i % k];
        let spread = Normal::new(0.0, r.random_range(0.1..1.5)).unwrap();
        for d in 0..dim {
            out.push(c[d] + spread.sample(&mut r));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn gmm_invariants(seed in 0u64..10_000, dim in 1usize..4, k in 1usize..4, per in 20usize..80) {
        let samples = mixture(seed, per * k, dim, k);
        let fit = match fit_gmm(&samples, dim, k, seed) {
            Ok(f) => f,
            Err(AnalysisError::DegenerateComponent { .. }) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let wsum: f64 = fit.weights.iter().sum();
        prop_assert!((wsum - 1.0).abs() < 1e-9);
        prop_assert!(fit.weights.iter().all(|w| *w >= 0.0));
        prop_assert!(fit.variances.iter().flatten().all(|v| *v > 0.0));
        for pair in fit.log_likelihood_trace.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-9, "{} -> {}", pair[0], pair[1]);
        }
        for row in fit.responsibilities(&samples).chunks_exact(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(&fit, &fit_gmm(&samples, dim, k, seed).unwrap());
    }

    #[test]
    fn neighbor_stats_matches_brute_force(seed in 0u64..10_000, n in 2usize..400, clustered in any::<bool>()) {
        let mut r = rng(seed);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| if clustered {
                [r.random_range(0.0..3.0_f64).round(), r.random_range(0.0..50.0)]
            } else {
                [r.random_range(0.0..200.0), r.random_range(0.0..80.0)]
            })
            .collect();
        let stats = neighbor_stats_of(&pts, None).unwrap();
        let oracle = brute_force_nn(&pts);
        for (i, (d, _)) in oracle.iter().enumerate() {
            prop_assert!((stats.nn_distances[i] - d).abs() <= 1e-9);
        }
        prop_assert_eq!(stats.histogram.total(), n);
    }

    #[test]
    fn nmf_factors_stay_non_negative(seed in 0u64..10_000, k in 1usize..5) {
        let mut r = rng(seed);
        let (nx, ny, nb) = (6, 5, 12);
        let values: Vec<f64> = (0..nx * ny * nb).map(|_| r.random_range(0.0..2.0)).collect();
        let wl = (0..nb).map(|b| b as f64).collect();
        let cube = HyperCube::new(nx, ny, wl, SpectralUnit::ElectronVolt, values).unwrap();
        let mut ok = true;
        let res = unmix_observed(&cube, k, seed, |_, w, h| ok &= w.iter().chain(h).all(|v| *v >= 0.0)).unwrap();
        prop_assert!(ok);
        for pair in res.reconstruction_error_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10);
        }
        prop_assert!(res.endmembers.iter().flatten().chain(res.abundances.iter().flatten()).all(|v| *v >= 0.0));
    }

    #[test]
    fn detection_is_translation_equivariant(seed in 0u64..10_000, dx in 0i32..8, dy in 0i32..8) {
        let mut r = rng(seed);
        let (w, h) = (96usize, 80usize);
        let blobs: Vec<(f64, f64, f64)> = (0..12)
            .map(|i| (14.0 + (i % 4) as f64 * 18.0 + r.random_range(-2.0..2.0), 14.0 + (i / 4) as f64 * 18.0 + r.random_range(-2.0..2.0), 1.0))
            .collect();
        let shifted: Vec<(f64, f64, f64)> = blobs.iter().map(|b| (b.0 + dx as f64, b.1 + dy as f64, b.2)).collect();
        let a = ImageGrid::from_raw(w, h, render_blobs(w, h, &blobs, 2.0), None).unwrap();
        let b = ImageGrid::from_raw(w, h, render_blobs(w, h, &shifted, 2.0), None).unwrap();
        let da = detect_atoms(&a, &DetectionParams::default()).unwrap();
        let db = detect_atoms(&b, &DetectionParams::default()).unwrap();
        let margin = 16.0;
        let inside = |p: &[f64; 2]| p[0] >= margin && p[1] >= margin && p[0] < w as f64 - margin && p[1] < h as f64 - margin;
        for p in da.positions.iter().filter(|p| inside(p) && inside(&[p[0] + dx as f64, p[1] + dy as f64])) {
            let q = [p[0] + dx as f64, p[1] + dy as f64];
            let hit = db.positions.iter().any(|s| (s[0] - q[0]).abs() < 1e-6 && (s[1] - q[1]).abs() < 1e-6);
            prop_assert!(hit, "missing shifted detection for {p:?}");
        }
    }

    #[test]
    fn normalisation_is_idempotent(values in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let once = normalize_min_max(values);
        prop_assert!(once.iter().all(|v| (0.0..=1.0).contains(v)));
        let twice = normalize_min_max(once.clone());
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn curve_round_trips_through_csv(ys in prop::collection::vec(-1e3f64..1e3, 2..60), with_sigma in any::<bool>()) {
        let x: Vec<f64> = (0..ys.len()).map(|i| 100.0 + i as f64 * 0.37).collect();
        let sigma = with_sigma.then(|| vec![0.25; ys.len()]);
        let c = Curve1D::new(x, ys, sigma, "nm", "counts").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_curve(&path, &c).unwrap();
        prop_assert_eq!(load_curve(&path).unwrap(), c);
    }
}

#[test]
fn neighbor_stats_large_set() {
    let mut r = rng(99);
    let pts: Vec<[f64; 2]> = (0..2000).map(|_| [r.random_range(0.0..500.0), r.random_range(0.0..500.0)]).collect();
    let stats = neighbor_stats_of(&pts, Some(0.05)).unwrap();
    for (i, (d, j)) in brute_force_nn(&pts).into_iter().enumerate() {
        assert!((stats.nn_distances[i] - d).abs() <= 1e-9);
        assert_eq!(stats.nn_index[i], j);
    }
}

#[test]
fn cube_and_image_round_trip_through_raw_files() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..4 * 3 * 5).map(|i| (i as f32 * 0.25) as f64).collect();
    let mut cube = HyperCube::new(4, 3, vec![1.5, 1.6, 1.7, 1.8, 1.9], SpectralUnit::ElectronVolt, values).unwrap();
    cube.pixel_size = Some(20.0);
    let path = dir.path().join("cube.bin");
    write_cube(&path, &cube).unwrap();
    assert_eq!(load_cube(&path).unwrap(), cube);

    let raw: Vec<f64> = (0..12).map(|i| (i * 17 % 12) as f64).collect();
    let img = ImageGrid::from_raw(4, 3, raw, Some(0.01)).unwrap();
    let path = dir.path().join("img.raw");
    write_image_raw(&path, &img).unwrap();
    let back = load_image(&path).unwrap();
    for (a, b) in img.values.iter().zip(&back.values) {
        assert!((a - b).abs() < 1e-6);
    }
    assert_eq!(back.pixel_size, Some(0.01));
}

#[test]
fn seeded_operations_are_reproducible() {
    let scene = synthetic::unmix_scene(16, 16, 40, 3, Some(30.0), 4);
    assert_eq!(unmix(&scene.cube, 3, 8).unwrap(), unmix(&scene.cube, 3, 8).unwrap());
    let img = synthetic::stripes_image(128, 128, 8.0, 16.0);
    assert_eq!(spatiofreq_decompose(&img, 32, 16, 2, 3).unwrap(), spatiofreq_decompose(&img, 32, 16, 2, 3).unwrap());
}

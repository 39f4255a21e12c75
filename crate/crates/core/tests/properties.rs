use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spatial_probe::neural::{apply_mask, ComplexMask, FeatureTrace, CMat, C64};
use spatial_probe::probe::{
    grouping_success, kcluster_points, l1, label_clusters, normalize, normalize_stacked, pause_fraction,
    ClusterModel, KConfig, Scaling, Tap, Weighting,
};
use spatial_probe::scene::FrameLabel;
use spatial_probe::spectral::{istft, stft, SpectralTensor};
use spatial_probe::wave::MultichannelWave;

fn trace(rows: usize, units: usize, values: &[(f64, f64)]) -> FeatureTrace {
    let m = CMat::from_vec(rows, units, values.iter().map(|&(a, b)| C64::new(a, b)).collect());
    FeatureTrace {
        h_in: m.clone(),
        h_out: m,
        model_checksum: String::new(),
        sequence_id: None,
    }
}

fn features() -> impl Strategy<Value = (usize, usize, Vec<(f64, f64)>)> {
    (1usize..12, 1usize..5).prop_flat_map(|(rows, units)| {
        (
            Just(rows),
            Just(units),
            prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), rows * units),
        )
    })
}

fn points() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (4usize..40, 1usize..4, 1usize..4).prop_flat_map(|(n, dim, k)| {
        (Just(k.min(n)), Just(dim), prop::collection::vec(-10.0f64..10.0, n * dim))
    })
}

fn cost(points: &[f64], dim: usize, center: &[f64]) -> f64 {
    points.chunks(dim).map(|p| l1(p, center)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_features_lie_in_unit_range_and_normalizing_twice_changes_nothing(
        (rows, units, values) in features(),
        separate in any::<bool>(),
    ) {
        let scaling = if separate { Scaling::Separate } else { Scaling::Joint };
        let n = normalize(&trace(rows, units, &values), Tap::Input, scaling).unwrap();
        prop_assert!(n.data.iter().all(|v| v.abs() <= 1.0));
        let mut again = n.data.clone();
        normalize_stacked(&mut again, units, scaling);
        prop_assert_eq!(again, n.data);
    }

    #[test]
    fn positive_unit_scaling_does_not_change_normalized_features(
        (rows, units, values) in features(),
        scales in prop::collection::vec(0.01f64..100.0, 5),
    ) {
        let scaled: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (a * scales[i % units], b * scales[i % units]))
            .collect();
        let a = normalize(&trace(rows, units, &values), Tap::Output, Scaling::Joint).unwrap();
        let b = normalize(&trace(rows, units, &scaled), Tap::Output, Scaling::Joint).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clustering_cost_never_rises_and_stops_within_the_iteration_cap(
        (k, dim, pts) in points(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = kcluster_points(&pts, dim, &KConfig::new(k, 2), &mut rng).unwrap();
        for w in m.cost_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert!(m.iterations < 100);
        // Every frame sits with its nearest center.
        for (i, p) in pts.chunks(dim).enumerate() {
            let own = l1(p, &m.centers[m.assignments[i]]);
            prop_assert!(m.centers.iter().all(|c| own <= l1(p, c)));
        }
        prop_assert_eq!(m.attempt_costs.iter().cloned().fold(f64::INFINITY, f64::min), m.total_cost);
    }

    #[test]
    fn single_cluster_median_beats_any_nudged_center(
        (_, dim, pts) in points(),
        nudge in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = kcluster_points(&pts, dim, &KConfig::new(1, 1), &mut rng).unwrap();
        let best = cost(&pts, dim, &m.centers[0]);
        let moved: Vec<f64> = m.centers[0].iter().zip(nudge.iter().cycle()).map(|(c, d)| c + d).collect();
        prop_assert!(best <= cost(&pts, dim, &moved) + 1e-9);
    }

    #[test]
    fn relabeling_cluster_indices_leaves_scores_unchanged(
        labels in prop::collection::vec(0usize..3, 6..40),
        assign in prop::collection::vec(0usize..3, 40),
        energy in prop::collection::vec(0.0f64..1.0, 40),
        perm_index in 0usize..6,
    ) {
        let n = labels.len();
        let activity: Vec<FrameLabel> = labels
            .iter()
            .map(|&l| if l == 0 { FrameLabel::Pause } else { FrameLabel::Source(l - 1) })
            .collect();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = perms[perm_index];
        let pts = vec![0.0; n];
        let base = ClusterModel::from_parts(&pts, 1, vec![vec![0.0]; 3], assign[..n].to_vec());
        let moved = ClusterModel::from_parts(
            &pts,
            1,
            vec![vec![0.0]; 3],
            assign[..n].iter().map(|&a| perm[a]).collect(),
        );
        // Distinct energies keep the pause choice free of ties.
        let energy: Vec<f64> = energy[..n].iter().enumerate().map(|(i, e)| e + i as f64 * 1e-9).collect();
        let la = label_clusters(&base, &activity, &energy, 2).unwrap();
        let lb = label_clusters(&moved, &activity, &energy, 2).unwrap();
        prop_assert_eq!(pause_fraction(&la), pause_fraction(&lb));
        let ga = grouping_success(&la, &activity, Weighting::Unweighted).unwrap();
        let gb = grouping_success(&lb, &activity, Weighting::Unweighted).unwrap();
        // Overlap ties may be broken differently, but the optimum is the same.
        let hits = |l: &spatial_probe::probe::LabeledClusters| {
            l.assignments
                .iter()
                .zip(&activity)
                .filter(|(&a, &t)| a != l.pause_cluster && t != FrameLabel::Pause && l.labels[a] == t)
                .count()
        };
        prop_assert_eq!(hits(&la), hits(&lb));
        prop_assert_eq!(ga.excluded_sources, gb.excluded_sources);
    }

    #[test]
    fn mask_application_is_linear_in_the_spectrum(
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = |channels: usize| {
            let mut x = SpectralTensor::zeros(channels, 4, 16, 16000, 24).unwrap();
            for v in x.as_mut_slice() {
                *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            x
        };
        let x = random(2);
        let y = random(2);
        let mask_values = random(2).as_slice().to_vec();
        let mask = ComplexMask::new(2, 4, 9, mask_values).unwrap();
        let mut combo = x.clone();
        for (c, (p, q)) in combo.as_mut_slice().iter_mut().zip(x.as_slice().iter().zip(y.as_slice())) {
            *c = p * a + q * b;
        }
        let lhs = apply_mask(&mask, &combo).unwrap();
        let (mx, my) = (apply_mask(&mask, &x).unwrap(), apply_mask(&mask, &y).unwrap());
        for ((l, p), q) in lhs.as_slice().iter().zip(mx.as_slice()).zip(my.as_slice()) {
            prop_assert!((l - (p * a + q * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn stft_round_trip_restores_any_signal(
        samples in prop::collection::vec(-1.0f64..1.0, 64..2000),
        frame_pow in 4u32..9,
    ) {
        let frame_len = 1usize << frame_pow;
        prop_assume!(samples.len() >= frame_len);
        let wave = MultichannelWave::mono(samples.clone(), 16000).unwrap();
        let back = istft(&stft(&wave, frame_len, frame_len / 2).unwrap()).unwrap();
        prop_assert_eq!(back.len(), samples.len());
        for (x, y) in samples.iter().zip(back.channel(0)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

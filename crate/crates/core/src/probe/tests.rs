use super::*;
use crate::neural::C64;
use crate::scene::FrameLabel::{Pause, Source};
use crate::scene::FrameLabel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trace_from(h_in: Vec<Vec<C64>>) -> FeatureTrace {
    let rows = h_in.len();
    let cols = h_in[0].len();
    let m = CMat::from_vec(rows, cols, h_in.into_iter().flatten().collect());
    FeatureTrace {
        h_in: m.clone(),
        h_out: m,
        model_checksum: String::new(),
        sequence_id: None,
    }
}

#[test]
fn unit_is_scaled_by_its_largest_part() {
    let re = [-4.0, 2.0, 0.5];
    let im = [-1.0, 3.0, 0.0];
    let rows: Vec<Vec<C64>> = (0..3)
        .map(|t| vec![C64::new(re[t], im[t]), C64::new(0.0, 0.0)])
        .collect();
    let n = normalize(&trace_from(rows), Tap::Input, Scaling::Joint).unwrap();
    assert_eq!(n.dim(), 4);
    for t in 0..3 {
        assert_eq!(n.frame(t)[0], re[t] / 4.0);
        assert_eq!(n.frame(t)[2], im[t] / 4.0);
        assert_eq!(n.frame(t)[1], 0.0);
        assert_eq!(n.frame(t)[3], 0.0);
    }
    assert!(n.data.iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn separate_scaling_uses_one_peak_per_part() {
    let rows = vec![vec![C64::new(-4.0, 1.0)], vec![C64::new(2.0, -2.0)]];
    let n = normalize(&trace_from(rows), Tap::Output, Scaling::Separate).unwrap();
    assert_eq!(n.data, vec![-1.0, 0.5, 0.5, -1.0]);
}

#[test]
fn normalization_ignores_unit_scale_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    use rand::Rng;
    let rows: Vec<Vec<C64>> = (0..10)
        .map(|_| (0..3).map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect())
        .collect();
    let base = normalize(&trace_from(rows.clone()), Tap::Input, Scaling::Joint).unwrap();
    let scaled: Vec<Vec<C64>> = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(u, v)| v * (u as f64 + 0.5) * 7.0).collect())
        .collect();
    let n2 = normalize(&trace_from(scaled), Tap::Input, Scaling::Joint).unwrap();
    for (a, b) in base.data.iter().zip(&n2.data) {
        assert!((a - b).abs() < 1e-12);
    }
    let mut again = base.data.clone();
    normalize_stacked(&mut again, 3, Scaling::Joint);
    assert_eq!(again, base.data);
}

fn model(assign: &[usize], k: usize) -> ClusterModel {
    ClusterModel::from_parts(&vec![0.0; assign.len()], 1, vec![vec![0.0]; k], assign.to_vec())
}

#[test]
fn perfect_clusters_get_identity_labels() {
    let activity = [Pause, Source(0), Source(0), Source(1), Source(1), Pause];
    let energy = [0.0, 1.0, 1.0, 2.0, 2.0, 0.1];
    let m = model(&[0, 1, 1, 2, 2, 0], 3);
    let l = label_clusters(&m, &activity, &energy, 2).unwrap();
    assert_eq!(l.labels, vec![Pause, Source(0), Source(1)]);
    let g = grouping_success(&l, &activity, Weighting::Unweighted).unwrap();
    assert_eq!(g.percent, Some(100.0));
    assert!((pause_fraction(&l) - 100.0 / 3.0).abs() < 1e-12);
}

#[test]
fn colliding_majorities_are_resolved_by_overlap() {
    // Clusters 1 and 2 both hold mostly source 0; cluster 2 holds more of it,
    // so cluster 1 must take source 1.
    let activity = [Pause, Source(0), Source(0), Source(1), Source(0), Source(0), Source(0), Source(1)];
    let energy = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let m = model(&[0, 1, 1, 1, 2, 2, 2, 2], 3);
    let l = label_clusters(&m, &activity, &energy, 2).unwrap();
    assert_eq!(l.labels, vec![Pause, Source(1), Source(0)]);
}

#[test]
fn overlap_matching_agrees_with_exhaustive_search_on_2x2_counts() {
    for a in 0..4usize {
        for b in 0..4usize {
            for c in 0..4usize {
                for d in 0..4usize {
                    // Cluster 1 has a frames of source 0 and b of source 1,
                    // cluster 2 has c and d.
                    let mut activity = vec![Pause];
                    let mut assign = vec![0];
                    for (cluster, n0, n1) in [(1, a, b), (2, c, d)] {
                        activity.extend(std::iter::repeat(Source(0)).take(n0));
                        activity.extend(std::iter::repeat(Source(1)).take(n1));
                        assign.extend(std::iter::repeat(cluster).take(n0 + n1));
                    }
                    let mut energy = vec![1.0; activity.len()];
                    energy[0] = 0.0;
                    let m = model(&assign, 3);
                    let l = label_clusters(&m, &activity, &energy, 2).unwrap();
                    let straight = a + d;
                    let crossed = b + c;
                    let expect = if crossed > straight {
                        vec![Pause, Source(1), Source(0)]
                    } else {
                        vec![Pause, Source(0), Source(1)]
                    };
                    if a + b + c + d > 0 && (a + b) > 0 && (c + d) > 0 {
                        assert_eq!(l.labels, expect, "{a} {b} {c} {d}");
                    }
                }
            }
        }
    }
}

#[test]
fn empty_clusters_are_flagged_and_never_pause_when_others_exist() {
    let activity = [Pause, Source(0), Source(1)];
    let m = model(&[0, 0, 2], 3);
    let l = label_clusters(&m, &activity, &[0.0, 1.0, 5.0], 2).unwrap();
    assert_eq!(l.empty_clusters, vec![1]);
    assert_eq!(l.pause_cluster, 0);
    assert_eq!(l.mean_energy[1], None);
}

#[test]
fn silent_sequence_puts_everything_in_pause() {
    let pts = vec![0.0; 20];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = kcluster_points(&pts, 2, &KConfig::new(3, 5), &mut rng).unwrap();
    let activity = vec![Pause; 10];
    let l = label_clusters(&m, &activity, &[0.0; 10], 2).unwrap();
    assert_eq!(pause_fraction(&l), 100.0);
    let g = grouping_success(&l, &activity, Weighting::Unweighted).unwrap();
    assert_eq!(g.percent, None);
    assert_eq!(g.excluded_sources, vec![0, 1]);
}

#[test]
fn hand_evaluated_grouping_example() {
    // Source 0: 6 of 8 non-pause frames in its cluster; source 1: 9 of 10.
    let mut activity = Vec::new();
    let mut assign = Vec::new();
    let push = |a: &mut Vec<FrameLabel>, s: &mut Vec<usize>, label, cluster, n| {
        a.extend(std::iter::repeat(label).take(n));
        s.extend(std::iter::repeat(cluster).take(n));
    };
    push(&mut activity, &mut assign, Source(0), 1, 6);
    push(&mut activity, &mut assign, Source(0), 2, 2);
    push(&mut activity, &mut assign, Source(0), 0, 3);
    push(&mut activity, &mut assign, Source(1), 2, 9);
    push(&mut activity, &mut assign, Source(1), 1, 1);
    push(&mut activity, &mut assign, Pause, 0, 4);
    let l = LabeledClusters {
        labels: vec![Pause, Source(0), Source(1)],
        pause_cluster: 0,
        assignments: assign,
        num_sources: 2,
        mean_energy: vec![],
        histograms: vec![],
        empty_clusters: vec![],
    };
    let g = grouping_success(&l, &activity, Weighting::Unweighted).unwrap();
    assert!((g.percent.unwrap() - 82.5).abs() < 1e-12);
    let w = grouping_success(&l, &activity, Weighting::FrameWeighted).unwrap();
    assert!((w.percent.unwrap() - 100.0 * 15.0 / 18.0).abs() < 1e-12);
}

#[test]
fn indistinct_clusters_score_fifty_percent() {
    let mut activity = Vec::new();
    let mut assign = Vec::new();
    for i in 0..40 {
        activity.push(if i < 20 { Source(0) } else { Source(1) });
        assign.push(1 + i % 2);
    }
    let l = LabeledClusters {
        labels: vec![Pause, Source(0), Source(1)],
        pause_cluster: 0,
        assignments: assign,
        num_sources: 2,
        mean_energy: vec![],
        histograms: vec![],
        empty_clusters: vec![],
    };
    assert_eq!(grouping_success(&l, &activity, Weighting::Unweighted).unwrap().percent, Some(50.0));
}

#[test]
fn average_distance_examples() {
    let a = ClusterModel::from_parts(&[0.0, 2.0, 5.0], 1, vec![vec![1.0], vec![5.0]], vec![0, 0, 1]);
    assert_eq!(avg_center_distance(&[&a]).unwrap(), (0.5, 0));
    assert_eq!(avg_center_distance(&[&a, &a]).unwrap(), (0.5, 0));
    let exact = ClusterModel::from_parts(&[1.0, 1.0, 4.0], 1, vec![vec![1.0], vec![4.0]], vec![0, 0, 1]);
    assert_eq!(avg_center_distance(&[&exact]).unwrap().0, 0.0);
    let empty = ClusterModel::from_parts(&[1.0, 3.0], 1, vec![vec![2.0], vec![9.0]], vec![0, 0]);
    assert_eq!(avg_center_distance(&[&empty]).unwrap(), (0.5, 1));
    assert!(avg_center_distance(&[]).is_err());
}

#[test]
fn pause_fraction_counts_frames() {
    let mut assign = vec![1; 20];
    assign[3] = 0;
    assign[7] = 0;
    let l = LabeledClusters {
        labels: vec![Pause, Source(0)],
        pause_cluster: 0,
        assignments: assign,
        num_sources: 1,
        mean_energy: vec![],
        histograms: vec![],
        empty_clusters: vec![],
    };
    assert_eq!(pause_fraction(&l), 10.0);
}

#[test]
fn mismatched_lengths_are_rejected() {
    let m = model(&[0, 1, 2], 3);
    assert!(label_clusters(&m, &[Pause, Pause], &[0.0; 3], 2).is_err());
    assert!(label_clusters(&m, &[Pause; 3], &[0.0; 3], 3).is_err());
}

#[test]
fn report_csv_has_table_columns() {
    let report = ClusterReport {
        dataset: "DS-WGN".into(),
        model_checksum: "x".into(),
        config: ProtocolConfig::default(),
        rows: vec![],
        sequences: vec![],
        incomplete: false,
        failures: vec![],
    };
    assert_eq!(
        report.to_csv().lines().next().unwrap(),
        "dataset,SNR,grouping_in,grouping_out,dbar_in,dbar_out,pause_in,pause_out"
    );
}

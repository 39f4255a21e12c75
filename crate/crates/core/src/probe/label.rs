use super::kmeans::ClusterModel;
use crate::scene::FrameLabel;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// How per-source grouping rates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Plain mean over sources.
    #[default]
    Unweighted,
    /// Pooled over frames, so sources with more frames count more.
    FrameWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClusters {
    /// Label of every cluster.
    pub labels: Vec<FrameLabel>,
    pub pause_cluster: usize,
    pub assignments: Vec<usize>,
    pub num_sources: usize,
    /// Mean target energy of each cluster's frames; `None` when empty.
    pub mean_energy: Vec<Option<f64>>,
    /// Per cluster: ground-truth counts `[pause, source 0, source 1, ...]`.
    pub histograms: Vec<Vec<usize>>,
    /// Clusters without frames; their label comes from the assignment alone.
    pub empty_clusters: Vec<usize>,
}

fn gt_index(label: FrameLabel) -> usize {
    match label {
        FrameLabel::Pause => 0,
        FrameLabel::Source(q) => q + 1,
    }
}

/// Permutation maximizing the total count, first in lexicographic order
/// among equals.
fn best_permutation(counts: &[Vec<usize>]) -> Vec<usize> {
    fn rec(
        counts: &[Vec<usize>],
        row: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        score: usize,
        best: &mut (Vec<usize>, Option<usize>),
    ) {
        if row == counts.len() {
            if best.1.map_or(true, |b| score > b) {
                *best = (current.clone(), Some(score));
            }
            return;
        }
        for q in 0..counts.len() {
            if used[q] {
                continue;
            }
            used[q] = true;
            current.push(q);
            rec(counts, row + 1, used, current, score + counts[row][q], best);
            current.pop();
            used[q] = false;
        }
    }
    let mut best = (Vec::new(), None);
    rec(counts, 0, &mut vec![false; counts.len()], &mut Vec::new(), 0, &mut best);
    best.0
}

/// Labels the cluster with the lowest mean target energy as pause and the
/// others by the overlap-maximizing one-to-one match with the sources.
pub fn label_clusters(
    model: &ClusterModel,
    activity: &[FrameLabel],
    target_energy: &[f64],
    num_sources: usize,
) -> Result<LabeledClusters> {
    let n = model.assignments.len();
    if activity.len() != n || target_energy.len() != n {
        return Err(Error::Shape(format!(
            "{n} assignments, {} activity labels, {} energies",
            activity.len(),
            target_energy.len()
        )));
    }
    if model.k != num_sources + 1 {
        return Err(Error::Config(format!(
            "{} clusters for {num_sources} sources; expected {}",
            model.k,
            num_sources + 1
        )));
    }
    if num_sources > 8 {
        return Err(Error::Config(format!("{num_sources} sources exceed the exhaustive matcher")));
    }
    let k = model.k;
    let mut sums = vec![0.0; k];
    let mut histograms = vec![vec![0usize; num_sources + 1]; k];
    for ((&a, &label), &e) in model.assignments.iter().zip(activity).zip(target_energy) {
        let g = gt_index(label);
        if g > num_sources {
            return Err(Error::Shape(format!("activity label {label:?} exceeds {num_sources} sources")));
        }
        sums[a] += e;
        histograms[a][g] += 1;
    }
    let sizes: Vec<usize> = histograms.iter().map(|h| h.iter().sum()).collect();
    let mean_energy: Vec<Option<f64>> = sums
        .iter()
        .zip(&sizes)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let mut pause_cluster = 0;
    for j in 1..k {
        let e = mean_energy[j].unwrap_or(f64::INFINITY);
        if e < mean_energy[pause_cluster].unwrap_or(f64::INFINITY) {
            pause_cluster = j;
        }
    }
    let others: Vec<usize> = (0..k).filter(|&j| j != pause_cluster).collect();
    let counts: Vec<Vec<usize>> = others.iter().map(|&j| histograms[j][1..].to_vec()).collect();
    let perm = best_permutation(&counts);
    let mut labels = vec![FrameLabel::Pause; k];
    for (&j, &q) in others.iter().zip(&perm) {
        labels[j] = FrameLabel::Source(q);
    }
    Ok(LabeledClusters {
        labels,
        pause_cluster,
        assignments: model.assignments.clone(),
        num_sources,
        mean_energy,
        empty_clusters: (0..k).filter(|&j| sizes[j] == 0).collect(),
        histograms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    /// Percentage, `None` when no source has a non-pause frame.
    pub percent: Option<f64>,
    pub per_source: Vec<Option<f64>>,
    /// Sources without any frame outside the pause cluster.
    pub excluded_sources: Vec<usize>,
}

/// Share of each source's frames, outside the pause cluster, that fall in the
/// cluster labeled with that source.
pub fn grouping_success(labeled: &LabeledClusters, activity: &[FrameLabel], weighting: Weighting) -> Result<Grouping> {
    if activity.len() != labeled.assignments.len() {
        return Err(Error::Shape(format!(
            "{} activity labels for {} frames",
            activity.len(),
            labeled.assignments.len()
        )));
    }
    let q = labeled.num_sources;
    let mut total = vec![0usize; q];
    let mut hit = vec![0usize; q];
    for (&a, &label) in labeled.assignments.iter().zip(activity) {
        if a == labeled.pause_cluster {
            continue;
        }
        if let FrameLabel::Source(s) = label {
            if s >= q {
                return Err(Error::Shape(format!("activity label {label:?} exceeds {q} sources")));
            }
            total[s] += 1;
            if labeled.labels[a] == FrameLabel::Source(s) {
                hit[s] += 1;
            }
        }
    }
    let per_source: Vec<Option<f64>> = total
        .iter()
        .zip(&hit)
        .map(|(&t, &h)| (t > 0).then(|| 100.0 * h as f64 / t as f64))
        .collect();
    let excluded_sources: Vec<usize> = (0..q).filter(|&s| total[s] == 0).collect();
    let percent = match weighting {
        Weighting::Unweighted => {
            let valid: Vec<f64> = per_source.iter().flatten().copied().collect();
            (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64)
        }
        Weighting::FrameWeighted => {
            let t: usize = total.iter().sum();
            (t > 0).then(|| 100.0 * hit.iter().sum::<usize>() as f64 / t as f64)
        }
    };
    Ok(Grouping {
        percent,
        per_source,
        excluded_sources,
    })
}

/// Percentage of frames in the pause cluster.
pub fn pause_fraction(labeled: &LabeledClusters) -> f64 {
    let n = labeled.assignments.len();
    if n == 0 {
        return 0.0;
    }
    let p = labeled.assignments.iter().filter(|&&a| a == labeled.pause_cluster).count();
    100.0 * p as f64 / n as f64
}

/// Average over sequences of the mean over clusters of the mean L1 distance
/// of a cluster's frames to its center. Empty clusters contribute zero; their
/// number is returned alongside.
pub fn avg_center_distance(models: &[&ClusterModel]) -> Result<(f64, usize)> {
    if models.is_empty() {
        return Err(Error::Shape("average distance needs at least one sequence".into()));
    }
    let mut empty = 0;
    let mut total = 0.0;
    for m in models {
        let per: f64 = m
            .cluster_mean_distance
            .iter()
            .map(|d| {
                if d.is_none() {
                    empty += 1;
                }
                d.unwrap_or(0.0)
            })
            .sum();
        total += per / m.k as f64;
    }
    Ok((total / models.len() as f64, empty))
}

//! L1 k-means with median (or mean) center updates and k-means++-style seeding.

use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CenterUpdate {
    /// Coordinate-wise median, the L1 cost minimizer.
    #[default]
    Median,
    /// Arithmetic mean, as in classic k-means.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KConfig {
    pub k: usize,
    pub attempts: usize,
    pub max_iter: usize,
    pub update: CenterUpdate,
}

impl KConfig {
    pub fn new(k: usize, attempts: usize) -> Self {
        Self {
            k,
            attempts,
            max_iter: 100,
            update: CenterUpdate::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub total_cost: f64,
    /// Mean L1 distance of each cluster's frames to its center; `None` for an
    /// empty cluster.
    pub cluster_mean_distance: Vec<Option<f64>>,
    /// Index of the winning attempt.
    pub attempt: usize,
    pub iterations: usize,
    /// Cost after every assignment step of the winning attempt.
    pub cost_history: Vec<f64>,
    /// Final cost of every attempt.
    pub attempt_costs: Vec<f64>,
}

#[inline]
pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn row(points: &[f64], dim: usize, i: usize) -> &[f64] {
    &points[i * dim..(i + 1) * dim]
}

/// Nearest center, ties going to the lowest index.
fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = l1(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Median of a scratch buffer; the two middle values are averaged for even
/// counts.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl ClusterModel {
    /// Builds a model from explicit centers and assignments, computing costs.
    pub fn from_parts(points: &[f64], dim: usize, centers: Vec<Vec<f64>>, assignments: Vec<usize>) -> Self {
        let k = centers.len();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            sums[a] += l1(row(points, dim, i), &centers[a]);
            counts[a] += 1;
        }
        let total_cost = sums.iter().sum();
        let cluster_mean_distance = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Self {
            k,
            dim,
            centers,
            assignments,
            total_cost,
            cluster_mean_distance,
            attempt: 0,
            iterations: 0,
            cost_history: vec![total_cost],
            attempt_costs: vec![total_cost],
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// k-means++ seeding with sampling weight equal to the L1 distance to the
/// nearest chosen center.
fn seed_centers<R: Rng + ?Sized>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len() / dim;
    let mut centers = vec![row(points, dim, rng.gen_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = (0..n).map(|i| l1(row(points, dim, i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            // Guard against landing on a zero-weight frame through rounding.
            if dist[chosen] == 0.0 {
                chosen = dist.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = row(points, dim, pick).to_vec();
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(l1(row(points, dim, i), &c));
        }
        centers.push(c);
    }
    centers
}

fn update_centers(points: &[f64], dim: usize, assignments: &[usize], centers: &mut [Vec<f64>], update: CenterUpdate) {
    let k = centers.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(i);
    }
    let mut scratch = Vec::new();
    for (j, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        for d in 0..dim {
            scratch.clear();
            scratch.extend(idx.iter().map(|&i| points[i * dim + d]));
            centers[j][d] = match update {
                CenterUpdate::Median => median(&mut scratch),
                CenterUpdate::Mean => scratch.iter().sum::<f64>() / scratch.len() as f64,
            };
        }
    }
}

/// Moves each empty cluster's center onto the frame farthest from its own
/// center and reassigns that frame.
fn reseed_empty(points: &[f64], dim: usize, assignments: &mut [usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] <= 1 {
                continue;
            }
            let d = l1(row(points, dim, i), &centers[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            sizes[assignments[i]] -= 1;
            assignments[i] = j;
            sizes[j] = 1;
            centers[j] = row(points, dim, i).to_vec();
        }
    }
}

fn single_attempt<R: Rng + ?Sized>(points: &[f64], dim: usize, cfg: &KConfig, rng: &mut R) -> ClusterModel {
    let n = points.len() / dim;
    let mut centers = seed_centers(points, dim, cfg.k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut cost = 0.0;
        for i in 0..n {
            let (a, d) = nearest(row(points, dim, i), &centers);
            if assignments[i] != a {
                assignments[i] = a;
                changed = true;
            }
            cost += d;
        }
        history.push(cost);
        if !changed || iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;
        update_centers(points, dim, &assignments, &mut centers, cfg.update);
        reseed_empty(points, dim, &mut assignments, &mut centers);
    }
    let mut model = ClusterModel::from_parts(points, dim, centers, assignments);
    model.iterations = iterations;
    model.cost_history = history;
    model
}

/// Best of `cfg.attempts` clustering runs on `points` (row-major, `dim`
/// columns) by total L1 cost; ties keep the earliest attempt.
pub fn kcluster_points<R: Rng + ?Sized>(points: &[f64], dim: usize, cfg: &KConfig, rng: &mut R) -> Result<ClusterModel> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Shape(format!("{} values do not form rows of {dim}", points.len())));
    }
    let n = points.len() / dim;
    if cfg.k == 0 || cfg.attempts == 0 {
        return Err(Error::Config("k and attempts must be positive".into()));
    }
    if n < cfg.k {
        return Err(Error::Shape(format!("{n} frames cannot form {} clusters", cfg.k)));
    }
    let mut best: Option<ClusterModel> = None;
    let mut costs = Vec::with_capacity(cfg.attempts);
    for attempt in 0..cfg.attempts {
        let mut m = single_attempt(points, dim, cfg, rng);
        m.attempt = attempt;
        costs.push(m.total_cost);
        if best.as_ref().map_or(true, |b| m.total_cost < b.total_cost) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one attempt");
    best.attempt_costs = costs;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separated_groups_are_recovered() {
        let pts = [0.0, 0.1, -0.1, 5.0, 5.1, 4.9, 10.0, 10.1, 9.9];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = kcluster_points(&pts, 1, &KConfig::new(3, 5), &mut rng).unwrap();
        let mut centers: Vec<f64> = m.centers.iter().map(|c| c[0]).collect();
        centers.sort_by(f64::total_cmp);
        for (c, e) in centers.iter().zip([0.0, 5.0, 10.0]) {
            assert!((c - e).abs() < 1e-12);
        }
        for g in 0..3 {
            let a = m.assignments[3 * g];
            assert!(m.assignments[3 * g..3 * g + 3].iter().all(|&x| x == a));
        }
    }

    #[test]
    fn single_cluster_center_is_the_median() {
        let pts = [1.0, 7.0, 3.0, -2.0, 8.0, 0.0, 2.0, 5.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = kcluster_points(&pts, 2, &KConfig::new(1, 2), &mut rng).unwrap();
        assert_eq!(m.centers[0], vec![2.5, 2.5]);
    }

    #[test]
    fn too_few_frames_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(kcluster_points(&[1.0, 2.0], 1, &KConfig::new(3, 1), &mut rng).is_err());
    }

    #[test]
    fn duplicate_frames_still_fill_every_cluster() {
        let pts = [1.0; 12];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = kcluster_points(&pts, 2, &KConfig::new(3, 3), &mut rng).unwrap();
        assert_eq!(m.total_cost, 0.0);
        assert_eq!(m.assignments.len(), 6);
    }

    #[test]
    fn median_of_even_count_averages_middle_pair() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
    }
}

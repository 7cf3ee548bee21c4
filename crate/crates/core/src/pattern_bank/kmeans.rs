use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Pattern;
use crate::error::{Error, Result};

/// Outcome of Lloyd's algorithm over normalized windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id for each input pattern.
    pub assignments: Vec<usize>,
    pub populations: Vec<usize>,
    pub label_mean: Vec<f64>,
    /// Population standard deviation of member labels.
    pub label_std: Vec<f64>,
    /// Sum of squared distances after each centroid update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterSet {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid. `current` is kept when it ties for best so
/// that splits of identical points stay put.
fn nearest(x: &[f64], centroids: &[Vec<f64>], current: Option<usize>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    if let Some(cur) = current {
        let d = sq_dist(x, &centroids[cur]);
        if d <= best.1 {
            return (cur, d);
        }
    }
    best
}

fn plus_plus_seed(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points
        .par_iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // every point coincides with a centroid; take any unused one
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let c = points[next].to_vec();
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(sq_dist(p, &c)));
        centroids.push(c);
    }
    centroids
}

fn update_centroids(
    points: &[&[f64]],
    assignments: &[usize],
    k: usize,
    dim: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let inv = 1.0 / c as f64;
            s.iter_mut().for_each(|v| *v *= inv);
        }
    }
    (sums, counts)
}

fn mean_of(points: &[&[f64]], assignments: &[usize], cluster: usize, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for (p, _) in points
        .iter()
        .zip(assignments)
        .filter(|(_, &a)| a == cluster)
    {
        count += 1;
        for (s, v) in sum.iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    sum.iter_mut().for_each(|v| *v /= count as f64);
    sum
}

/// Gives each empty cluster the point farthest from its own centroid, taken
/// from a cluster with at least two members.
fn fill_empty(
    points: &[&[f64]],
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
    dim: usize,
) {
    for empty in 0..centroids.len() {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .map(|i| (i, sq_dist(points[i], &centroids[assignments[i]])))
            .fold(None, |best: Option<(usize, f64)>, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            });
        let Some((i, _)) = donor else { return };
        let from = assignments[i];
        assignments[i] = empty;
        counts[from] -= 1;
        counts[empty] = 1;
        centroids[empty] = points[i].to_vec();
        centroids[from] = mean_of(points, assignments, from, dim);
    }
}

fn objective(points: &[&[f64]], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .par_iter()
        .zip(assignments.par_iter())
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Lloyd's algorithm on `normalized_x` with k-means++ seeding.
///
/// Stops when no assignment changes or after `max_iters` reassignment rounds.
/// Empty clusters are refilled, so every cluster has a member whenever the
/// input holds at least `k` patterns.
pub fn kmeans(patterns: &[Pattern], k: usize, seed: u64, max_iters: usize) -> Result<ClusterSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if patterns.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} patterns cannot form {k} clusters",
            patterns.len()
        )));
    }
    let dim = patterns[0].normalized_x.len();
    if let Some(p) = patterns.iter().find(|p| p.normalized_x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.normalized_x.len(),
        });
    }
    let points: Vec<&[f64]> = patterns.iter().map(|p| p.normalized_x.as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seed(&points, k, &mut rng);
    let mut assignments: Vec<usize> = points
        .par_iter()
        .map(|p| nearest(p, &centroids, None).0)
        .collect();

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let (mut next, mut counts) = update_centroids(&points, &assignments, k, dim);
        // keep the previous position for clusters that are about to be refilled
        for j in (0..k).filter(|&j| counts[j] == 0) {
            next[j].clone_from(&centroids[j]);
        }
        fill_empty(&points, &mut assignments, &mut next, &mut counts, dim);
        centroids = next;
        history.push(objective(&points, &assignments, &centroids));

        if iterations >= max_iters {
            break;
        }
        iterations += 1;
        let reassigned: Vec<usize> = points
            .par_iter()
            .zip(assignments.par_iter())
            .map(|(p, &a)| nearest(p, &centroids, Some(a)).0)
            .collect();
        let changed = reassigned != assignments;
        assignments = reassigned;
        if !changed {
            break;
        }
    }

    let mut populations = vec![0usize; k];
    let mut label_sum = vec![0.0; k];
    for (p, &a) in patterns.iter().zip(&assignments) {
        populations[a] += 1;
        label_sum[a] += p.y;
    }
    let label_mean: Vec<f64> = label_sum
        .iter()
        .zip(&populations)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    let mut label_ss = vec![0.0; k];
    for (p, &a) in patterns.iter().zip(&assignments) {
        label_ss[a] += (p.y - label_mean[a]).powi(2);
    }
    let label_std = label_ss
        .iter()
        .zip(&populations)
        .map(|(&ss, &n)| if n > 0 { (ss / n as f64).sqrt() } else { 0.0 })
        .collect();

    Ok(ClusterSet {
        k,
        centroids,
        assignments,
        populations,
        label_mean,
        label_std,
        objective_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_labeled, LabelDist, LatentSourceSpec};

    fn pattern(v: Vec<f64>, y: f64) -> Pattern {
        Pattern {
            normalized_x: v.clone(),
            x: v,
            y,
            constant: false,
        }
    }

    fn random_patterns(n: usize, dim: usize, seed: u64) -> Vec<Pattern> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Pattern::new(
                    (0..dim).map(|_| rng.random::<f64>()).collect(),
                    rng.random(),
                )
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pats = random_patterns(40, 8, 1);
        let cs = kmeans(&pats, 1, 3, 50).unwrap();
        for d in 0..8 {
            let mean = pats.iter().map(|p| p.normalized_x[d]).sum::<f64>() / 40.0;
            assert!((cs.centroids[0][d] - mean).abs() < 1e-12);
        }
        assert_eq!(cs.populations, vec![40]);
    }

    #[test]
    fn one_pattern_per_cluster() {
        let pats = random_patterns(12, 5, 2);
        let cs = kmeans(&pats, 12, 9, 50).unwrap();
        assert!(cs.objective() < 1e-20);
        assert!(cs.populations.iter().all(|&n| n == 1));
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let pats: Vec<Pattern> = (0..10)
            .map(|i| pattern(vec![(i % 2) as f64, 0.0], 0.0))
            .collect();
        let cs = kmeans(&pats, 4, 0, 20).unwrap();
        assert!(
            cs.populations.iter().all(|&n| n > 0),
            "{:?}",
            cs.populations
        );
        assert!(cs.objective() < 1e-20);
    }

    #[test]
    fn too_few_patterns() {
        assert!(kmeans(&random_patterns(3, 4, 0), 4, 0, 10).is_err());
    }

    #[test]
    fn recovers_planted_blobs() {
        let spec = LatentSourceSpec::new(
            vec![
                vec![3.0, -1.0, 2.0, 0.0, -4.0, 1.0],
                vec![-2.0, 2.0, -1.0, 3.0, 1.0, -3.0],
            ],
            vec![0.5, 0.5],
            vec![LabelDist::PointMass { value: 0.0 }; 2],
            0.0,
            5,
        );
        let pts = generate_labeled(&spec, 60).unwrap();
        let pats: Vec<Pattern> = pts.iter().map(|p| pattern(p.x.clone(), 0.0)).collect();
        let cs = kmeans(&pats, 2, 17, 100).unwrap();
        // partition must match planting up to a relabeling
        let map = cs.assignments[0];
        for (p, &a) in pts.iter().zip(&cs.assignments) {
            assert_eq!(a == map, p.source == pts[0].source);
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..5 {
            let pats = random_patterns(300, 6, seed);
            let cs = kmeans(&pats, 7, seed, 100).unwrap();
            for w in cs.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", cs.objective_history);
            }
            for (p, &a) in pats.iter().zip(&cs.assignments) {
                let (best, d) = nearest(&p.normalized_x, &cs.centroids, None);
                assert!(
                    a == best || (sq_dist(&p.normalized_x, &cs.centroids[a]) - d).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let pats = random_patterns(200, 5, 4);
        assert_eq!(
            kmeans(&pats, 6, 1, 100).unwrap(),
            kmeans(&pats, 6, 1, 100).unwrap()
        );
    }
}

//! Lloyd's k-means with k-means++ seeding.

use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::numerics::seeded_rng;
use rand::Rng;

const MAX_ITER: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster `points` into `k` groups. Returns the assignment and the
/// within-cluster sum-of-squares trace, which is non-increasing by
/// Lloyd's guarantee. Iterates to an assignment fixpoint or 300 rounds.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<(ClusterAssignment, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::Invalid("kmeans: no points".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::Invalid(format!(
            "kmeans: k={k} out of range for {} points",
            points.len()
        )));
    }
    let n = points.len();
    let d = points[0].len();
    let mut rng = seeded_rng(seed);

    // k-means++ seeding: first center uniform, then proportional to the
    // squared distance from the closest chosen center.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centers.push(points[first].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining distances are zero; take the lowest unchosen index.
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[idx] = true;
        centers.push(points[idx].clone());
        let latest = centers.len() - 1;
        for (i, p) in points.iter().enumerate() {
            let nd = sq_dist(p, &centers[latest]);
            if nd < d2[i] {
                d2[i] = nd;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITER {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = sq_dist(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let dd = sq_dist(p, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            objective += best_d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed && trace.len() > 1 {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seat an empty cluster on the point farthest from its
                // current center; deterministic tie-break by index.
                let mut far = 0;
                let mut far_d = -1.0;
                for (i, p) in points.iter().enumerate() {
                    let dd = sq_dist(p, &centers[labels[i]]);
                    if dd > far_d {
                        far_d = dd;
                        far = i;
                    }
                }
                centers[c] = points[far].clone();
                labels[far] = c;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
    }
    Ok((
        ClusterAssignment::from_raw(labels, "kmeans", &format!("k={k};seed={seed}")),
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;
    use rand::Rng;

    #[test]
    fn k_equal_n_gives_singletons_with_zero_objective() {
        let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let (asg, trace) = kmeans(&points, 6, 1).unwrap();
        assert_eq!(asg.n_clusters, 6);
        let unique: std::collections::HashSet<usize> = asg.labels.iter().copied().collect();
        assert_eq!(unique.len(), 6);
        assert!(trace.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_blobs_are_recovered() {
        let mut rng = seeded_rng(8);
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..30 {
            points.push(vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
            truth.push(0usize);
        }
        for _ in 0..30 {
            points.push(vec![10.0 + rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
            truth.push(1usize);
        }
        let (asg, _) = kmeans(&points, 2, 3).unwrap();
        // Equality up to label permutation.
        let flip = asg.labels[0] != truth[0];
        for (got, want) in asg.labels.iter().zip(&truth) {
            let got = if flip { 1 - got } else { *got };
            assert_eq!(got, *want);
        }
    }

    #[test]
    fn objective_trace_is_monotone_nonincreasing() {
        let mut rng = seeded_rng(11);
        let points: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let (_, trace) = kmeans(&points, 7, 4).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn empty_input_and_bad_k_error() {
        assert!(kmeans(&[], 1, 0).is_err());
        let points = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&points, 3, 0).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut rng = seeded_rng(2);
        let points: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let (a, _) = kmeans(&points, 5, 9).unwrap();
        let (b, _) = kmeans(&points, 5, 9).unwrap();
        assert_eq!(a.labels, b.labels);
    }
}

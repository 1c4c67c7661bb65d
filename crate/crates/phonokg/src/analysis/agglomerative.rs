//! Bottom-up Ward-linkage clustering.
//!
//! The merge criterion is the increase in within-cluster variance,
//! D(i,j) = n_i n_j / (n_i + n_j) * ||c_i - c_j||^2; merged distances are
//! maintained with the Lance-Williams recurrence. Ties break on the
//! lowest cluster-index pair, so the result is deterministic given input
//! order.

use super::ClusterAssignment;
use crate::error::{Error, Result};

/// Merge until `k` clusters remain.
pub fn agglomerative(points: &[Vec<f64>], k: usize) -> Result<ClusterAssignment> {
    if points.is_empty() {
        return Err(Error::Invalid("agglomerative: no points".into()));
    }
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!(
            "agglomerative: k={k} out of range for {n} points"
        )));
    }
    // Cluster slot i starts as point i; a merge keeps the lower slot.
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut member_of: Vec<usize> = (0..n).collect();

    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = 0.5 * d2; // n_i n_j / (n_i + n_j) with unit sizes
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    for _merge in 0..(n - k) {
        // Scan for the closest active pair; lowest (i, j) wins ties.
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if d < best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        let (a, b) = best;
        // Lance-Williams update for Ward linkage.
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for t in 0..n {
            if !active[t] || t == a || t == b {
                continue;
            }
            let nt = size[t] as f64;
            let d = ((na + nt) * dist[a * n + t] + (nb + nt) * dist[b * n + t]
                - nt * best_d)
                / (na + nb + nt);
            dist[a * n + t] = d;
            dist[t * n + a] = d;
        }
        size[a] += size[b];
        active[b] = false;
        for m in member_of.iter_mut() {
            if *m == b {
                *m = a;
            }
        }
    }
    Ok(ClusterAssignment::from_raw(
        member_of,
        "agglomerative",
        &format!("k={k};linkage=ward"),
    ))
}

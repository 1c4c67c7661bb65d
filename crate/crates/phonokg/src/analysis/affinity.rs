//! Affinity propagation on a similarity matrix.
//!
//! Standard responsibility/availability message passing with damping.
//! Exemplars are data points; every point is assigned to its best
//! exemplar. The usual pairing for embeddings is negative squared
//! Euclidean similarity with the median off-diagonal similarity as the
//! shared preference.

use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::numerics::seeded_rng;
use rand::Rng;

/// Iterations with a stable exemplar set counted as convergence.
const CONVERGENCE_ITER: usize = 15;

#[derive(Debug, Clone)]
pub struct ApOutcome {
    pub assignment: ClusterAssignment,
    /// Point indices acting as exemplars, ascending.
    pub exemplars: Vec<usize>,
    /// False when max_iter ran out before the exemplar set settled.
    pub converged: bool,
}

/// Dense negative squared Euclidean similarities; the diagonal is left 0
/// for [`median_preference`] to fill.
pub fn negative_sq_euclidean(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            s[i][j] = -d2;
            s[j][i] = -d2;
        }
    }
    s
}

/// Median of the off-diagonal similarities, the customary default
/// preference (placed on the diagonal by the caller).
pub fn median_preference(s: &[Vec<f64>]) -> f64 {
    let n = s.len();
    let mut vals = Vec::with_capacity(n * n - n);
    for (i, row) in s.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                vals.push(v);
            }
        }
    }
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = vals.len();
    if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    }
}

/// Run message passing on a square similarity matrix whose diagonal
/// already holds the preferences. Returns the clustering even when the
/// exemplar set has not settled, flagged via `converged`.
///
/// Exactly tied similarities (duplicate points) deadlock the messages,
/// so a seeded perturbation nine orders of magnitude below the data
/// range breaks the symmetry; the run stays deterministic.
pub fn affinity_propagation(
    s: &[Vec<f64>],
    damping: f64,
    max_iter: usize,
) -> Result<ApOutcome> {
    let n = s.len();
    if n == 0 {
        return Err(Error::Invalid("affinity propagation: empty matrix".into()));
    }
    if s.iter().any(|row| row.len() != n) {
        return Err(Error::Shape("affinity propagation: matrix not square".into()));
    }
    if !(0.5..1.0).contains(&damping) {
        return Err(Error::Invalid(format!(
            "affinity propagation: damping {damping} outside [0.5, 1)"
        )));
    }
    if n == 1 {
        return Ok(ApOutcome {
            assignment: ClusterAssignment::from_raw(vec![0], "affinity", "n=1"),
            exemplars: vec![0],
            converged: true,
        });
    }

    let mut s = s.to_vec();
    let lo = s.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = s.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let eps = (hi - lo).max(1.0) * 1e-9;
    let mut noise = seeded_rng(0x5eed);
    for row in s.iter_mut() {
        for v in row.iter_mut() {
            *v += eps * noise.gen::<f64>();
        }
    }

    let mut r = vec![vec![0.0f64; n]; n];
    let mut a = vec![vec![0.0f64; n]; n];
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0usize;
    let mut converged = false;

    for _ in 0..max_iter {
        // Responsibilities.
        for i in 0..n {
            let mut max1 = f64::NEG_INFINITY;
            let mut max2 = f64::NEG_INFINITY;
            let mut arg1 = 0usize;
            for k in 0..n {
                let v = a[i][k] + s[i][k];
                if v > max1 {
                    max2 = max1;
                    max1 = v;
                    arg1 = k;
                } else if v > max2 {
                    max2 = v;
                }
            }
            for k in 0..n {
                let cap = if k == arg1 { max2 } else { max1 };
                r[i][k] = damping * r[i][k] + (1.0 - damping) * (s[i][k] - cap);
            }
        }
        // Availabilities.
        for k in 0..n {
            let mut pos_sum = 0.0;
            for i in 0..n {
                if i != k {
                    pos_sum += r[i][k].max(0.0);
                }
            }
            for i in 0..n {
                let new = if i == k {
                    pos_sum
                } else {
                    (r[k][k] + pos_sum - r[i][k].max(0.0)).min(0.0)
                };
                a[i][k] = damping * a[i][k] + (1.0 - damping) * new;
            }
        }
        let current: Vec<usize> = (0..n).filter(|&k| r[k][k] + a[k][k] > 0.0).collect();
        if current == exemplars && !current.is_empty() {
            stable += 1;
            if stable >= CONVERGENCE_ITER {
                converged = true;
                break;
            }
        } else {
            stable = 0;
            exemplars = current;
        }
    }

    if exemplars.is_empty() {
        // Degenerate run; fall back to the single best-evidence point.
        let best = (0..n)
            .max_by(|&i, &j| {
                (r[i][i] + a[i][i])
                    .partial_cmp(&(r[j][j] + a[j][j]))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        exemplars = vec![best];
    }

    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if exemplars.contains(&i) {
                i
            } else {
                *exemplars
                    .iter()
                    .max_by(|&&x, &&y| {
                        s[i][x]
                            .partial_cmp(&s[i][y])
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap()
            }
        })
        .collect();
    Ok(ApOutcome {
        assignment: ClusterAssignment::from_raw(
            labels,
            "affinity",
            &format!("damping={damping};max_iter={max_iter}"),
        ),
        exemplars,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive exemplar-set search: maximize sum of preferences of the
    /// exemplars plus each other point's similarity to its best exemplar.
    fn best_exemplar_partition(s: &[Vec<f64>]) -> Vec<usize> {
        let n = s.len();
        let mut best_score = f64::NEG_INFINITY;
        let mut best_labels = vec![0usize; n];
        for mask in 1u32..(1 << n) {
            let exemplars: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let mut score = 0.0;
            let mut labels = vec![0usize; n];
            for i in 0..n {
                if exemplars.contains(&i) {
                    score += s[i][i];
                    labels[i] = i;
                } else {
                    let e = *exemplars
                        .iter()
                        .max_by(|&&x, &&y| s[i][x].partial_cmp(&s[i][y]).unwrap())
                        .unwrap();
                    score += s[i][e];
                    labels[i] = e;
                }
            }
            if score > best_score {
                best_score = score;
                best_labels = labels;
            }
        }
        best_labels
    }

    #[test]
    fn two_far_pairs_form_two_clusters() {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![20.0, 0.0],
            vec![20.0, 0.0],
        ];
        let mut s = negative_sq_euclidean(&points);
        let pref = median_preference(&s);
        for (i, row) in s.iter_mut().enumerate() {
            row[i] = pref;
        }
        let out = affinity_propagation(&s, 0.5, 200).unwrap();
        assert_eq!(out.assignment.n_clusters, 2);
        assert_eq!(out.assignment.labels[0], out.assignment.labels[1]);
        assert_eq!(out.assignment.labels[2], out.assignment.labels[3]);
        assert_ne!(out.assignment.labels[0], out.assignment.labels[2]);
        assert!(out.converged);

        // Same partition as the exhaustive exemplar search.
        let oracle = best_exemplar_partition(&s);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(
                    out.assignment.labels[i] == out.assignment.labels[j],
                    oracle[i] == oracle[j]
                );
            }
        }
    }

    #[test]
    fn single_point_is_its_own_exemplar() {
        let s = vec![vec![0.0]];
        let out = affinity_propagation(&s, 0.7, 50).unwrap();
        assert_eq!(out.exemplars, vec![0]);
        assert_eq!(out.assignment.labels, vec![0]);
        assert_eq!(out.assignment.n_clusters, 1);
    }

    #[test]
    fn exemplars_belong_to_their_own_cluster() {
        let mut points = Vec::new();
        for c in 0..3 {
            for k in 0..4 {
                points.push(vec![c as f64 * 12.0 + 0.1 * k as f64, 0.3 * k as f64]);
            }
        }
        let mut s = negative_sq_euclidean(&points);
        let pref = median_preference(&s);
        for (i, row) in s.iter_mut().enumerate() {
            row[i] = pref;
        }
        let out = affinity_propagation(&s, 0.6, 300).unwrap();
        // Every exemplar defines its own cluster: exemplar labels are
        // pairwise distinct and cover all clusters.
        let exemplar_labels: std::collections::HashSet<usize> = out
            .exemplars
            .iter()
            .map(|&e| out.assignment.labels[e])
            .collect();
        assert_eq!(exemplar_labels.len(), out.exemplars.len());
        assert_eq!(out.assignment.n_clusters, out.exemplars.len());
    }

    #[test]
    fn non_square_and_bad_damping_error() {
        assert!(affinity_propagation(&[vec![0.0, 1.0]], 0.6, 10).is_err());
        let s = vec![vec![0.0, -1.0], vec![-1.0, 0.0]];
        assert!(affinity_propagation(&s, 0.4, 10).is_err());
        assert!(affinity_propagation(&s, 1.0, 10).is_err());
    }

    #[test]
    fn nonconvergence_is_flagged_but_assigns_everyone() {
        let points = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let mut s = negative_sq_euclidean(&points);
        let pref = median_preference(&s);
        for (i, row) in s.iter_mut().enumerate() {
            row[i] = pref;
        }
        // Two iterations cannot settle a 15-iteration stability window.
        let out = affinity_propagation(&s, 0.5, 2).unwrap();
        assert!(!out.converged);
        assert_eq!(out.assignment.labels.len(), 4);
    }
}

//! Unsupervised analyses of the character embeddings: clustering,
//! information yield against the input phonemic categories, and PCA
//! projection for plotting.

mod affinity;
mod agglomerative;
mod kmeans;

pub use affinity::{affinity_propagation, median_preference, negative_sq_euclidean, ApOutcome};
pub use agglomerative::agglomerative;
pub use kmeans::kmeans;

use crate::error::{Error, Result};

/// A flat clustering: one dense non-negative id per input point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub method: String,
    pub params: String,
}

impl ClusterAssignment {
    /// Relabel arbitrary ids to dense 0..k in first-occurrence order.
    pub fn from_raw(labels: Vec<usize>, method: &str, params: &str) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut dense = Vec::with_capacity(labels.len());
        for l in labels {
            let next = remap.len();
            let id = *remap.entry(l).or_insert(next);
            dense.push(id);
        }
        Self {
            labels: dense,
            n_clusters: remap.len(),
            method: method.to_string(),
            params: params.to_string(),
        }
    }
}

/// Entropy bookkeeping of one clustering against one labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldEntry {
    pub n: usize,
    pub n_clusters: usize,
    /// Label entropy H in bits.
    pub h_bits: f64,
    /// Conditional entropy H(label | cluster) in bits.
    pub cond_h_bits: f64,
    /// Mutual information in bits.
    pub mi_bits: f64,
    /// 100 * MI / H; undefined (None) when H = 0.
    pub yield_percent: Option<f64>,
}

fn entropy_bits(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Empirical information yield of a clustering against category labels.
///
/// H(label) and H(label | cluster) are computed in bits over the points
/// given (callers exclude unlabeled characters beforehand); the yield is
/// mutual information as a percentage of the label entropy.
pub fn information_yield(clusters: &[usize], labels: &[&str]) -> Result<YieldEntry> {
    if clusters.len() != labels.len() {
        return Err(Error::Shape(format!(
            "information yield: {} clusters vs {} labels",
            clusters.len(),
            labels.len()
        )));
    }
    if clusters.is_empty() {
        return Err(Error::Invalid("information yield: no labeled points".into()));
    }
    let n = clusters.len();
    let mut label_ids = std::collections::HashMap::new();
    let coded: Vec<usize> = labels
        .iter()
        .map(|l| {
            let next = label_ids.len();
            *label_ids.entry(*l).or_insert(next)
        })
        .collect();
    let n_labels = label_ids.len();
    let n_clusters = clusters.iter().copied().max().unwrap() + 1;

    let mut label_counts = vec![0usize; n_labels];
    let mut cluster_counts = vec![0usize; n_clusters];
    let mut joint = vec![0usize; n_labels * n_clusters];
    for (&c, &l) in clusters.iter().zip(&coded) {
        label_counts[l] += 1;
        cluster_counts[c] += 1;
        joint[l * n_clusters + c] += 1;
    }

    let h = entropy_bits(&label_counts, n);
    let mut cond = 0.0;
    for c in 0..n_clusters {
        if cluster_counts[c] == 0 {
            continue;
        }
        let within: Vec<usize> = (0..n_labels).map(|l| joint[l * n_clusters + c]).collect();
        let h_within = entropy_bits(&within, cluster_counts[c]);
        cond += cluster_counts[c] as f64 / n as f64 * h_within;
    }
    let mi = (h - cond).max(0.0);
    // Computed as 1 - cond/H so the pure-cluster (cond = 0) and
    // single-cluster (cond = H) identities come out exact.
    let yield_percent = if h > 0.0 {
        Some((100.0 * (1.0 - cond / h)).clamp(0.0, 100.0))
    } else {
        None
    };
    Ok(YieldEntry {
        n,
        n_clusters,
        h_bits: h,
        cond_h_bits: cond,
        mi_bits: mi,
        yield_percent,
    })
}

/// PCA projection of the rows of `points` onto the top components.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// n x out_dims coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Eigenvalues of the covariance, all d of them, descending.
    pub eigenvalues: Vec<f64>,
    /// Fraction of total variance captured by each component.
    pub explained_ratio: Vec<f64>,
    /// out_dims x d component rows.
    pub components: Vec<Vec<f64>>,
}

/// Mean-center and project onto the leading principal components.
/// Component signs follow the convention that the largest-magnitude
/// loading is positive.
pub fn pca_project(points: &[Vec<f64>], out_dims: usize) -> Result<PcaResult> {
    if points.is_empty() {
        return Err(Error::Invalid("pca: no points".into()));
    }
    let d = points[0].len();
    if out_dims > d {
        return Err(Error::Invalid(format!(
            "pca: out_dims {out_dims} exceeds dimension {d}"
        )));
    }
    let n = points.len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            let xi = p[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += xi * (p[j] - mean[j]) / denom;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    let (eigenvalues, vecs) = crate::numerics::jacobi_eigen(&cov, d);
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let explained_ratio = eigenvalues
        .iter()
        .map(|v| if total > 0.0 { v.max(0.0) / total } else { 0.0 })
        .collect();

    let mut components = Vec::with_capacity(out_dims);
    for r in 0..out_dims {
        let mut comp = vecs[r * d..(r + 1) * d].to_vec();
        let mut max_idx = 0;
        for (i, v) in comp.iter().enumerate() {
            if v.abs() > comp[max_idx].abs() {
                max_idx = i;
            }
        }
        if comp[max_idx] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
        components.push(comp);
    }
    let coords = points
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|comp| {
                    comp.iter()
                        .zip(p.iter().zip(&mean))
                        .map(|(c, (x, m))| c * (x - m))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(PcaResult {
        coords,
        eigenvalues,
        explained_ratio,
        components,
    })
}

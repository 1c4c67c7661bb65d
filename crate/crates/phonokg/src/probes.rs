//! Supervised probes over character embeddings: a one-vs-rest ridge
//! classifier, a single-hidden-layer MLP, the modal-class baseline, and
//! confusion-matrix reporting.

use crate::error::{Error, Result};
use crate::numerics::{cholesky_solve, jacobi_eigen, seeded_rng, Adam};
use rand::seq::SliceRandom;
use rand::Rng;

/// Regularized least squares on one-hot targets, no centering and no
/// intercept: W = (X^T X + lambda I)^-1 X^T Y, solved by Cholesky, or by
/// eigenvalue pseudoinverse when the system is singular (lambda = 0).
pub fn ridge_solve_raw(
    x: &[Vec<f64>],
    y_onehot: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    if x.is_empty() || x.len() != y_onehot.len() {
        return Err(Error::Shape("ridge: X/Y row mismatch".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Invalid("ridge: lambda must be >= 0".into()));
    }
    let d = x[0].len();
    let k = y_onehot[0].len();
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d * k];
    for (row, target) in x.iter().zip(y_onehot) {
        for i in 0..d {
            for j in i..d {
                xtx[i * d + j] += row[i] * row[j];
            }
            for c in 0..k {
                xty[i * k + c] += row[i] * target[c];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            xtx[i * d + j] = xtx[j * d + i];
        }
        xtx[i * d + i] += lambda;
    }
    let w_flat = match cholesky_solve(&xtx, &xty, d, k) {
        Ok(w) => w,
        Err(_) => {
            // Singular normal equations: least-squares pseudoinverse via
            // the eigendecomposition of X^T X.
            let (vals, vecs) = jacobi_eigen(&xtx, d);
            let cutoff = vals.first().copied().unwrap_or(0.0).abs().max(1.0) * 1e-12;
            let mut w = vec![0.0; d * k];
            for (r, &lam) in vals.iter().enumerate() {
                if lam.abs() <= cutoff {
                    continue;
                }
                let v = &vecs[r * d..(r + 1) * d];
                for c in 0..k {
                    let vt_b: f64 = (0..d).map(|i| v[i] * xty[i * k + c]).sum();
                    for i in 0..d {
                        w[i * k + c] += v[i] * vt_b / lam;
                    }
                }
            }
            w
        }
    };
    Ok((0..d).map(|i| w_flat[i * k..(i + 1) * k].to_vec()).collect())
}

/// Ridge classifier: weights fit on centered data, unregularized
/// intercept restored from the means, argmax decision with index-order
/// tie-breaking.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    /// d x k weight matrix.
    pub weights: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
    pub n_classes: usize,
}

impl RidgeModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.intercept.clone();
        for (xi, wrow) in x.iter().zip(&self.weights) {
            for (sc, w) in s.iter_mut().zip(wrow) {
                *sc += xi * w;
            }
        }
        s
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn ridge_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, lambda: f64) -> Result<RidgeModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Shape("ridge: X/y row mismatch".into()));
    }
    let d = x[0].len();
    let n = x.len();
    let mut x_mean = vec![0.0; d];
    for row in x {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut y_mean = vec![0.0; n_classes];
    for &cls in y {
        y_mean[cls] += 1.0 / n as f64;
    }
    let xc: Vec<Vec<f64>> = x
        .iter()
        .map(|row| row.iter().zip(&x_mean).map(|(v, m)| v - m).collect())
        .collect();
    let yc: Vec<Vec<f64>> = y
        .iter()
        .map(|&cls| {
            (0..n_classes)
                .map(|c| if c == cls { 1.0 } else { 0.0 } - y_mean[c])
                .collect()
        })
        .collect();
    let weights = ridge_solve_raw(&xc, &yc, lambda)?;
    let mut intercept = y_mean;
    for (m, wrow) in x_mean.iter().zip(&weights) {
        for (b, w) in intercept.iter_mut().zip(wrow) {
            *b -= m * w;
        }
    }
    Ok(RidgeModel {
        weights,
        intercept,
        n_classes,
    })
}

/// MLP probe configuration. One rectified hidden layer, softmax output,
/// cross-entropy loss, full-batch Adam.
#[derive(Debug, Clone)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 42,
        }
    }
}

/// Trained MLP with a flat parameter buffer laid out [w1, b1, w2, b2];
/// w1 is hidden x d, w2 is classes x hidden.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub d: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub params: Vec<f64>,
}

impl MlpModel {
    fn new(d: usize, hidden: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let n = hidden * d + hidden + n_classes * hidden + n_classes;
        let mut params = vec![0.0; n];
        let s1 = 1.0 / (d as f64).sqrt();
        for v in params[..hidden * d].iter_mut() {
            *v = rng.gen_range(-s1..s1);
        }
        let s2 = 1.0 / (hidden as f64).sqrt();
        let off = hidden * d + hidden;
        for v in params[off..off + n_classes * hidden].iter_mut() {
            *v = rng.gen_range(-s2..s2);
        }
        Self {
            d,
            hidden,
            n_classes,
            params,
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.d;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        (b1, w2, b2)
    }

    /// Class scores before the softmax.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (b1o, w2o, b2o) = self.offsets();
        let mut hidden = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let mut z = self.params[b1o + h];
            let row = &self.params[h * self.d..(h + 1) * self.d];
            for (w, v) in row.iter().zip(x) {
                z += w * v;
            }
            hidden[h] = z.max(0.0);
        }
        let mut out = vec![0.0; self.n_classes];
        for c in 0..self.n_classes {
            let mut z = self.params[b2o + c];
            let row = &self.params[w2o + c * self.hidden..w2o + (c + 1) * self.hidden];
            for (w, v) in row.iter().zip(&hidden) {
                z += w * v;
            }
            out[c] = z;
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

/// Mean cross-entropy of the model on a dataset; exposed so the gradient
/// can be checked against finite differences.
pub fn mlp_loss(model: &MlpModel, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut total = 0.0;
    for (row, &cls) in x.iter().zip(y) {
        let logits = model.logits(row);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += (lse - logits[cls]) / n;
    }
    total
}

/// Backprop gradient of [`mlp_loss`].
pub fn mlp_grad(model: &MlpModel, x: &[Vec<f64>], y: &[usize]) -> Vec<f64> {
    let (b1o, w2o, b2o) = model.offsets();
    let mut grads = vec![0.0; model.params.len()];
    let inv_n = 1.0 / x.len() as f64;
    let mut hidden = vec![0.0; model.hidden];
    let mut pre = vec![0.0; model.hidden];
    for (row, &cls) in x.iter().zip(y) {
        for h in 0..model.hidden {
            let mut z = model.params[b1o + h];
            let wrow = &model.params[h * model.d..(h + 1) * model.d];
            for (w, v) in wrow.iter().zip(row) {
                z += w * v;
            }
            pre[h] = z;
            hidden[h] = z.max(0.0);
        }
        let mut logits = vec![0.0; model.n_classes];
        for c in 0..model.n_classes {
            let mut z = model.params[b2o + c];
            let wrow = &model.params[w2o + c * model.hidden..w2o + (c + 1) * model.hidden];
            for (w, v) in wrow.iter().zip(&hidden) {
                z += w * v;
            }
            logits[c] = z;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        // d loss / d logit_c = softmax_c - [c == cls]
        let mut dh = vec![0.0; model.hidden];
        for c in 0..model.n_classes {
            let mut delta = exps[c] / sum;
            if c == cls {
                delta -= 1.0;
            }
            delta *= inv_n;
            grads[b2o + c] += delta;
            let wrow = &model.params[w2o + c * model.hidden..w2o + (c + 1) * model.hidden];
            for h in 0..model.hidden {
                grads[w2o + c * model.hidden + h] += delta * hidden[h];
                dh[h] += delta * wrow[h];
            }
        }
        for h in 0..model.hidden {
            if pre[h] <= 0.0 {
                continue;
            }
            grads[b1o + h] += dh[h];
            let base = h * model.d;
            for (k, v) in row.iter().enumerate() {
                grads[base + k] += dh[h] * v;
            }
        }
    }
    grads
}

/// Fit the MLP with full-batch Adam for a fixed number of epochs;
/// deterministic under a fixed seed. Returns the model and the loss
/// trace. A non-finite loss aborts with a diagnostic.
pub fn mlp_fit(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    config: &MlpConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Shape("mlp: X/y row mismatch".into()));
    }
    let mut model = MlpModel::new(x[0].len(), config.hidden, n_classes, config.seed);
    let mut adam = Adam::new(model.params.len(), config.learning_rate);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = mlp_loss(&model, x, y);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0 });
        }
        trace.push(loss);
        let grads = mlp_grad(&model, x, y);
        adam.step(&mut model.params, &grads)?;
    }
    Ok((model, trace))
}

/// Accuracy of always predicting the training modal class; ties break on
/// the lower class index.
pub fn mode_baseline(train_labels: &[usize], test_labels: &[usize]) -> f64 {
    let modal = modal_class(train_labels);
    if test_labels.is_empty() {
        return 0.0;
    }
    test_labels.iter().filter(|&&l| l == modal).count() as f64 / test_labels.len() as f64
}

pub fn modal_class(labels: &[usize]) -> usize {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &count) in counts.iter().enumerate().skip(1) {
        if count > counts[best] {
            best = c;
        }
    }
    best
}

/// Exact-match accuracy plus the gold-rows confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEval {
    pub accuracy: f64,
    /// counts[gold][predicted]
    pub confusion: Vec<Vec<usize>>,
}

pub fn probe_eval(predictions: &[usize], gold: &[usize], n_classes: usize) -> Result<ProbeEval> {
    if predictions.len() != gold.len() {
        return Err(Error::Shape("probe eval: length mismatch".into()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut correct = 0usize;
    for (&p, &g) in predictions.iter().zip(gold) {
        confusion[g][p] += 1;
        if p == g {
            correct += 1;
        }
    }
    let accuracy = if gold.is_empty() {
        0.0
    } else {
        correct as f64 / gold.len() as f64
    };
    Ok(ProbeEval {
        accuracy,
        confusion,
    })
}

/// Seeded unstratified index split; train gets round(n * fraction).
pub fn split_train_test(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(seed);
    order.shuffle(&mut rng);
    let cut = ((n as f64) * train_fraction).round() as usize;
    let cut = cut.min(n);
    (order[..cut].to_vec(), order[cut..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff, relative_error};

    #[test]
    fn ridge_raw_matches_hand_normal_equations() {
        // X = [[1],[2]], Y = [[1],[0]], lambda = 0, uncentered:
        // W = (5)^-1 * 1 = 0.2.
        let w = ridge_solve_raw(&[vec![1.0], vec![2.0]], &[vec![1.0], vec![0.0]], 0.0).unwrap();
        assert!((w[0][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn identity_design_reproduces_targets() {
        let n = 4;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let y: Vec<usize> = (0..n).collect();
        let model = ridge_fit(&x, &y, n, 0.0).unwrap();
        for i in 0..n {
            assert_eq!(model.predict(&x[i]), i);
        }
    }

    #[test]
    fn huge_lambda_collapses_to_the_intercept_class() {
        let mut rng = seeded_rng(3);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..30).map(|i| if i < 20 { 0 } else { 1 }).collect();
        let model = ridge_fit(&x, &y, 2, 1e12).unwrap();
        let wnorm: f64 = model
            .weights
            .iter()
            .flat_map(|r| r.iter())
            .map(|w| w * w)
            .sum::<f64>()
            .sqrt();
        assert!(wnorm < 1e-6, "weights did not vanish: {wnorm}");
        // Everything lands on the majority class.
        for row in &x {
            assert_eq!(model.predict(row), 0);
        }
    }

    #[test]
    fn ridge_satisfies_the_normal_equations() {
        let mut rng = seeded_rng(5);
        let n = 40;
        let d = 6;
        let k = 3;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let lambda = 0.7;
        // Recompute on centered data exactly as ridge_fit does.
        let model = ridge_fit(&x, &y, k, lambda).unwrap();
        let mut x_mean = vec![0.0; d];
        for row in &x {
            for (m, v) in x_mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut y_mean = vec![0.0; k];
        for &cls in &y {
            y_mean[cls] += 1.0 / n as f64;
        }
        let mut lhs = vec![0.0; d * k]; // (X^T X + lambda I) W
        let mut rhs = vec![0.0; d * k]; // X^T Y
        for (row, &cls) in x.iter().zip(&y) {
            let xc: Vec<f64> = row.iter().zip(&x_mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for c in 0..k {
                    let yc = if c == cls { 1.0 } else { 0.0 } - y_mean[c];
                    rhs[i * k + c] += xc[i] * yc;
                }
            }
            for i in 0..d {
                for j in 0..d {
                    for c in 0..k {
                        lhs[i * k + c] += xc[i] * xc[j] * model.weights[j][c];
                    }
                }
            }
        }
        for i in 0..d {
            for c in 0..k {
                lhs[i * k + c] += lambda * model.weights[i][c];
            }
        }
        let num: f64 = lhs
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num <= 1e-6 * den, "residual {num} vs {den}");
    }

    #[test]
    fn mlp_solves_xor() {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let y = vec![0, 1, 1, 0];
        let cfg = MlpConfig {
            hidden: 16,
            epochs: 800,
            learning_rate: 0.02,
            seed: 7,
        };
        let (model, trace) = mlp_fit(&x, &y, 2, &cfg).unwrap();
        for (row, &cls) in x.iter().zip(&y) {
            assert_eq!(model.predict(row), cls);
        }
        assert!(trace.last().unwrap() < &0.1);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences_at_init() {
        let mut rng = seeded_rng(19);
        let x: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..12).map(|_| rng.gen_range(0..3)).collect();
        let mut model = MlpModel::new(5, 8, 3, 4);
        let analytic = mlp_grad(&model, &x, &y);
        let base = model.params.clone();
        let numeric = finite_diff(
            |p| {
                model.params.copy_from_slice(p);
                mlp_loss(&model, &x, &y)
            },
            &base,
            1e-5,
        );
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn mlp_single_class_is_trivially_perfect() {
        let x = vec![vec![0.3, -0.2], vec![1.0, 0.1], vec![-0.5, 0.4]];
        let y = vec![0, 0, 0];
        let (model, _) = mlp_fit(&x, &y, 1, &MlpConfig::default()).unwrap();
        assert!(x.iter().all(|row| model.predict(row) == 0));
    }

    #[test]
    fn mlp_loss_decreases_early_on_separable_data() {
        let mut rng = seeded_rng(23);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..40 {
            x.push(vec![rng.gen_range(1.0..2.0), rng.gen_range(-0.5..0.5)]);
            y.push(0);
            x.push(vec![rng.gen_range(-2.0..-1.0), rng.gen_range(-0.5..0.5)]);
            y.push(1);
        }
        let cfg = MlpConfig {
            hidden: 8,
            epochs: 12,
            learning_rate: 0.01,
            seed: 2,
        };
        let (_, trace) = mlp_fit(&x, &y, 2, &cfg).unwrap();
        let first = trace[..3].iter().sum::<f64>() / 3.0;
        let last = trace[trace.len() - 3..].iter().sum::<f64>() / 3.0;
        assert!(last < first);
    }

    #[test]
    fn baseline_matches_hand_count() {
        // train [A,A,B] -> predict A; test [A,B,B] -> accuracy 1/3.
        let acc = mode_baseline(&[0, 0, 1], &[0, 1, 1]);
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_on_single_class_is_perfect() {
        assert_eq!(mode_baseline(&[2, 2, 2], &[2, 2]), 1.0);
    }

    #[test]
    fn baseline_equals_test_frequency_of_modal_class() {
        let mut rng = seeded_rng(40);
        for _ in 0..20 {
            let train: Vec<usize> = (0..50).map(|_| rng.gen_range(0..4)).collect();
            let test: Vec<usize> = (0..30).map(|_| rng.gen_range(0..4)).collect();
            let modal = modal_class(&train);
            let expected =
                test.iter().filter(|&&l| l == modal).count() as f64 / test.len() as f64;
            assert_eq!(mode_baseline(&train, &test), expected);
        }
    }

    #[test]
    fn probe_eval_counts_and_sums_check_out() {
        // gold [0,1,1], pred [0,1,0]: accuracy 2/3, matrix [[1,0],[1,1]].
        let ev = probe_eval(&[0, 1, 0], &[0, 1, 1], 2).unwrap();
        assert!((ev.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(ev.confusion, vec![vec![1, 0], vec![1, 1]]);

        // Perfect predictions give a diagonal matrix.
        let ev = probe_eval(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(ev.accuracy, 1.0);
        for (g, row) in ev.confusion.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                assert_eq!(c, usize::from(g == p));
            }
        }

        // All-one-class predictions put every count in one column.
        let ev = probe_eval(&[1, 1, 1], &[0, 1, 2], 3).unwrap();
        for row in &ev.confusion {
            assert_eq!(row[0], 0);
            assert_eq!(row[2], 0);
        }

        // Row sums equal gold class counts; total equals test size.
        let gold = [0, 2, 1, 1, 2, 2];
        let pred = [0, 1, 1, 0, 2, 2];
        let ev = probe_eval(&pred, &gold, 3).unwrap();
        let total: usize = ev.confusion.iter().flatten().sum();
        assert_eq!(total, gold.len());
        for c in 0..3 {
            let row_sum: usize = ev.confusion[c].iter().sum();
            assert_eq!(row_sum, gold.iter().filter(|&&g| g == c).count());
        }
    }

    #[test]
    fn split_respects_fraction_and_seed() {
        let (train, test) = split_train_test(100, 0.67, 9);
        assert_eq!(train.len(), 67);
        assert_eq!(test.len(), 33);
        let (t2, _) = split_train_test(100, 0.67, 9);
        assert_eq!(train, t2);
        let (t3, _) = split_train_test(100, 0.67, 10);
        assert_ne!(train, t3);
    }
}

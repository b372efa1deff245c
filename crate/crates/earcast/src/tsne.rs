//! Exact (non-approximate) t-SNE for visualizing device embeddings, plus a
//! silhouette score for judging cluster quality.
//!
//! The implementation follows the reference algorithm: perplexity-calibrated
//! Gaussian affinities, symmetrized and normalized; a Student-t kernel in
//! the plane; KL divergence minimized by gradient descent with momentum
//! 0.5→0.8, adaptive per-coordinate gains, early exaggeration ×12 for the
//! first 250 of 1000 iterations, and PCA initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::DeviceEmbedding;
use crate::error::EmbedError;
use crate::util::randn;

#[derive(Debug, Clone)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub n_iter: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// None picks `max(50, n/exaggeration)`.
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self {
            perplexity: 15.0,
            n_iter: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    /// (x, y, label) per input point, in input order.
    pub points: Vec<(f64, f64, String)>,
    /// KL divergence against the true (un-exaggerated) affinities, one
    /// entry per iteration.
    pub kl_trace: Vec<f64>,
    /// Iteration at which early exaggeration ended.
    pub exaggeration_end: usize,
}

/// Project device embeddings to the plane with default options.
pub fn project_embeddings_2d(
    embeddings: &[DeviceEmbedding],
    perplexity: f64,
) -> Result<TsneResult, EmbedError> {
    let opts = TsneOptions {
        perplexity,
        ..TsneOptions::default()
    };
    let data: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.vector.iter().map(|&v| v as f64).collect())
        .collect();
    let labels: Vec<String> = embeddings.iter().map(|e| e.device_name.clone()).collect();
    tsne(&data, &labels, &opts)
}

/// Full-control entry point on raw vectors.
pub fn tsne(
    data: &[Vec<f64>],
    labels: &[String],
    opts: &TsneOptions,
) -> Result<TsneResult, EmbedError> {
    let n = data.len();
    let need = (3.0 * opts.perplexity).ceil() as usize;
    if n < need {
        return Err(EmbedError::TooFewPoints {
            perplexity: opts.perplexity,
            need,
            got: n,
        });
    }
    assert_eq!(labels.len(), n);

    let d2 = pairwise_sq_dists(data);
    let p = joint_affinities(&d2, n, opts.perplexity);

    // PCA initialization, scaled to a tight start
    let mut y = pca_2d(data, opts.seed);
    let std0 = {
        let mean: f64 = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        (y.iter().map(|p| (p[0] - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let scale = if std0 > 0.0 { 1e-4 / std0 } else { 1.0 };
    for p in &mut y {
        p[0] *= scale;
        p[1] *= scale;
    }

    let lr = opts
        .learning_rate
        .unwrap_or_else(|| (n as f64 / opts.exaggeration).max(50.0));
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(opts.n_iter);

    let mut qu = vec![0.0f64; n * n]; // unnormalized student-t kernel
    for iter in 0..opts.n_iter {
        // low-dimensional affinities
        let mut z = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                qu[i * n + j] = q;
                qu[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        let z = z.max(1e-12);

        let exaggerating = iter < opts.exaggeration_iters;
        let ex = if exaggerating { opts.exaggeration } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };

        // gradient: 4 Σ_j (p_ij·ex − q_ij) q_ij^u (y_i − y_j)
        for i in 0..n {
            let mut g = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pij = p[i * n + j] * ex;
                let quij = qu[i * n + j];
                let coeff = 4.0 * (pij - quij / z) * quij;
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                let same_sign = g[c].signum() == velocity[i][c].signum();
                gains[i][c] = if same_sign {
                    (gains[i][c] * 0.8).max(0.01)
                } else {
                    gains[i][c] + 0.2
                };
                velocity[i][c] = momentum * velocity[i][c] - lr * gains[i][c] * g[c];
            }
        }
        let mut mean = [0.0f64; 2];
        for i in 0..n {
            y[i][0] += velocity[i][0];
            y[i][1] += velocity[i][1];
            mean[0] += y[i][0];
            mean[1] += y[i][1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for p in &mut y {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }

        // KL against the true affinities
        let mut kl = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pij = p[i * n + j];
                if pij > 1e-12 {
                    let qij = (qu[i * n + j] / z).max(1e-12);
                    kl += pij * (pij / qij).ln();
                }
            }
        }
        kl_trace.push(kl);
    }

    Ok(TsneResult {
        points: y
            .iter()
            .zip(labels)
            .map(|(p, l)| (p[0], p[1], l.clone()))
            .collect(),
        kl_trace,
        exaggeration_end: opts.exaggeration_iters,
    })
}

fn pairwise_sq_dists(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut d2 = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let mut acc = 0.0;
            for (a, b) in data[i].iter().zip(&data[j]) {
                let d = a - b;
                acc += d * d;
            }
            d2[i * n + j] = acc;
            d2[j * n + i] = acc;
        }
    }
    d2
}

/// Row-wise perplexity calibration followed by symmetrization.
fn joint_affinities(d2: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target_entropy = perplexity.ln();
    let mut p_cond = vec![0.0f64; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d2[i * n + j]).collect();
        let shift = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut beta = 1.0f64;
        let mut beta_lo = 0.0f64;
        let mut beta_hi = f64::INFINITY;
        let mut probs = vec![0.0f64; row.len()];
        for _ in 0..50 {
            let mut sum = 0.0f64;
            let mut weighted = 0.0f64;
            for (k, &d) in row.iter().enumerate() {
                let e = (-(d - shift) * beta).exp();
                probs[k] = e;
                sum += e;
                weighted += (d - shift) * e;
            }
            let sum = sum.max(1e-300);
            let entropy = sum.ln() + beta * weighted / sum;
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_lo = beta;
                beta = if beta_hi.is_finite() {
                    (beta + beta_hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                beta_hi = beta;
                beta = (beta + beta_lo) / 2.0;
            }
        }
        let sum: f64 = probs.iter().sum::<f64>().max(1e-300);
        let mut k = 0;
        for j in 0..n {
            if j == i {
                continue;
            }
            p_cond[i * n + j] = probs[k] / sum;
            k += 1;
        }
    }
    // symmetrize and normalize to a joint distribution
    let mut p = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((p_cond[i * n + j] + p_cond[j * n + i]) / (2.0 * n as f64))
                .max(1e-12);
        }
    }
    for i in 0..n {
        p[i * n + i] = 0.0;
    }
    p
}

/// Top-2 principal components via power iteration with deflation.
fn pca_2d(data: &[Vec<f64>], seed: u64) -> Vec<[f64; 2]> {
    let n = data.len();
    let d = data[0].len();
    let mut mean = vec![0.0f64; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7a_51));
    let mut components: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|_| randn(&mut rng)).collect();
        for _ in 0..40 {
            // u = X v ; v' = Xᵀ u, orthogonalized against found components
            let u: Vec<f64> = centered
                .iter()
                .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
            let mut v_new = vec![0.0f64; d];
            for (row, &ui) in centered.iter().zip(&u) {
                for (vn, a) in v_new.iter_mut().zip(row) {
                    *vn += a * ui;
                }
            }
            for comp in &components {
                let dot: f64 = v_new.iter().zip(comp).map(|(a, b)| a * b).sum();
                for (vn, c) in v_new.iter_mut().zip(comp) {
                    *vn -= dot * c;
                }
            }
            let norm = v_new.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-30);
            for x in &mut v_new {
                *x /= norm;
            }
            v = v_new;
        }
        components.push(v);
    }

    centered
        .iter()
        .map(|row| {
            let x: f64 = row.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
            let y: f64 = row.iter().zip(&components[1]).map(|(a, b)| a * b).sum();
            [x, y]
        })
        .collect()
}

/// Mean silhouette score of 2-D points under the given labels. Ranges in
/// [-1, 1]; higher means tighter, better-separated clusters.
pub fn silhouette_score(points: &[(f64, f64)], labels: &[String]) -> f64 {
    let n = points.len();
    assert_eq!(labels.len(), n);
    let mut clusters: Vec<&String> = labels.iter().collect();
    clusters.sort();
    clusters.dedup();
    if clusters.len() < 2 {
        return 0.0;
    }
    let dist = |a: usize, b: usize| {
        let dx = points[a].0 - points[b].0;
        let dy = points[a].1 - points[b].1;
        (dx * dx + dy * dy).sqrt()
    };
    let mut total = 0.0f64;
    for i in 0..n {
        let mut sums: std::collections::BTreeMap<&String, (f64, usize)> =
            std::collections::BTreeMap::new();
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = sums.entry(&labels[j]).or_insert((0.0, 0));
            e.0 += dist(i, j);
            e.1 += 1;
        }
        let own = &labels[i];
        let a = sums
            .get(own)
            .filter(|(_, c)| *c > 0)
            .map(|(s, c)| s / *c as f64)
            .unwrap_or(0.0);
        let b = sums
            .iter()
            .filter(|(l, _)| **l != own)
            .map(|(_, (s, c))| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b).max(1e-30);
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Three well-separated Gaussian blobs in 8 dimensions.
    fn blobs(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..n_per {
                let mut v = vec![0.0f64; 8];
                for (k, x) in v.iter_mut().enumerate() {
                    *x = randn(&mut rng) * 0.3 + if k % 3 == c { 8.0 } else { 0.0 };
                }
                data.push(v);
                labels.push(format!("blob{c}"));
            }
        }
        (data, labels)
    }

    #[test]
    fn rejects_too_few_points() {
        let (data, labels) = blobs(3, 0);
        let opts = TsneOptions {
            perplexity: 15.0,
            ..TsneOptions::default()
        };
        assert!(matches!(
            tsne(&data, &labels, &opts),
            Err(EmbedError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn kl_is_non_increasing_after_exaggeration() {
        let (data, labels) = blobs(20, 1);
        let opts = TsneOptions {
            n_iter: 600,
            ..TsneOptions::default()
        };
        let result = tsne(&data, &labels, &opts).unwrap();
        assert_eq!(result.kl_trace.len(), 600);
        let trace = &result.kl_trace[result.exaggeration_end..];
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "KL increased after exaggeration: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn blobs_cluster_with_positive_silhouette() {
        let (data, labels) = blobs(20, 2);
        let result = tsne(&data, &labels, &TsneOptions::default()).unwrap();
        let pts: Vec<(f64, f64)> = result.points.iter().map(|p| (p.0, p.1)).collect();
        let score = silhouette_score(&pts, &labels);
        assert!(score > 0.5, "silhouette {score}");
    }

    #[test]
    fn duplicated_points_stay_adjacent() {
        let (mut data, mut labels) = blobs(16, 3);
        // duplicate a point exactly
        data.push(data[5].clone());
        labels.push(labels[5].clone());
        let result = tsne(&data, &labels, &TsneOptions::default()).unwrap();
        let n = result.points.len();
        let d = |a: usize, b: usize| {
            let dx = result.points[a].0 - result.points[b].0;
            let dy = result.points[a].1 - result.points[b].1;
            (dx * dx + dy * dy).sqrt()
        };
        let dup_dist = d(5, n - 1);
        let mut all: Vec<f64> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                all.push(d(i, j));
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cutoff = all[(all.len() as f64 * 0.01).ceil() as usize];
        assert!(
            dup_dist <= cutoff,
            "duplicates ended up {dup_dist} apart; 1% cutoff {cutoff}"
        );
    }

    #[test]
    fn silhouette_is_rotation_invariant() {
        let (data, labels) = blobs(16, 4);
        let base = tsne(&data, &labels, &TsneOptions::default()).unwrap();
        let pts: Vec<(f64, f64)> = base.points.iter().map(|p| (p.0, p.1)).collect();
        let s_base = silhouette_score(&pts, &labels);

        // apply a fixed orthogonal transform: many Givens rotations
        let mut rotated = data.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = rotated[0].len();
        for _ in 0..200 {
            let a = rng.random_range(0..d);
            let mut b = rng.random_range(0..d);
            if a == b {
                b = (b + 1) % d;
            }
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (sin, cos) = theta.sin_cos();
            for row in &mut rotated {
                let (x, y) = (row[a], row[b]);
                row[a] = cos * x - sin * y;
                row[b] = sin * x + cos * y;
            }
        }
        let rot = tsne(&rotated, &labels, &TsneOptions::default()).unwrap();
        let pts_rot: Vec<(f64, f64)> = rot.points.iter().map(|p| (p.0, p.1)).collect();
        let s_rot = silhouette_score(&pts_rot, &labels);
        assert!(
            (s_base - s_rot).abs() <= 0.05,
            "silhouette moved under rotation: {s_base} vs {s_rot}"
        );
    }

    #[test]
    fn silhouette_known_geometry() {
        // two tight clusters far apart: score near 1
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..5 {
            pts.push((i as f64 * 0.01, 0.0));
            labels.push("a".to_string());
            pts.push((100.0 + i as f64 * 0.01, 0.0));
            labels.push("b".to_string());
        }
        let s = silhouette_score(&pts, &labels);
        assert!(s > 0.99, "score {s}");
    }
}

//! Link-inference attackers and privacy/utility metrics.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NodePair;
use crate::scalar::Scalar;

/// Row-normalize an embedding; zero rows stay zero.
pub fn normalize_rows<S: Scalar>(x: &DMatrix<S>) -> DMatrix<S> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > S::zero() {
            row /= norm;
        }
    }
    out
}

fn sigmoid<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

fn check_pairs<S: Scalar>(x: &DMatrix<S>, pairs: &[NodePair]) -> Result<()> {
    let n = x.nrows();
    for p in pairs {
        if p.j() >= n {
            return Err(Error::IndexOutOfRange {
                index: p.j(),
                nodes: n,
            });
        }
    }
    Ok(())
}

/// Unsupervised attack: sigmoid of the cosine similarity of each pair.
/// Pairs touching a zero-norm row score sigmoid(0) = 0.5.
pub fn similarity_attack<S: Scalar>(x: &DMatrix<S>, pairs: &[NodePair]) -> Result<Vec<S>> {
    check_pairs(x, pairs)?;
    let xn = normalize_rows(x);
    Ok(pairs
        .iter()
        .map(|p| sigmoid(xn.row(p.i()).dot(&xn.row(p.j()))))
        .collect())
}

/// Average precision of a descending-score ranking. Ties keep stable input
/// order. Errors without at least one positive label.
pub fn average_precision<S: Scalar>(scores: &[S], labels: &[u8]) -> Result<S> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            left: scores.len().to_string(),
            right: labels.len().to_string(),
        });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::NoPositiveLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = S::zero();
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            hits += 1;
            sum += S::of_usize(hits) / S::of_usize(rank + 1);
        }
    }
    Ok(sum / S::of_usize(positives))
}

/// Per-pair elementwise product of the row-normalized embeddings.
pub fn hadamard_features<S: Scalar>(x: &DMatrix<S>, pairs: &[NodePair]) -> Result<DMatrix<S>> {
    check_pairs(x, pairs)?;
    let xn = normalize_rows(x);
    let k = x.ncols();
    let mut out = DMatrix::zeros(pairs.len(), k);
    for (r, p) in pairs.iter().enumerate() {
        for c in 0..k {
            out[(r, c)] = xn[(p.i(), c)] * xn[(p.j(), c)];
        }
    }
    Ok(out)
}

/// Binary logistic regression trained by deterministic full-batch gradient
/// descent (zero initialization, fixed schedule).
pub struct LogisticRegression<S> {
    /// Feature weights, one per column.
    pub weights: DVector<S>,
    pub bias: S,
}

impl<S: Scalar> LogisticRegression<S> {
    /// The similarity-attack special case: bias 0, every weight 1. With
    /// Hadamard features this reproduces sigmoid(cosine) exactly.
    pub fn frozen_unit(k: usize) -> Self {
        Self {
            weights: DVector::from_element(k, S::one()),
            bias: S::zero(),
        }
    }

    pub fn train(features: &DMatrix<S>, labels: &[u8], iterations: usize, rate: S) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                left: n.to_string(),
                right: labels.len().to_string(),
            });
        }
        if labels.iter().all(|&l| l == 1) || labels.iter().all(|&l| l == 0) {
            return Err(Error::SingleClass);
        }
        let k = features.ncols();
        let mut model = Self {
            weights: DVector::zeros(k),
            bias: S::zero(),
        };
        let inv_n = S::one() / S::of_usize(n);
        for _ in 0..iterations {
            let mut gw = DVector::zeros(k);
            let mut gb = S::zero();
            for i in 0..n {
                let z = features.row(i).tr_dot(&model.weights) + model.bias;
                let err = sigmoid(z) - S::of(labels[i] as f64);
                for c in 0..k {
                    gw[c] += err * features[(i, c)];
                }
                gb += err;
            }
            model.weights.axpy(-rate * inv_n, &gw, S::one());
            model.bias -= rate * inv_n * gb;
        }
        Ok(model)
    }

    pub fn predict_proba(&self, features: &DMatrix<S>) -> Vec<S> {
        (0..features.nrows())
            .map(|i| sigmoid(features.row(i).tr_dot(&self.weights) + self.bias))
            .collect()
    }
}

/// Supervised (Type-II) attack: logistic regression over Hadamard features
/// of pairs with known status, scored on the unknown pairs. Deterministic;
/// the seed is reserved for pluggable stochastic classifiers.
pub fn supervised_attack<S: Scalar>(
    x: &DMatrix<S>,
    known: &[(NodePair, u8)],
    unknown: &[NodePair],
    _seed: u64,
) -> Result<Vec<S>> {
    let known_pairs: Vec<NodePair> = known.iter().map(|(p, _)| *p).collect();
    let labels: Vec<u8> = known.iter().map(|(_, l)| *l).collect();
    let train = hadamard_features(x, &known_pairs)?;
    let model = LogisticRegression::train(&train, &labels, 500, S::of(1.0))?;
    let test = hadamard_features(x, unknown)?;
    Ok(model.predict_proba(&test))
}

/// The frozen-weights specialization of the supervised attack, provably
/// identical to the similarity attack.
pub fn supervised_attack_frozen<S: Scalar>(
    x: &DMatrix<S>,
    unknown: &[NodePair],
) -> Result<Vec<S>> {
    let feats = hadamard_features(x, unknown)?;
    let model = LogisticRegression::frozen_unit(x.ncols());
    Ok(model.predict_proba(&feats))
}

fn softmax_rows<S: Scalar>(z: &mut DMatrix<S>) {
    for mut row in z.row_iter_mut() {
        let max = row.iter().fold(S::of(f64::NEG_INFINITY), |a, &b| if b > a { b } else { a });
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Multinomial logistic regression on the embedding rows with a 70/30
/// (configurable) split; returns macro-F1 over the classes present in the
/// test split. Utility loss is reported as 1 - F1 by callers.
pub fn node_classification_f1<S: Scalar>(
    x: &DMatrix<S>,
    labels: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<S> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            left: n.to_string(),
            right: labels.len().to_string(),
        });
    }
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::InvalidFraction {
            fraction: train_fraction,
        });
    }
    let classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = ((n as f64) * train_fraction).round() as usize;
    let (train_idx, test_idx) = order.split_at(cut);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::DegenerateSplit {
            reason: "empty train or test split".into(),
        });
    }
    let train_classes: std::collections::BTreeSet<usize> =
        train_idx.iter().map(|&i| labels[i]).collect();
    if train_classes.len() < 2 {
        return Err(Error::DegenerateSplit {
            reason: "training split contains fewer than two classes".into(),
        });
    }
    let test_classes: std::collections::BTreeSet<usize> =
        test_idx.iter().map(|&i| labels[i]).collect();
    if test_classes.len() < 2 {
        return Err(Error::DegenerateSplit {
            reason: "test split contains fewer than two classes".into(),
        });
    }

    let k = x.ncols();
    let nt = train_idx.len();
    let mut feats = DMatrix::zeros(nt, k);
    for (r, &i) in train_idx.iter().enumerate() {
        for c in 0..k {
            feats[(r, c)] = x[(i, c)];
        }
    }
    // Weights (k x classes) and bias row, zero init, full-batch GD.
    let mut w = DMatrix::<S>::zeros(k, classes);
    let mut b = DVector::<S>::zeros(classes);
    let rate = S::of(1.0);
    let inv_n = S::one() / S::of_usize(nt);
    for _ in 0..300 {
        let mut probs = &feats * &w;
        for r in 0..nt {
            for c in 0..classes {
                probs[(r, c)] += b[c];
            }
        }
        softmax_rows(&mut probs);
        for (r, &i) in train_idx.iter().enumerate() {
            probs[(r, labels[i])] -= S::one();
        }
        let gw = feats.transpose() * &probs;
        w -= gw * (rate * inv_n);
        for c in 0..classes {
            let gb: S = (0..nt).map(|r| probs[(r, c)]).sum();
            b[c] -= rate * inv_n * gb;
        }
    }

    // Macro-F1 over classes present in the test split.
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fne = vec![0usize; classes];
    for &i in test_idx {
        let mut best = 0usize;
        let mut best_v = S::of(f64::NEG_INFINITY);
        for c in 0..classes {
            let z = x.row(i).tr_dot(&w.column(c).clone_owned()) + b[c];
            if z > best_v {
                best_v = z;
                best = c;
            }
        }
        if best == labels[i] {
            tp[labels[i]] += 1;
        } else {
            fp[best] += 1;
            fne[labels[i]] += 1;
        }
    }
    let mut f1_sum = S::zero();
    for &c in &test_classes {
        let denom = 2 * tp[c] + fp[c] + fne[c];
        if denom > 0 {
            f1_sum += S::of_usize(2 * tp[c]) / S::of_usize(denom);
        }
    }
    Ok(f1_sum / S::of_usize(test_classes.len()))
}

/// Seeded k-means with deterministic farthest-point initialization.
pub fn kmeans<S: Scalar>(x: &DMatrix<S>, clusters: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidClusterCount { clusters, nodes: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<usize> = Vec::with_capacity(clusters);
    centers.push(rand::Rng::random_range(&mut rng, 0..n));
    let mut dist: Vec<S> = (0..n)
        .map(|i| (x.row(i) - x.row(centers[0])).norm_squared())
        .collect();
    while centers.len() < clusters {
        // Farthest point from the chosen centers; ties to lowest index.
        let mut best = 0usize;
        let mut best_d = S::of(-1.0);
        for i in 0..n {
            if dist[i] > best_d {
                best_d = dist[i];
                best = i;
            }
        }
        centers.push(best);
        for i in 0..n {
            let d = (x.row(i) - x.row(best)).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    let k = x.ncols();
    let mut means: Vec<DVector<S>> = centers
        .iter()
        .map(|&c| x.row(c).transpose())
        .collect();
    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = S::of(f64::INFINITY);
            for (c, mean) in means.iter().enumerate() {
                let d = (x.row(i).transpose() - mean).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; clusters];
        let mut sums = vec![DVector::<S>::zeros(k); clusters];
        for i in 0..n {
            counts[assign[i]] += 1;
            sums[assign[i]] += x.row(i).transpose();
        }
        for c in 0..clusters {
            if counts[c] > 0 {
                means[c] = &sums[c] / S::of_usize(counts[c]);
            }
        }
        if !changed {
            break;
        }
    }
    Ok(assign)
}

/// Normalized mutual information (arithmetic-mean normalization) between
/// two label vectors of equal length.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            left: a.len().to_string(),
            right: b.len().to_string(),
        });
    }
    let n = a.len() as f64;
    let ka = a.iter().max().map(|m| m + 1).unwrap_or(0);
    let kb = b.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let ca: Vec<usize> = (0..ka).map(|i| table[i].iter().sum()).collect();
    let cb: Vec<usize> = (0..kb).map(|j| (0..ka).map(|i| table[i][j]).sum()).collect();
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij / ((ca[i] as f64 / n) * (cb[j] as f64 / n))).ln();
            }
        }
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// NMI between the k-means clusterings of two embeddings of the same nodes.
pub fn clustering_nmi<S: Scalar>(
    x: &DMatrix<S>,
    x_prime: &DMatrix<S>,
    clusters: usize,
    seed: u64,
) -> Result<f64> {
    if x.nrows() != x_prime.nrows() {
        return Err(Error::ShapeMismatch {
            left: x.nrows().to_string(),
            right: x_prime.nrows().to_string(),
        });
    }
    if clusters < 2 {
        return Err(Error::InvalidClusterCount {
            clusters,
            nodes: x.nrows(),
        });
    }
    let a = kmeans(x, clusters, seed)?;
    let b = kmeans(x_prime, clusters, seed)?;
    nmi(&a, &b)
}

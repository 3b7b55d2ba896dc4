//! Correlation graph assembly: similarity, k-NN edge selection, tanh weights.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_weights, center, centered_cosine, mean_feature, FeatureVector, FeatureWeights};
use crate::model::{CorrelationGraph, Slot, WindowConfig};
use crate::scalar::Scalar;

/// Degrees below this are reported as a degenerate graph.
pub const DEGREE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SimilarityParams<T: Scalar> {
    /// Sharpness of the tanh transfer, > 0.
    pub alpha1: T,
    /// Cutoff similarity mapped to weight 1/2, in (-1, 1).
    pub alpha2: T,
    /// Neighbors per node, >= 1.
    pub k: usize,
}

impl<T: Scalar> Default for SimilarityParams<T> {
    fn default() -> Self {
        Self { alpha1: T::of(20.0), alpha2: T::zero(), k: 200 }
    }
}

impl<T: Scalar> SimilarityParams<T> {
    pub fn new(alpha1: T, alpha2: T, k: usize) -> Result<Self> {
        let p = Self { alpha1, alpha2, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > T::zero()) || !self.alpha1.is_finite() {
            return Err(Error::range("alpha_1", self.alpha1, "(0, inf)"));
        }
        if !(self.alpha2 > -T::one() && self.alpha2 < T::one()) {
            return Err(Error::range("alpha_2", self.alpha2, "(-1, 1)"));
        }
        if self.k == 0 {
            return Err(Error::range("k", 0, "[1, inf)"));
        }
        Ok(())
    }
}

/// `tanh(alpha1 (m - alpha2)) / 2 + 1/2`.
///
/// Evaluated as the logistic function of `2 alpha1 (m - alpha2)`, which keeps
/// the lower tail representable. The result is capped at the largest value
/// below one so that saturated edges stay inside `[0, 1)`.
#[inline]
pub fn edge_weight<T: Scalar>(m: T, p: &SimilarityParams<T>) -> T {
    let x = p.alpha1 * (m - p.alpha2);
    let two = T::one() + T::one();
    let w = T::one() / (T::one() + (-two * x).exp());
    w.min(T::one() - T::epsilon() / two)
}

/// Dense N×N adjusted-cosine matrix of weighted features with a zero
/// diagonal. Degenerate pairs get similarity 0.
pub fn similarity_matrix<T: Scalar>(weighted: &[FeatureVector<T>]) -> Result<Vec<T>> {
    let n = weighted.len();
    let f_bar = mean_feature(weighted)?;
    let centered: Vec<(Vec<T>, T)> = weighted.iter().map(|f| center(&f.values, &f_bar.values)).collect();
    let mut sim = vec![T::zero(); n * n];
    for i in 0..n {
        let (ci, ni) = &centered[i];
        for j in (i + 1)..n {
            let (cj, nj) = &centered[j];
            let m = centered_cosine(ci, *ni, cj, *nj).unwrap_or_else(T::zero);
            sim[i * n + j] = m;
            sim[j * n + i] = m;
        }
    }
    Ok(sim)
}

/// Unordered pairs `(i, j)`, `i < j`, where either endpoint ranks the other
/// among its `k` most similar nodes. Ties rank the lower index first. With
/// `k >= n - 1` every pair is selected.
pub fn knn_neighbors<T: Scalar>(sim: &[T], n: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    let mask = knn_mask(sim, n, k)?;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if mask[i * n + j] {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Symmetric selection mask behind [`knn_neighbors`].
fn knn_mask<T: Scalar>(sim: &[T], n: usize, k: usize) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(Error::Contract("k-NN requires k >= 1".into()));
    }
    if sim.len() != n * n {
        return Err(Error::Contract(format!("similarity matrix has {} entries, expected {}", sim.len(), n * n)));
    }
    let mut mask = vec![false; n * n];
    if k + 1 >= n {
        for i in 0..n {
            for j in 0..n {
                mask[i * n + j] = i != j;
            }
        }
        return Ok(mask);
    }
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let row = &sim[i * n..(i + 1) * n];
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let rank = |a: &usize, b: &usize| match row[*b].partial_cmp(&row[*a]) {
            Some(Ordering::Equal) | None => a.cmp(b),
            Some(o) => o,
        };
        order.select_nth_unstable_by(k - 1, rank);
        for &j in &order[..k] {
            mask[i * n + j] = true;
            mask[j * n + i] = true;
        }
    }
    Ok(mask)
}

/// Builds the correlation graph of one window from unweighted node features.
pub fn build_graph<T: Scalar>(
    anchor: Slot,
    window: &WindowConfig,
    labels: Vec<Option<T>>,
    features: &[FeatureVector<T>],
    weights: &FeatureWeights<T>,
    params: &SimilarityParams<T>,
) -> Result<CorrelationGraph<T>> {
    if features.len() != window.n() {
        return Err(Error::Contract(format!("window has {} nodes but got {} feature vectors", window.n(), features.len())));
    }
    let weighted = weigh(features, weights)?;
    build_graph_weighted(anchor, Some(*window), labels, &weighted, params)
}

/// Builds a graph over an arbitrary node set, not tied to a sliding window.
pub fn build_free_graph<T: Scalar>(
    labels: Vec<Option<T>>,
    features: &[FeatureVector<T>],
    weights: &FeatureWeights<T>,
    params: &SimilarityParams<T>,
) -> Result<CorrelationGraph<T>> {
    let weighted = weigh(features, weights)?;
    build_graph_weighted(0, None, labels, &weighted, params)
}

fn weigh<T: Scalar>(features: &[FeatureVector<T>], weights: &FeatureWeights<T>) -> Result<Vec<FeatureVector<T>>> {
    features.iter().map(|q| apply_weights(q, weights)).collect()
}

/// Graph assembly from features that already carry their weights.
pub fn build_graph_weighted<T: Scalar>(
    anchor: Slot,
    window: Option<WindowConfig>,
    labels: Vec<Option<T>>,
    weighted: &[FeatureVector<T>],
    params: &SimilarityParams<T>,
) -> Result<CorrelationGraph<T>> {
    params.validate()?;
    let n = weighted.len();
    if labels.len() != n {
        return Err(Error::Contract(format!("{n} feature vectors but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::Contract("a correlation graph needs at least two nodes".into()));
    }
    let sim = similarity_matrix(weighted)?;
    let mask = knn_mask(&sim, n, params.k)?;
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if mask[i * n + j] {
                let wij = edge_weight(sim[i * n + j], params);
                w[i * n + j] = wij;
                w[j * n + i] = wij;
            }
        }
    }
    let degrees: Vec<T> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().copied().sum()).collect();
    if let Some((node, &d)) = degrees.iter().enumerate().find(|(_, &d)| !(d >= T::of(DEGREE_FLOOR))) {
        return Err(Error::DegenerateGraph { node, degree: d.as_f64() });
    }
    let graph = CorrelationGraph::from_parts(anchor, window, labels, w, degrees)?;
    graph.validate_strict()?;
    Ok(graph)
}

/// Summary statistics of a graph's weights and degrees.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub labeled: usize,
    pub edges: usize,
    pub weight_min: f64,
    pub weight_max: f64,
    pub weight_mean: f64,
    pub degree_min: f64,
    pub degree_max: f64,
    pub degree_mean: f64,
    /// `(lower edge, upper edge, count)` over equal-width degree bins.
    pub degree_histogram: Vec<(f64, f64, usize)>,
}

pub fn graph_stats<T: Scalar>(g: &CorrelationGraph<T>, bins: usize) -> GraphStats {
    let n = g.n();
    let mut edges = 0;
    let (mut wmin, mut wmax, mut wsum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = g.weight(i, j).as_f64();
            if w > 0.0 {
                edges += 1;
                wmin = wmin.min(w);
                wmax = wmax.max(w);
                wsum += w;
            }
        }
    }
    let d: Vec<f64> = g.degrees().iter().map(|d| d.as_f64()).collect();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = bins.max(1);
    let width = (dmax - dmin) / bins as f64;
    let mut hist: Vec<(f64, f64, usize)> =
        (0..bins).map(|b| (dmin + width * b as f64, dmin + width * (b + 1) as f64, 0)).collect();
    for &x in &d {
        let b = if width > 0.0 { (((x - dmin) / width) as usize).min(bins - 1) } else { 0 };
        hist[b].2 += 1;
    }
    GraphStats {
        nodes: n,
        labeled: g.labeled_count(),
        edges,
        weight_min: if edges > 0 { wmin } else { 0.0 },
        weight_max: if edges > 0 { wmax } else { 0.0 },
        weight_mean: if edges > 0 { wsum / edges as f64 } else { 0.0 },
        degree_min: dmin,
        degree_max: dmax,
        degree_mean: d.iter().sum::<f64>() / n.max(1) as f64,
        degree_histogram: hist,
    }
}

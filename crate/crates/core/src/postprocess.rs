//! Selection rules, Bayesian FDR, node degrees and partial ROC evaluation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median probability model: select every item with PPI ≥ 0.5.
pub fn select_by_mpm(ppis: &[f64]) -> Vec<bool> {
    ppis.iter().map(|&p| p >= 0.5).collect()
}

/// Estimated Bayesian FDR of the selection {ppi > κ}; `None` when nothing is selected.
pub fn fdr_estimate(ppis: &[f64], kappa: f64) -> Option<f64> {
    let mut count = 0usize;
    let mut false_mass = 0.0;
    for &p in ppis {
        if p > kappa {
            count += 1;
            false_mass += 1.0 - p;
        }
    }
    (count > 0).then(|| false_mass / count as f64)
}

/// Smallest threshold κ whose selection {ppi > κ} is non-empty with estimated
/// FDR at most `target`. Candidates are 0 and every distinct PPI below one;
/// returns 1 (empty selection) when no candidate qualifies.
pub fn fdr_threshold(ppis: &[f64], target: f64) -> f64 {
    let mut sorted: Vec<f64> = ppis.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    // suffix[k] = Σ_{m ≥ k} (1 - sorted[m])
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + (1.0 - sorted[k]);
    }
    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(sorted.iter().copied().filter(|&p| p < 1.0))
        .collect();
    candidates.dedup();
    let mut start = 0;
    for &kappa in &candidates {
        while start < n && sorted[start] <= kappa {
            start += 1;
        }
        let count = n - start;
        if count > 0 && suffix[start] / count as f64 <= target {
            return kappa;
        }
    }
    1.0
}

/// Items with PPI strictly above the FDR threshold.
pub fn select_by_fdr(ppis: &[f64], target: f64) -> Vec<bool> {
    let kappa = fdr_threshold(ppis, target);
    ppis.iter().map(|&p| p > kappa).collect()
}

/// Upper-triangular entries (i < j) in column-major pair order.
pub fn upper_triangle<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for j in 0..p {
        for i in 0..j {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Empirical ROC curve truncated at `max_fpr`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub max_fpr: f64,
}

fn check_truth(truth: &[bool], scores: &[f64]) -> Result<(usize, usize)> {
    if truth.len() != scores.len() {
        return Err(Error::Validation(format!(
            "{} labels for {} scores",
            truth.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(
            "truth needs at least one positive and one negative".into(),
        ));
    }
    Ok((pos, neg))
}

/// Full ROC curve: one vertex per distinct score, so tied scores contribute a
/// diagonal segment.
pub fn roc_points(truth: &[bool], scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_truth(truth, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// ROC curve cut at `max_fpr`, with the final vertex interpolated onto the cut.
pub fn roc_curve(truth: &[bool], scores: &[f64], max_fpr: f64) -> Result<RocCurve> {
    if !(max_fpr > 0.0 && max_fpr <= 1.0) {
        return Err(Error::Domain(format!("max_fpr {max_fpr} outside (0, 1]")));
    }
    let full = roc_points(truth, scores)?;
    let mut points = Vec::new();
    for w in full.windows(2) {
        let (a, b) = (w[0], w[1]);
        if points.is_empty() {
            points.push(a);
        }
        if b.0 <= max_fpr {
            points.push(b);
        } else {
            if a.0 < max_fpr {
                let t = (max_fpr - a.0) / (b.0 - a.0);
                points.push((max_fpr, a.1 + t * (b.1 - a.1)));
            }
            break;
        }
    }
    Ok(RocCurve { points, max_fpr })
}

impl RocCurve {
    /// Trapezoidal area under the truncated curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
            .sum()
    }

    /// McClish-standardised partial area: 0.5 for a random classifier, 1 for a
    /// perfect one.
    pub fn standardised_area(&self) -> f64 {
        let a_min = 0.5 * self.max_fpr * self.max_fpr;
        let a_max = self.max_fpr;
        0.5 * (1.0 + (self.area() - a_min) / (a_max - a_min))
    }
}

/// Standardised partial AUC over fpr ∈ [0, max_fpr].
pub fn pauc(truth: &[bool], scores: &[f64], max_fpr: f64) -> Result<f64> {
    Ok(roc_curve(truth, scores, max_fpr)?.standardised_area())
}

/// Edge-level pAUC from a true adjacency matrix and a PPI matrix.
pub fn edge_pauc(truth: &DMatrix<bool>, ppi: &DMatrix<f64>, max_fpr: f64) -> Result<f64> {
    pauc(&upper_triangle(truth), &upper_triangle(ppi), max_fpr)
}

pub fn node_degrees(mask: &DMatrix<bool>) -> Result<Vec<usize>> {
    let p = mask.nrows();
    if mask.ncols() != p {
        return Err(Error::Validation("adjacency mask must be square".into()));
    }
    for i in 0..p {
        if mask[(i, i)] {
            return Err(Error::Validation(format!("self-loop at node {}", i + 1)));
        }
        for j in 0..i {
            if mask[(i, j)] != mask[(j, i)] {
                return Err(Error::Validation(format!(
                    "asymmetric mask at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(mask
        .column_iter()
        .map(|c| c.iter().filter(|&&b| b).count())
        .collect())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sided permutation test for a difference in median between two groups
/// (e.g. degrees of nodes with and without a property). Returns the p-value
/// with the add-one correction.
pub fn median_permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("both groups must be non-empty".into()));
    }
    let observed = (median(&mut a.to_vec()) - median(&mut b.to_vec())).abs();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        pooled.shuffle(&mut rng);
        let (x, y) = pooled.split_at(a.len());
        let stat = (median(&mut x.to_vec()) - median(&mut y.to_vec())).abs();
        if stat >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (n_perm + 1) as f64)
}

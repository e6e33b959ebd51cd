//! Restarts from the top-ranked edges of a converged fit.
//!
//! From the default start (Ω = I) the first edge update sees no partial
//! correlations, so every edge falls into the spike and the penalty can hold Ω
//! at a sparse fixed point. Restarting with the strongest edges already in the
//! slab lets the fit leave that point; a restart is kept only when it improves
//! the objective.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::types::{n_pairs, FitResult, ModelConfig};

/// Symmetric 0/1 matrix marking the `k` pairs with the largest scores. Ties
/// keep pair order.
pub fn top_edges(scores: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let p = scores.nrows();
    let mut pairs: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
    pairs.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut out = DMatrix::zeros(p, p);
    for &(i, j) in pairs.iter().take(k) {
        out[(i, j)] = 1.0;
        out[(j, i)] = 1.0;
    }
    out
}

/// Restarts from the top k edges of the current best fit, with k starting at a
/// quarter of the prior mean edge count and doubling after every accepted
/// restart. Stops at the first restart that fails or does not improve the final
/// objective.
pub fn ladder<F>(first: FitResult, cfg: &ModelConfig, mut restart: F) -> Result<FitResult>
where
    F: FnMut(&FitResult, DMatrix<f64>) -> Result<FitResult>,
{
    let p = first.edge_ppi.nrows();
    let total = n_pairs(p);
    let mut best = first;
    let mut k = ((cfg.prior_mean_edges(p) / 4.0).ceil() as usize).max(1);
    while k <= total {
        let start = top_edges(&best.edge_ppi, k);
        match restart(&best, start) {
            Ok(fit) if fit.final_objective() > best.final_objective() => {
                best = fit;
                if k == total {
                    break;
                }
                k = (2 * k).min(total);
            }
            _ => break,
        }
    }
    Ok(best)
}

//! Fit-invariant quantities shared by both engines.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{n_pairs, AuxiliaryMatrix, DataMatrix, Variant};

/// Data summaries that stay fixed during a fit. S = YᵀY is computed once and
/// shared read-only between concurrent fits.
#[derive(Clone, Debug)]
pub struct Problem {
    pub gram: DMatrix<f64>,
    pub n_samples: usize,
    pub n_nodes: usize,
    /// P×Q auxiliary design; zero columns for GM*.
    pub aux: DMatrix<f64>,
    /// Σ_i V_iq
    pub col_sum: Vec<f64>,
    /// Σ_i V_iq²
    pub col_sumsq: Vec<f64>,
    /// Σ_{i<j} (V_iq + V_jq)², the design weight of β_q in the probit predictor.
    pub design_sq: Vec<f64>,
}

impl Problem {
    pub fn new(data: &DataMatrix, aux: &AuxiliaryMatrix, variant: Variant) -> Result<Self> {
        let p = data.n_nodes();
        if aux.n_nodes() != p {
            return Err(Error::Validation(format!(
                "data has {p} nodes but auxiliary matrix has {} rows",
                aux.n_nodes()
            )));
        }
        let aux = if variant.uses_auxiliary() {
            aux.values().clone()
        } else {
            DMatrix::zeros(p, 0)
        };
        Ok(Self::from_parts(data.gram(), data.n_samples(), aux))
    }

    pub fn from_parts(gram: DMatrix<f64>, n_samples: usize, aux: DMatrix<f64>) -> Self {
        let n_nodes = gram.nrows();
        let col_sum: Vec<f64> = aux.column_iter().map(|c| c.sum()).collect();
        let col_sumsq: Vec<f64> = aux.column_iter().map(|c| c.norm_squared()).collect();
        // Σ_{i<j}(V_i + V_j)² = (P-1)ΣV² + 2Σ_{i<j}V_iV_j = (P-2)ΣV² + (ΣV)²
        let design_sq = col_sum
            .iter()
            .zip(&col_sumsq)
            .map(|(s, ss)| (n_nodes as f64 - 2.0) * ss + s * s)
            .collect();
        Self {
            gram,
            n_samples,
            n_nodes,
            aux,
            col_sum,
            col_sumsq,
            design_sq,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.aux.ncols()
    }

    pub fn n_pairs(&self) -> usize {
        n_pairs(self.n_nodes)
    }

    /// Per-node linear effects V b.
    pub fn node_effects(&self, b: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.n_nodes];
        for (q, &bq) in b.iter().enumerate() {
            if bq != 0.0 {
                for (ei, v) in e.iter_mut().zip(self.aux.column(q).iter()) {
                    *ei += v * bq;
                }
            }
        }
        e
    }

    /// N/2 log|Ω| - tr(SΩ)/2 - NP/2 log 2π
    pub fn log_likelihood(&self, omega: &DMatrix<f64>) -> Result<f64> {
        let logdet = log_det(omega)?;
        let trace = self.gram.component_mul(omega).sum();
        let n = self.n_samples as f64;
        Ok(0.5 * n * logdet
            - 0.5 * trace
            - 0.5 * n * self.n_nodes as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// log-determinant of a symmetric positive-definite matrix via Cholesky.
pub fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_weight_matches_pair_sum() {
        let v = DMatrix::from_row_slice(4, 2, &[0.1, 1.0, 0.7, -2.0, 0.0, 0.5, 0.3, 0.25]);
        let prob = Problem::from_parts(DMatrix::identity(4, 4), 10, v.clone());
        for q in 0..2 {
            let mut direct = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    direct += (v[(i, q)] + v[(j, q)]).powi(2);
                }
            }
            assert!((prob.design_sq[q] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 0.5]));
        assert!((log_det(&m).unwrap() - 3f64.ln()).abs() < 1e-14);
        assert!(log_det(&(-m)).is_err());
    }
}

//! Synthetic networks whose hub structure is driven by node-level auxiliary
//! variables, plus the null and misspecified variants.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_cdf;
use crate::types::{n_pairs, AuxiliaryMatrix, DataMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectMode {
    Positive,
    Negative,
    /// Alternating signs, the first active variable positive.
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_samples: usize,
    pub n_nodes: usize,
    pub n_candidate_vars: usize,
    pub n_active_vars: usize,
    pub sparsity_target: f64,
    pub noise_level: f64,
    pub effect_mode: EffectMode,
    pub misspecified_similarity: bool,
    pub seed: u64,
}

/// Log-normal effect sizes: parameters of the underlying normal.
pub const EFFECT_LOG_MEAN: f64 = 0.5;
pub const EFFECT_LOG_SD: f64 = 0.1;
/// Auxiliary variables are Beta(0.05, 0.2).
pub const AUX_BETA_SHAPE: (f64, f64) = (0.05, 0.2);
/// Number of auxiliary/effect draws averaged when tuning ζ.
pub const ZETA_TUNING_DRAWS: usize = 50;

/// Active variables of the similarity scenario (0-based).
pub const SIMILARITY_ACTIVE: [usize; 2] = [1, 43];
/// Group centres and sizes of the similarity scenario.
pub const SIMILARITY_GROUPS: [((f64, f64), usize); 3] =
    [((-1.0, 0.0), 30), ((0.0, 1.0), 30), ((1.0, 0.0), 40)];
/// Within-group standard deviation of the active similarity variables.
pub const SIMILARITY_GROUP_SD: f64 = 0.3;

impl ScenarioSpec {
    /// N = 200, P = 100, Q = 50, Q₀ = 3, 3% sparsity, 10% noise edges.
    pub fn reference() -> Self {
        Self {
            n_samples: 200,
            n_nodes: 100,
            n_candidate_vars: 50,
            n_active_vars: 3,
            sparsity_target: 0.03,
            noise_level: 0.1,
            effect_mode: EffectMode::Positive,
            misspecified_similarity: false,
            seed: 1,
        }
    }

    pub fn null() -> Self {
        Self {
            n_active_vars: 0,
            ..Self::reference()
        }
    }

    pub fn similarity() -> Self {
        Self {
            n_active_vars: SIMILARITY_ACTIVE.len(),
            misspecified_similarity: true,
            ..Self::reference()
        }
    }

    /// The twelve settings of the main benchmark table, each differing from the
    /// reference in one or two dimensions.
    pub fn table1_row(row: usize) -> Result<Self> {
        let r = Self::reference();
        Ok(match row {
            1 => r,
            2 => Self { n_nodes: 50, ..r },
            3 => Self { n_samples: 100, ..r },
            4 => Self {
                n_samples: 100,
                n_nodes: 50,
                ..r
            },
            5 => Self {
                n_candidate_vars: 20,
                ..r
            },
            6 => Self {
                n_candidate_vars: 100,
                ..r
            },
            7 => Self {
                n_active_vars: 1,
                ..r
            },
            8 => Self {
                n_active_vars: 5,
                ..r
            },
            9 => Self {
                noise_level: 0.2,
                ..r
            },
            10 => Self {
                noise_level: 0.3,
                ..r
            },
            11 => Self {
                sparsity_target: 0.01,
                ..r
            },
            12 => Self {
                sparsity_target: 0.085,
                ..r
            },
            _ => return Err(Error::Validation(format!("no table row {row}"))),
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_active_vars > self.n_candidate_vars {
            return Err(Error::Validation("more active than candidate variables".into()));
        }
        for (name, v) in [
            ("sparsity_target", self.sparsity_target),
            ("noise_level", self.noise_level),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Validation(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.n_nodes < 2 || self.n_samples < 2 {
            return Err(Error::Validation("need at least 2 nodes and 2 samples".into()));
        }
        if self.misspecified_similarity
            && (self.n_candidate_vars <= SIMILARITY_ACTIVE[1]
                || self.n_nodes != SIMILARITY_GROUPS.iter().map(|g| g.1).sum::<usize>())
        {
            return Err(Error::Validation(
                "similarity scenario needs P = 100 and Q ≥ 44".into(),
            ));
        }
        Ok(())
    }
}

pub fn gen_auxiliary<R: Rng>(n_nodes: usize, n_vars: usize, rng: &mut R) -> AuxiliaryMatrix {
    let beta = Beta::new(AUX_BETA_SHAPE.0, AUX_BETA_SHAPE.1).expect("valid shape");
    let values = DMatrix::from_fn(n_nodes, n_vars, |_, _| beta.sample(rng));
    AuxiliaryMatrix::new(values).expect("finite draws")
}

pub fn gen_effects<R: Rng>(
    n_vars: usize,
    n_active: usize,
    mode: EffectMode,
    rng: &mut R,
) -> Vec<f64> {
    let mut beta = vec![0.0; n_vars];
    if n_active == 0 {
        return beta;
    }
    let ln = LogNormal::new(EFFECT_LOG_MEAN, EFFECT_LOG_SD).expect("valid log-normal");
    let mut active = index::sample(rng, n_vars, n_active).into_vec();
    active.sort_unstable();
    for (k, q) in active.into_iter().enumerate() {
        let size = ln.sample(rng).abs();
        beta[q] = match mode {
            EffectMode::Positive => size,
            EffectMode::Negative => -size,
            EffectMode::Combined if k % 2 == 0 => size,
            EffectMode::Combined => -size,
        };
    }
    beta
}

/// Number of noise edges added to `threshold_edges` so that noise makes up a
/// `noise_level` share of the final graph (at least one when threshold edges exist).
pub fn noise_edge_count(threshold_edges: usize, noise_level: f64) -> usize {
    (noise_level * threshold_edges as f64 / (1.0 - noise_level)).ceil() as usize
}

fn threshold_adjacency(v: &DMatrix<f64>, beta: &[f64], zeta: f64) -> DMatrix<bool> {
    let p = v.nrows();
    let e = v * nalgebra::DVector::from_column_slice(beta);
    DMatrix::from_fn(p, p, |i, j| i != j && zeta + e[i] + e[j] >= 0.0)
}

/// Sets `count` uniformly chosen absent pairs to present.
fn add_random_edges<R: Rng>(adj: &mut DMatrix<bool>, count: usize, rng: &mut R) {
    let p = adj.nrows();
    let zeros: Vec<(usize, usize)> = (0..p)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .filter(|&(i, j)| !adj[(i, j)])
        .collect();
    let count = count.min(zeros.len());
    for k in index::sample(rng, zeros.len(), count) {
        let (i, j) = zeros[k];
        adj[(i, j)] = true;
        adj[(j, i)] = true;
    }
}

/// Thresholded probit adjacency 1{Φ(ζ + v_iβ + v_jβ) ≥ 0.5} plus noise edges.
pub fn gen_adjacency<R: Rng>(
    v: &DMatrix<f64>,
    beta: &[f64],
    zeta: f64,
    noise_level: f64,
    rng: &mut R,
) -> DMatrix<bool> {
    let mut adj = threshold_adjacency(v, beta, zeta);
    let thr = adj.iter().filter(|&&b| b).count() / 2;
    add_random_edges(&mut adj, noise_edge_count(thr, noise_level), rng);
    adj
}

pub fn density(adj: &DMatrix<bool>) -> f64 {
    let p = adj.nrows();
    (adj.iter().filter(|&&b| b).count() / 2) as f64 / n_pairs(p) as f64
}

fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Seed of the ζ-tuning stream: one value per scenario, shared by replicates.
fn tuning_seed(spec: &ScenarioSpec) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for x in [
        spec.n_nodes as u64,
        spec.n_candidate_vars as u64,
        spec.n_active_vars as u64,
        spec.sparsity_target.to_bits(),
        spec.noise_level.to_bits(),
        spec.effect_mode as u64,
    ] {
        h = (h ^ x).wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// ζ giving the target expected sparsity, averaged over independent
/// auxiliary/effect draws. The threshold part must supply (1 - noise) of the edges.
pub fn tune_zeta(spec: &ScenarioSpec) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(tuning_seed(spec));
    let p = spec.n_nodes;
    let m = n_pairs(p) as f64;
    // Sorted pair predictors per draw: the threshold density at ζ is the share of
    // e_i + e_j ≥ -ζ.
    let draws: Vec<Vec<f64>> = (0..ZETA_TUNING_DRAWS)
        .map(|_| {
            let v = gen_auxiliary(p, spec.n_candidate_vars, &mut rng);
            let beta = gen_effects(
                spec.n_candidate_vars,
                spec.n_active_vars,
                spec.effect_mode,
                &mut rng,
            );
            let e = v.values() * nalgebra::DVector::from_column_slice(&beta);
            let mut s: Vec<f64> = (0..p)
                .flat_map(|j| (0..j).map(move |i| (i, j)))
                .map(|(i, j)| e[i] + e[j])
                .collect();
            s.sort_by(|a, b| a.total_cmp(b));
            s
        })
        .collect();
    let mean_density = |zeta: f64| {
        draws
            .iter()
            .map(|s| {
                let below = s.partition_point(|&x| x < -zeta);
                let thr = s.len() - below;
                (thr + noise_edge_count(thr, spec.noise_level)) as f64 / m
            })
            .sum::<f64>()
            / draws.len() as f64
    };
    bisect_increasing(mean_density, -50.0, 50.0, spec.sparsity_target)
}

/// Ω = Ē + (0.1 - λ_min(Ē)) I with Ē the symmetrised random weights on the support.
pub fn gen_precision<R: Rng>(adj: &DMatrix<bool>, rng: &mut R) -> DMatrix<f64> {
    let p = adj.nrows();
    let mut e = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..p {
            if adj[(i, j)] {
                let mag = rng.random_range(0.25..0.75);
                e[(i, j)] = if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
    }
    let ebar = (&e + e.transpose()) * 0.5;
    let lmin = min_eigenvalue(&ebar);
    let mut omega = ebar;
    for i in 0..p {
        omega[(i, i)] += 0.1 - lmin;
    }
    omega
}

/// Smallest eigenvalue of a symmetric matrix by bisection on positive
/// definiteness of M − λI. The returned value never exceeds the true minimum by
/// more than rounding, so shifting by it keeps the result PD. nalgebra's
/// symmetric eigensolver returns NaN on some sparse inputs with isolated rows.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    if p == 0 {
        return 0.0;
    }
    let shifted_pd = |lambda: f64| {
        let mut a = m.clone();
        for i in 0..p {
            a[(i, i)] -= lambda;
        }
        a.cholesky().is_some()
    };
    let mut hi = (0..p).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut lo = (0..p)
        .map(|i| m[(i, i)] - (0..p).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let scale = m.amax().max(1.0);
    lo -= 1e-9 * scale;
    while !shifted_pd(lo) {
        lo -= (hi - lo).max(scale);
    }
    while hi - lo > 1e-13 * scale {
        let mid = 0.5 * (lo + hi);
        if shifted_pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// N iid draws from N(0, Ω⁻¹): x = L⁻ᵀ z with Ω = LLᵀ.
pub fn gen_samples<R: Rng>(omega: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DataMatrix> {
    let p = omega.nrows();
    let chol = omega
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("precision matrix for sampling".into()))?;
    let z = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(rng));
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    DataMatrix::new(x.transpose())
}

/// One simulated data set with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub spec: ScenarioSpec,
    pub data: DataMatrix,
    pub aux: AuxiliaryMatrix,
    pub adjacency: DMatrix<bool>,
    pub effects: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub zeta: f64,
}

impl Replicate {
    /// Indicator of the active auxiliary variables.
    pub fn active(&self) -> Vec<bool> {
        self.effects.iter().map(|&b| b != 0.0).collect()
    }
}

fn similarity_aux<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> DMatrix<f64> {
    let p = spec.n_nodes;
    let mut v = DMatrix::from_fn(p, spec.n_candidate_vars, |_, _| StandardNormal.sample(rng));
    let noise = Normal::new(0.0, SIMILARITY_GROUP_SD).expect("positive sd");
    let mut row = 0;
    for &((c1, c2), size) in &SIMILARITY_GROUPS {
        for _ in 0..size {
            v[(row, SIMILARITY_ACTIVE[0])] = c1 + noise.sample(rng);
            v[(row, SIMILARITY_ACTIVE[1])] = c2 + noise.sample(rng);
            row += 1;
        }
    }
    v
}

fn similarity_effects<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Vec<f64> {
    let ln = LogNormal::new(EFFECT_LOG_MEAN, EFFECT_LOG_SD).expect("valid log-normal");
    let mut beta = vec![0.0; spec.n_candidate_vars];
    for &q in &SIMILARITY_ACTIVE {
        beta[q] = ln.sample(rng).abs();
    }
    beta
}

/// Pairwise similarity predictor Σ_q exp(-|V_iq - V_jq|) β_q.
fn similarity_predictor(v: &DMatrix<f64>, beta: &[f64]) -> DMatrix<f64> {
    let p = v.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        beta.iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(q, b)| (-(v[(i, q)] - v[(j, q)]).abs()).exp() * b)
            .sum()
    })
}

fn tune_similarity_zeta(spec: &ScenarioSpec) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(tuning_seed(spec) ^ 0x5151);
    let p = spec.n_nodes;
    let preds: Vec<Vec<f64>> = (0..ZETA_TUNING_DRAWS)
        .map(|_| {
            let v = similarity_aux(spec, &mut rng);
            let beta = similarity_effects(spec, &mut rng);
            let s = similarity_predictor(&v, &beta);
            (0..p)
                .flat_map(|j| (0..j).map(move |i| (i, j)))
                .map(|(i, j)| s[(i, j)])
                .collect()
        })
        .collect();
    let mean_prob = |zeta: f64| {
        preds
            .iter()
            .map(|s| s.iter().map(|x| norm_cdf(zeta + x)).sum::<f64>() / s.len() as f64)
            .sum::<f64>()
            / preds.len() as f64
    };
    bisect_increasing(mean_prob, -50.0, 50.0, spec.sparsity_target)
}

/// Runs the full generator for one replicate; a pure function of the spec.
pub fn generate(spec: &ScenarioSpec) -> Result<Replicate> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.n_nodes;
    let (aux, effects, adjacency, zeta) = if spec.misspecified_similarity {
        let zeta = tune_similarity_zeta(spec);
        let v = similarity_aux(spec, &mut rng);
        let beta = similarity_effects(spec, &mut rng);
        let s = similarity_predictor(&v, &beta);
        let mut adj = DMatrix::from_element(p, p, false);
        for j in 0..p {
            for i in 0..j {
                if rng.random_bool(norm_cdf(zeta + s[(i, j)])) {
                    adj[(i, j)] = true;
                    adj[(j, i)] = true;
                }
            }
        }
        (AuxiliaryMatrix::new(v)?, beta, adj, zeta)
    } else {
        let aux = gen_auxiliary(p, spec.n_candidate_vars, &mut rng);
        let beta = gen_effects(
            spec.n_candidate_vars,
            spec.n_active_vars,
            spec.effect_mode,
            &mut rng,
        );
        if spec.n_active_vars == 0 {
            // Without active variables the threshold graph is empty or complete,
            // so the target sparsity is met with uniformly placed edges.
            let mut adj = DMatrix::from_element(p, p, false);
            let count = (spec.sparsity_target * n_pairs(p) as f64).ceil() as usize;
            add_random_edges(&mut adj, count, &mut rng);
            let zeta = crate::special::norm_quantile(spec.sparsity_target);
            (aux, beta, adj, zeta)
        } else {
            let zeta = tune_zeta(spec);
            let adj = gen_adjacency(aux.values(), &beta, zeta, spec.noise_level, &mut rng);
            (aux, beta, adj, zeta)
        }
    };
    let omega = gen_precision(&adjacency, &mut rng);
    let data = gen_samples(&omega, spec.n_samples, &mut rng)?;
    Ok(Replicate {
        spec: spec.clone(),
        data,
        aux,
        adjacency,
        effects,
        omega,
        zeta,
    })
}

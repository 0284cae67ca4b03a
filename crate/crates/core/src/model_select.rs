//! Choice of the number of clusters by a BIC-style penalized objective:
//!
//! ```text
//! k* = argmin_k  D_n^k + m(m+1) * k * ln(n) / n
//! ```
//!
//! where `D_n^k` is the 1/n-normalized k-means objective of the best restart.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kmeans::{self, KmeansConfig};
use crate::seed;
use crate::spd::{self, EmbeddedPoint, SpdMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub k: usize,
    pub objective: f64,
    pub penalty: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelectionReport {
    pub candidates: Vec<Candidate>,
    pub chosen_k: usize,
    pub m: usize,
    pub n: usize,
}

impl KSelectionReport {
    pub fn chosen(&self) -> &Candidate {
        self.candidates
            .iter()
            .find(|c| c.k == self.chosen_k)
            .expect("chosen k is a candidate")
    }
}

/// `m(m+1) * k * ln(n) / n`.
pub fn penalty(m: usize, k: usize, n: usize) -> f64 {
    (m * (m + 1)) as f64 * k as f64 * (n as f64).ln() / n as f64
}

/// Seed used for candidate `k`; depends only on the base seed and `k`.
pub fn candidate_seed(base: u64, k: usize) -> u64 {
    seed::derive(base, &[k as u64])
}

/// Scores precomputed objectives. Ties go to the smaller k.
pub fn score_candidates(
    objectives: &[(usize, f64)],
    m: usize,
    n: usize,
) -> Result<KSelectionReport> {
    if objectives.is_empty() {
        return Err(Error::EmptyInput("no candidate k"));
    }
    let mut candidates: Vec<Candidate> = objectives
        .iter()
        .map(|&(k, objective)| {
            let penalty = penalty(m, k, n);
            Candidate {
                k,
                objective,
                penalty,
                score: objective + penalty,
            }
        })
        .collect();
    candidates.sort_by_key(|c| c.k);
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.score < best.score {
            best = c;
        }
    }
    let chosen_k = best.k;
    Ok(KSelectionReport {
        candidates,
        chosen_k,
        m,
        n,
    })
}

fn normalize_k_set(k_set: &[usize]) -> Result<Vec<usize>> {
    if k_set.is_empty() {
        return Err(Error::EmptyInput("no candidate k"));
    }
    let mut ks = k_set.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks[0] == 0 {
        return Err(Error::InvalidConfig("candidate k must be at least 1".into()));
    }
    Ok(ks)
}

/// Runs k-means for every candidate k on embedded points and scores them.
pub fn select_k_points(
    points: &[EmbeddedPoint],
    k_set: &[usize],
    cfg_template: &KmeansConfig,
) -> Result<KSelectionReport> {
    let first = points
        .first()
        .ok_or(Error::EmptyInput("model selection on no points"))?;
    let ks = normalize_k_set(k_set)?;
    let n = points.len();
    let kmax = *ks.last().expect("nonempty");
    if kmax > n {
        return Err(Error::KExceedsN { k: kmax, n });
    }
    let objectives = ks
        .par_iter()
        .map(|&k| {
            let cfg = KmeansConfig {
                k,
                seed: candidate_seed(cfg_template.seed, k),
                ..cfg_template.clone()
            };
            kmeans::fit(points, &cfg).map(|model| (k, model.objective))
        })
        .collect::<Result<Vec<_>>>()?;
    score_candidates(&objectives, first.dim_m(), n)
}

/// Model selection over SPD matrices.
pub fn select_k(
    matrices: &[SpdMatrix],
    k_set: &[usize],
    cfg_template: &KmeansConfig,
) -> Result<KSelectionReport> {
    if matrices.is_empty() {
        return Err(Error::EmptyInput("model selection on no matrices"));
    }
    let points = matrices
        .par_iter()
        .map(spd::embed)
        .collect::<Result<Vec<_>>>()?;
    select_k_points(&points, k_set, cfg_template)
}

//! Lloyd k-means on log-Cholesky embedded points.
//!
//! Because the log-Cholesky distance is Euclidean in embedded coordinates and
//! the Fréchet mean is the embedded arithmetic mean, Fréchet k-means on SPD
//! matrices is exactly Euclidean k-means on `embed(S_i)`. [`fit_spd`] is the
//! SPD-level entry point; [`fit`] works on embedded points directly.
//!
//! Each restart seeds with squared-distance-weighted sampling, then alternates
//! assignment and mean updates. The objective stored in [`ClusterModel`] is the
//! 1/n-normalized sum of squared nearest-centroid distances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;
use crate::spd::{self, EmbeddedPoint, SpdMatrix};
use rand::Rng;

/// Work (points x centroids x coords) above which assignment runs in parallel.
const PARALLEL_ASSIGN_WORK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 300,
            rel_tol: 1e-6,
            restarts: 8,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidConfig(
                "rel_tol must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Best fit over all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<EmbeddedPoint>,
    /// Nearest centroid per point, ties to the lowest index.
    pub labels: Vec<usize>,
    /// `(1/n) * sum_i min_j |x_i - c_j|^2`.
    pub objective: f64,
    pub iters_run: usize,
    pub restart_of_best: usize,
    /// Objective after seeding and after every update of the best restart.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Centroids mapped back to SPD matrices.
    pub fn spd_centroids(&self) -> Vec<SpdMatrix> {
        self.centroids.iter().map(spd::unembed).collect()
    }
}

/// Row-major copy of a point set, checked for a common dimension.
struct Flat {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    dim_m: usize,
}

impl Flat {
    fn new(points: &[EmbeddedPoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or(Error::EmptyInput("k-means on no points"))?;
        let dim_m = first.dim_m();
        let dim = first.coords().len();
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim_m() != dim_m {
                return Err(Error::DimensionMismatch {
                    expected: dim_m,
                    found: p.dim_m(),
                });
            }
            data.extend_from_slice(p.coords());
        }
        Ok(Self {
            data,
            n: points.len(),
            dim,
            dim_m,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn nearest(x: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = spd::squared_euclidean(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Labels and squared nearest distances for every point.
fn assign_flat(flat: &Flat, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let k = centroids.len() / flat.dim.max(1);
    let pairs: Vec<(usize, f64)> = if flat.n * k * flat.dim >= PARALLEL_ASSIGN_WORK {
        flat.data
            .par_chunks_exact(flat.dim)
            .map(|x| nearest(x, centroids, flat.dim))
            .collect()
    } else {
        flat.data
            .chunks_exact(flat.dim)
            .map(|x| nearest(x, centroids, flat.dim))
            .collect()
    };
    pairs.into_iter().unzip()
}

fn mean_of(dists: &[f64]) -> f64 {
    dists.iter().sum::<f64>() / dists.len() as f64
}

/// Squared-distance-weighted sequential seeding.
fn seed_centroids<R: Rng>(flat: &Flat, k: usize, rng: &mut R) -> Vec<f64> {
    let dim = flat.dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..flat.n);
    centroids.extend_from_slice(flat.row(first));
    let mut d2: Vec<f64> = (0..flat.n)
        .map(|i| spd::squared_euclidean(flat.row(i), flat.row(first)))
        .collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = None;
            let mut last_positive = 0;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    last_positive = i;
                    cum += w;
                    if cum > target {
                        chosen = Some(i);
                        break;
                    }
                }
            }
            chosen.unwrap_or(last_positive)
        } else {
            rng.random_range(0..flat.n)
        };
        let c = flat.row(pick).to_vec();
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(spd::squared_euclidean(flat.row(i), &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Per-cluster means; clusters without members keep their previous centroid.
/// Returns the indices of the empty clusters.
fn update_flat(flat: &Flat, labels: &[usize], centroids: &mut [f64]) -> Vec<usize> {
    let dim = flat.dim;
    let k = centroids.len() / dim;
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(flat.row(i)) {
            *s += x;
        }
    }
    let mut empty = Vec::new();
    for j in 0..k {
        if counts[j] == 0 {
            empty.push(j);
            continue;
        }
        let inv = counts[j] as f64;
        for (c, s) in centroids[j * dim..(j + 1) * dim]
            .iter_mut()
            .zip(&sums[j * dim..(j + 1) * dim])
        {
            *c = s / inv;
        }
    }
    empty
}

/// Moves each empty cluster's centroid onto the point farthest from its
/// nearest centroid. A point is used at most once per repair pass.
fn repair_empty(flat: &Flat, empty: &[usize], dists: &[f64], centroids: &mut [f64]) {
    let dim = flat.dim;
    let mut d = dists.to_vec();
    for &j in empty {
        let mut far = 0;
        for i in 1..flat.n {
            if d[i] > d[far] {
                far = i;
            }
        }
        if d[far] <= 0.0 {
            // every point already sits on a centroid; duplicates are allowed
            break;
        }
        centroids[j * dim..(j + 1) * dim].copy_from_slice(flat.row(far));
        d[far] = 0.0;
    }
}

struct RunResult {
    centroids: Vec<f64>,
    labels: Vec<usize>,
    objective: f64,
    iters: usize,
    history: Vec<f64>,
}

fn lloyd_run(flat: &Flat, cfg: &KmeansConfig, restart: usize) -> RunResult {
    let mut rng = seed::rng(seed::derive(cfg.seed, &[restart as u64]));
    let mut centroids = seed_centroids(flat, cfg.k, &mut rng);
    let (mut labels, mut dists) = assign_flat(flat, &centroids);
    let mut objective = mean_of(&dists);
    let mut history = vec![objective];
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        let previous_centroids = centroids.clone();
        let empty = update_flat(flat, &labels, &mut centroids);
        if !empty.is_empty() {
            repair_empty(flat, &empty, &dists, &mut centroids);
        }
        let (new_labels, new_dists) = assign_flat(flat, &centroids);
        let new_objective = mean_of(&new_dists);
        if new_objective > objective {
            // round-off in the mean update; the previous state is the fixed point
            centroids = previous_centroids;
            break;
        }
        history.push(new_objective);
        let stable = new_labels == labels;
        let decrease = objective - new_objective;
        labels = new_labels;
        dists = new_dists;
        let previous = objective;
        objective = new_objective;
        if stable || decrease <= cfg.rel_tol * previous {
            break;
        }
    }
    RunResult {
        centroids,
        labels,
        objective,
        iters,
        history,
    }
}

/// Best of `cfg.restarts` seeded Lloyd runs. Restarts run in parallel; the
/// lowest objective wins, ties going to the earliest restart.
pub fn fit(points: &[EmbeddedPoint], cfg: &KmeansConfig) -> Result<ClusterModel> {
    cfg.validate()?;
    let flat = Flat::new(points)?;
    if cfg.k > flat.n {
        return Err(Error::KExceedsN {
            k: cfg.k,
            n: flat.n,
        });
    }
    let runs: Vec<RunResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| lloyd_run(&flat, cfg, r))
        .collect();
    let (best_idx, _) = runs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| {
            if r.objective < acc.1 {
                (i, r.objective)
            } else {
                acc
            }
        });
    let best = runs.into_iter().nth(best_idx).expect("restarts >= 1");
    let centroids = best
        .centroids
        .chunks_exact(flat.dim)
        .map(|c| EmbeddedPoint::new(flat.dim_m, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterModel {
        centroids,
        labels: best.labels,
        objective: best.objective,
        iters_run: best.iters,
        restart_of_best: best_idx,
        objective_history: best.history,
    })
}

/// Embeds `matrices`, runs [`fit`] and maps the centroids back to SPD.
pub fn fit_spd(
    matrices: &[SpdMatrix],
    cfg: &KmeansConfig,
) -> Result<(ClusterModel, Vec<SpdMatrix>)> {
    let points = matrices
        .par_iter()
        .map(spd::embed)
        .collect::<Result<Vec<_>>>()?;
    let model = fit(&points, cfg)?;
    let centers = model.spd_centroids();
    Ok((model, centers))
}

/// Nearest centroid per point, ties to the lowest centroid index.
pub fn assign(points: &[EmbeddedPoint], centroids: &[EmbeddedPoint]) -> Result<Vec<usize>> {
    let cflat = Flat::new(centroids).map_err(|e| match e {
        Error::EmptyInput(_) => Error::EmptyInput("assignment with no centroids"),
        other => other,
    })?;
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let flat = Flat::new(points)?;
    if flat.dim_m != cflat.dim_m {
        return Err(Error::DimensionMismatch {
            expected: cflat.dim_m,
            found: flat.dim_m,
        });
    }
    Ok(assign_flat(&flat, &cflat.data).0)
}

/// `(1/n) * sum_i min_j |x_i - c_j|^2`.
pub fn objective(points: &[EmbeddedPoint], centroids: &[EmbeddedPoint]) -> Result<f64> {
    let labels = assign(points, centroids)?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("objective of no points"));
    }
    let total: f64 = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| p.distance_sq(&centroids[l]))
        .sum();
    Ok(total / points.len() as f64)
}

/// Means of each label fiber; centroids of empty clusters are kept.
pub fn update_centroids(
    points: &[EmbeddedPoint],
    labels: &[usize],
    centroids: &[EmbeddedPoint],
) -> Result<Vec<EmbeddedPoint>> {
    if labels.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    let flat = Flat::new(points)?;
    let mut c: Vec<f64> = Flat::new(centroids)?.data;
    if let Some(&bad) = labels.iter().find(|&&l| l >= centroids.len()) {
        return Err(Error::InvalidConfig(format!("label {bad} out of range")));
    }
    update_flat(&flat, labels, &mut c);
    c.chunks_exact(flat.dim)
        .map(|row| EmbeddedPoint::new(flat.dim_m, row.to_vec()))
        .collect()
}

//! Evaluation and application metrics, and the hyperparameter sweep.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{self, BorderPolicy, FeatureConfig, FeatureSet, RasterStack};
use crate::kmeans::{self, KmeansConfig};
use crate::seed;

fn pairs(x: u64) -> i128 {
    let x = i128::from(x);
    x * (x - 1) / 2
}

/// Hubert–Arabie adjusted Rand index.
///
/// Computed from the contingency table in exact integer arithmetic. Returns
/// 0 when the maximum index equals its expectation (for instance when both
/// partitions are a single cluster).
pub fn adjusted_rand<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::EmptyInput("adjusted Rand index needs at least 2 points"));
    }
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: i128 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: i128 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: i128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    // scaled by 2 * total to stay integral
    let numer = 2 * (index * total - sum_a * sum_b);
    let denom = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(numer as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaFit {
    pub r2: f64,
    pub r2_adjusted: f64,
    pub groups: usize,
    pub n: usize,
}

/// One-way ANOVA of `y` on group membership:
/// `r2 = 1 - SS_within / SS_total`,
/// `r2_adjusted = 1 - (1 - r2)(n - 1)/(n - g)`.
pub fn anova_r2<G: Eq + Hash>(y: &[f64], groups: &[G]) -> Result<AnovaFit> {
    if y.len() != groups.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: groups.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ANOVA response"));
    }
    let n = y.len();
    let mut acc: HashMap<&G, (f64, usize)> = HashMap::new();
    for (v, g) in y.iter().zip(groups) {
        let e = acc.entry(g).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let g = acc.len();
    if g < 2 {
        return Err(Error::DegenerateGroups(format!("need at least 2 groups, got {g}")));
    }
    if n <= g {
        return Err(Error::DegenerateGroups(format!(
            "need more observations than groups ({n} <= {g})"
        )));
    }
    let means: HashMap<&G, f64> = acc.iter().map(|(k, (s, c))| (*k, s / *c as f64)).collect();
    let grand = y.iter().sum::<f64>() / n as f64;
    let ss_total: f64 = y.iter().map(|v| (v - grand).powi(2)).sum();
    if ss_total == 0.0 {
        return Err(Error::DegenerateGroups("response has zero variance".into()));
    }
    let ss_within: f64 = y
        .iter()
        .zip(groups)
        .map(|(v, gr)| (v - means[gr]).powi(2))
        .sum();
    let r2 = 1.0 - ss_within / ss_total;
    let r2_adjusted = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - g) as f64;
    Ok(AnovaFit {
        r2,
        r2_adjusted,
        groups: g,
        n,
    })
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `1 / (sd(cc) * sd(vh) * mean(cc))`, standard deviations with the
/// `1/(T-1)` normalization.
pub fn sargde_v1(cc: &[f64], vh: &[f64]) -> Result<f64> {
    if cc.len() < 2 || vh.len() < 2 {
        return Err(Error::DegenerateSeries(
            "SARGDE needs at least 2 observations per band".into(),
        ));
    }
    if cc.iter().chain(vh).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SARGDE input series"));
    }
    let (mu_cc, sd_cc) = mean_std(cc);
    let (_, sd_vh) = mean_std(vh);
    if sd_cc == 0.0 || sd_vh == 0.0 || mu_cc == 0.0 {
        return Err(Error::DegenerateSeries(format!(
            "zero factor (sd_cc = {sd_cc}, sd_vh = {sd_vh}, mean_cc = {mu_cc})"
        )));
    }
    Ok(1.0 / (sd_cc * sd_vh * mu_cc))
}

/// Per-pixel SARGDE (row-major); `None` for masked or degenerate pixels.
pub fn sargde_raster(cc: &RasterStack, vh: &RasterStack) -> Result<Vec<Option<f64>>> {
    if (cc.h(), cc.w()) != (vh.h(), vh.w()) {
        return Err(Error::DimensionMismatch {
            expected: cc.h() * cc.w(),
            found: vh.h() * vh.w(),
        });
    }
    let w = cc.w();
    Ok((0..cc.h() * w)
        .into_par_iter()
        .map(|px| {
            let (r, c) = (px / w, px % w);
            if cc.is_masked(r, c) || vh.is_masked(r, c) {
                return None;
            }
            sargde_v1(&cc.series(r, c), &vh.series(r, c)).ok()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRow<C> {
    pub cluster: C,
    pub size: usize,
    pub overlap_fraction: f64,
    pub flagged: bool,
}

/// Fraction of each cluster's members whose truth label is positive; a
/// cluster is flagged when that fraction is strictly above `threshold`.
pub fn overlap_report<C: Copy + Ord>(
    model_labels: &[C],
    truth: &[i64],
    threshold: f64,
) -> Result<Vec<OverlapRow<C>>> {
    if model_labels.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: model_labels.len(),
            right: truth.len(),
        });
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!(
            "overlap threshold {threshold} outside [0, 1]"
        )));
    }
    let mut counts: BTreeMap<C, (usize, usize)> = BTreeMap::new();
    for (&c, &t) in model_labels.iter().zip(truth) {
        let e = counts.entry(c).or_default();
        e.0 += 1;
        if t > 0 {
            e.1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(cluster, (size, pos))| {
            let overlap_fraction = pos as f64 / size as f64;
            OverlapRow {
                cluster,
                size,
                overlap_fraction,
                flagged: overlap_fraction > threshold,
            }
        })
        .collect())
}

/// Categorical raster; `None` marks pixels without a label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<Option<i64>>,
}

impl LabelRaster {
    /// From integer-valued floats; NaN means unlabelled.
    pub fn from_f64(h: usize, w: usize, values: &[f64]) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::DimensionMismatch {
                expected: h * w,
                found: values.len(),
            });
        }
        let labels = values
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    Ok(None)
                } else if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 {
                    Ok(Some(v as i64))
                } else {
                    Err(Error::Format(format!("label value {v} is not an integer")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h, w, labels })
    }

    pub fn get(&self, row: usize, col: usize) -> Option<i64> {
        self.labels[row * self.w + col]
    }
}

/// Majority label per `p x p` block (ties to the smaller label), on the same
/// grid [`features::patch_average`] produces.
pub fn majority_vote_patch(truth: &LabelRaster, p: usize, policy: BorderPolicy) -> Result<LabelRaster> {
    if p == 0 {
        return Err(Error::InvalidConfig("patch size must be at least 1".into()));
    }
    let (hp, wp) = (policy.patched_len(truth.h, p), policy.patched_len(truth.w, p));
    if hp == 0 || wp == 0 {
        return Err(Error::DegenerateOutput(format!(
            "patch size {p} leaves an empty {hp}x{wp} grid"
        )));
    }
    let mut labels = Vec::with_capacity(hp * wp);
    for br in 0..hp {
        for bc in 0..wp {
            let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
            for r in br * p..((br + 1) * p).min(truth.h) {
                for c in bc * p..((bc + 1) * p).min(truth.w) {
                    if let Some(l) = truth.get(r, c) {
                        *votes.entry(l).or_default() += 1;
                    }
                }
            }
            let mut best: Option<(i64, usize)> = None;
            for (l, n) in votes {
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((l, n));
                }
            }
            labels.push(best.map(|(l, _)| l));
        }
    }
    Ok(LabelRaster {
        h: hp,
        w: wp,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub lags: Vec<usize>,
    pub patches: Vec<usize>,
    pub ks: Vec<usize>,
    /// `k` is overridden per cell; the seed is the sweep's base seed.
    pub kmeans: KmeansConfig,
    pub jitter: f64,
    pub border_policy: BorderPolicy,
}

impl SweepConfig {
    pub fn new(lags: Vec<usize>, patches: Vec<usize>, ks: Vec<usize>, seed: u64) -> Self {
        Self {
            lags,
            patches,
            ks,
            kmeans: KmeansConfig::new(1).with_seed(seed),
            jitter: 1e-10,
            border_policy: BorderPolicy::DropPartial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub band: String,
    pub lag: usize,
    pub patch: usize,
    pub k: usize,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: Vec<SweepRecord>,
    pub best: SweepRecord,
}

/// Seed for one sweep cell; a function of the cell coordinates only.
pub fn cell_seed(base: u64, band: &str, lag: usize, patch: usize, k: usize) -> u64 {
    seed::derive(
        base,
        &[seed::hash_str(band), lag as u64, patch as u64, k as u64],
    )
}

fn cell_ari(
    band: &str,
    features: &FeatureSet,
    truth: &LabelRaster,
    lag: usize,
    patch: usize,
    k: usize,
    cfg: &SweepConfig,
) -> Result<f64> {
    let kcfg = KmeansConfig {
        k,
        seed: cell_seed(cfg.kmeans.seed, band, lag, patch, k),
        ..cfg.kmeans.clone()
    };
    let model = kmeans::fit(&features.points, &kcfg)?;
    let (mut pred, mut actual) = (Vec::new(), Vec::new());
    for (&label, &(r, c)) in model.labels.iter().zip(&features.pixel_index) {
        if let Some(t) = truth.get(r, c) {
            pred.push(label);
            actual.push(t);
        }
    }
    if pred.len() < 2 {
        return Err(Error::DegenerateOutput(format!(
            "fewer than 2 labelled feature pixels in cell band={band} lag={lag} patch={patch}"
        )));
    }
    adjusted_rand(&pred, &actual)
}

fn check_truth_dims(stack: &RasterStack, truth: &LabelRaster) -> Result<()> {
    if (stack.h(), stack.w()) != (truth.h, truth.w) {
        return Err(Error::DimensionMismatch {
            expected: stack.h() * stack.w(),
            found: truth.h * truth.w,
        });
    }
    Ok(())
}

fn features_for(stack: &RasterStack, lag: usize, patch: usize, cfg: &SweepConfig) -> Result<FeatureSet> {
    let fcfg = FeatureConfig {
        lag,
        patch,
        jitter: cfg.jitter,
        border_policy: cfg.border_policy,
    };
    features::build_features(stack, &fcfg)
}

/// ARI of a single sweep cell, computed from scratch.
pub fn sweep_cell(
    stack: &RasterStack,
    truth: &LabelRaster,
    lag: usize,
    patch: usize,
    k: usize,
    cfg: &SweepConfig,
) -> Result<f64> {
    check_truth_dims(stack, truth)?;
    let fs = features_for(stack, lag, patch, cfg)?;
    let patched = majority_vote_patch(truth, patch, cfg.border_policy)?;
    cell_ari(stack.band_name(), &fs, &patched, lag, patch, k, cfg)
}

/// Full grid over bands x patches x lags x ks, in that nesting order.
pub fn sweep(stacks: &[RasterStack], truth: &LabelRaster, cfg: &SweepConfig) -> Result<SweepResult> {
    if stacks.is_empty() || cfg.lags.is_empty() || cfg.patches.is_empty() || cfg.ks.is_empty() {
        return Err(Error::EmptyInput("sweep grid axis"));
    }
    for s in stacks {
        check_truth_dims(s, truth)?;
    }
    let mut groups = Vec::new();
    for s in stacks {
        for &p in &cfg.patches {
            for &l in &cfg.lags {
                groups.push((s, p, l));
            }
        }
    }
    let per_group = groups
        .par_iter()
        .map(|&(stack, patch, lag)| {
            let fs = features_for(stack, lag, patch, cfg)?;
            let patched = majority_vote_patch(truth, patch, cfg.border_policy)?;
            cfg.ks
                .iter()
                .map(|&k| {
                    cell_ari(stack.band_name(), &fs, &patched, lag, patch, k, cfg).map(|ari| {
                        SweepRecord {
                            band: stack.band_name().to_string(),
                            lag,
                            patch,
                            k,
                            ari,
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<SweepRecord> = per_group.into_iter().flatten().collect();
    let mut best = &grid[0];
    for r in &grid[1..] {
        if r.ari > best.ari || (r.ari == best.ari && (r.lag, r.patch, r.k) < (best.lag, best.patch, best.k)) {
            best = r;
        }
    }
    let best = best.clone();
    Ok(SweepResult { grid, best })
}

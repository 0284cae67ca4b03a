//! Raster time-series to log-Cholesky features.
//!
//! Pipeline per band: average the raw series over non-overlapping `p x p`
//! blocks, compute the `(lag+1) x (lag+1)` Toeplitz autocovariance matrix of
//! each block's series, and embed it.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spd::{self, EmbeddedPoint, SpdMatrix};

/// Largest relative jitter tried before giving up on a singular autocovariance.
const MAX_JITTER: f64 = 1e-3;

/// One band of a `T x H x W` image time-series, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    band_name: String,
    t: usize,
    h: usize,
    w: usize,
    values: Vec<f64>,
    nodata_mask: Option<Vec<bool>>,
}

impl RasterStack {
    pub fn new(
        band_name: impl Into<String>,
        t: usize,
        h: usize,
        w: usize,
        values: Vec<f64>,
        nodata_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if t < 2 {
            return Err(Error::InvalidConfig(format!(
                "raster stack needs at least 2 time steps, got {t}"
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidConfig(format!(
                "raster stack has empty grid {h}x{w}"
            )));
        }
        if values.len() != t * h * w {
            return Err(Error::DimensionMismatch {
                expected: t * h * w,
                found: values.len(),
            });
        }
        if let Some(mask) = &nodata_mask {
            if mask.len() != h * w {
                return Err(Error::DimensionMismatch {
                    expected: h * w,
                    found: mask.len(),
                });
            }
        }
        let stack = Self {
            band_name: band_name.into(),
            t,
            h,
            w,
            values,
            nodata_mask,
        };
        for px in 0..h * w {
            if !stack.masked_at(px) && (0..t).any(|ti| !stack.values[ti * h * w + px].is_finite()) {
                return Err(Error::NonFinite("unmasked raster values"));
            }
        }
        Ok(stack)
    }

    /// Builds a stack where any pixel with a non-finite value (NaN = nodata)
    /// is masked.
    pub fn from_nan_masked(
        band_name: impl Into<String>,
        t: usize,
        h: usize,
        w: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != t * h * w {
            return Err(Error::DimensionMismatch {
                expected: t * h * w,
                found: values.len(),
            });
        }
        let hw = h * w;
        let mask: Vec<bool> = (0..hw)
            .map(|px| (0..t).any(|ti| !values[ti * hw + px].is_finite()))
            .collect();
        let mask = mask.iter().any(|&m| m).then_some(mask);
        Self::new(band_name, t, h, w, values, mask)
    }

    pub fn band_name(&self) -> &str {
        &self.band_name
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodata_mask(&self) -> Option<&[bool]> {
        self.nodata_mask.as_deref()
    }

    fn masked_at(&self, px: usize) -> bool {
        self.nodata_mask.as_ref().is_some_and(|m| m[px])
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.masked_at(row * self.w + col)
    }

    pub fn value(&self, t: usize, row: usize, col: usize) -> f64 {
        self.values[t * self.h * self.w + row * self.w + col]
    }

    pub fn series(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.value(t, row, col)).collect()
    }

    /// Keeps the first `t` time steps.
    pub fn truncate_time(&self, t: usize) -> Result<Self> {
        if t > self.t {
            return Err(Error::InvalidConfig(format!(
                "cannot truncate {} time steps to {t}",
                self.t
            )));
        }
        Self::new(
            self.band_name.clone(),
            t,
            self.h,
            self.w,
            self.values[..t * self.h * self.w].to_vec(),
            self.nodata_mask.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// Partial blocks at the right and bottom edges are discarded.
    #[default]
    DropPartial,
    /// Partial blocks are kept and averaged over the pixels they contain.
    AveragePartial,
}

impl BorderPolicy {
    /// Patched grid length along one axis.
    pub fn patched_len(self, len: usize, p: usize) -> usize {
        match self {
            BorderPolicy::DropPartial => len / p,
            BorderPolicy::AveragePartial => len.div_ceil(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub lag: usize,
    pub patch: usize,
    /// Diagonal regularization, relative to the lag-0 autocovariance.
    pub jitter: f64,
    pub border_policy: BorderPolicy,
}

impl FeatureConfig {
    pub fn new(lag: usize, patch: usize) -> Self {
        Self {
            lag,
            patch,
            jitter: 1e-10,
            border_policy: BorderPolicy::DropPartial,
        }
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if self.patch == 0 {
            return Err(Error::InvalidConfig("patch size must be at least 1".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidConfig(
                "jitter must be finite and non-negative".into(),
            ));
        }
        if t < self.lag + 2 {
            return Err(Error::LagTooLarge { lag: self.lag, t });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    Masked,
    ConstantSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExcludedPixel {
    pub row: usize,
    pub col: usize,
    pub reason: ExclusionReason,
}

/// Embedded autocovariance features of one band on the patched grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Matrix dimension, `lag + 1`.
    pub m: usize,
    pub points: Vec<EmbeddedPoint>,
    /// Patched-grid `(row, col)` of each point.
    pub pixel_index: Vec<(usize, usize)>,
    /// Patched grid `(H', W')`.
    pub grid_dims: (usize, usize),
    pub excluded: Vec<ExcludedPixel>,
}

/// Non-overlapping `p x p` block means anchored at the top-left corner.
/// Masked pixels are skipped; a block with no unmasked pixel is masked.
pub fn patch_average(stack: &RasterStack, p: usize, policy: BorderPolicy) -> Result<RasterStack> {
    if p == 0 {
        return Err(Error::InvalidConfig("patch size must be at least 1".into()));
    }
    let (hp, wp) = (policy.patched_len(stack.h, p), policy.patched_len(stack.w, p));
    if hp == 0 || wp == 0 {
        return Err(Error::DegenerateOutput(format!(
            "patch size {p} leaves an empty {hp}x{wp} grid from {}x{}",
            stack.h, stack.w
        )));
    }
    if p == 1 {
        return Ok(stack.clone());
    }
    let t = stack.t;
    let mut values = vec![f64::NAN; t * hp * wp];
    let mut mask = vec![false; hp * wp];
    for br in 0..hp {
        for bc in 0..wp {
            let members: Vec<(usize, usize)> = (br * p..((br + 1) * p).min(stack.h))
                .flat_map(|r| (bc * p..((bc + 1) * p).min(stack.w)).map(move |c| (r, c)))
                .filter(|&(r, c)| !stack.is_masked(r, c))
                .collect();
            let out_px = br * wp + bc;
            if members.is_empty() {
                mask[out_px] = true;
                continue;
            }
            let count = members.len() as f64;
            for ti in 0..t {
                let sum: f64 = members.iter().map(|&(r, c)| stack.value(ti, r, c)).sum();
                values[ti * hp * wp + out_px] = sum / count;
            }
        }
    }
    let mask = mask.iter().any(|&m| m).then_some(mask);
    RasterStack::new(stack.band_name.clone(), t, hp, wp, values, mask)
}

/// Biased sample autocovariances `gamma(0..=lag)`:
/// `gamma(h) = (1/T) * sum_{t < T-h} (x_t - mean)(x_{t+h} - mean)`.
pub fn autocovariances(series: &[f64], lag: usize) -> Result<Vec<f64>> {
    let t = series.len();
    if t < lag + 2 {
        return Err(Error::LagTooLarge { lag, t });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("time series"));
    }
    let mean = series.iter().sum::<f64>() / t as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    Ok((0..=lag)
        .map(|h| {
            centered[..t - h]
                .iter()
                .zip(&centered[h..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / t as f64
        })
        .collect())
}

/// Symmetric Toeplitz matrix with `M[i][j] = gamma[|i - j|]`.
pub fn toeplitz(gamma: &[f64]) -> DMatrix<f64> {
    let n = gamma.len();
    DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)])
}

/// Lag autocovariance matrix plus `jitter * gamma(0)` on the diagonal.
///
/// If that is still not numerically positive definite the relative jitter is
/// raised tenfold at a time, up to `1e-3`.
pub fn autocov_matrix(series: &[f64], lag: usize, jitter: f64) -> Result<SpdMatrix> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidConfig(
            "jitter must be finite and non-negative".into(),
        ));
    }
    let gamma = autocovariances(series, lag)?;
    let first = series[0];
    if series.iter().all(|&x| x == first) || gamma[0] <= 0.0 {
        return Err(Error::ConstantSeries);
    }
    let base = toeplitz(&gamma);
    let mut rel = jitter;
    loop {
        let mut m = base.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += rel * gamma[0];
        }
        match SpdMatrix::new(m) {
            Ok(s) => return Ok(s),
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                if rel >= MAX_JITTER {
                    return Err(e);
                }
                rel = (rel * 10.0).max(1e-12);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Patch, then per patched pixel build and embed the autocovariance matrix.
/// Masked and constant pixels are recorded in `excluded` and produce no point.
pub fn build_features(stack: &RasterStack, cfg: &FeatureConfig) -> Result<FeatureSet> {
    cfg.validate(stack.t)?;
    let patched = patch_average(stack, cfg.patch, cfg.border_policy)?;
    let (hp, wp) = (patched.h, patched.w);
    enum Cell {
        Point(EmbeddedPoint),
        Skip(ExclusionReason),
    }
    let cells = (0..hp * wp)
        .into_par_iter()
        .map(|px| {
            let (row, col) = (px / wp, px % wp);
            if patched.is_masked(row, col) {
                return Ok(Cell::Skip(ExclusionReason::Masked));
            }
            match autocov_matrix(&patched.series(row, col), cfg.lag, cfg.jitter) {
                Ok(s) => spd::embed(&s).map(Cell::Point),
                Err(Error::ConstantSeries) => Ok(Cell::Skip(ExclusionReason::ConstantSeries)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = FeatureSet {
        m: cfg.lag + 1,
        points: Vec::new(),
        pixel_index: Vec::new(),
        grid_dims: (hp, wp),
        excluded: Vec::new(),
    };
    for (px, cell) in cells.into_iter().enumerate() {
        let (row, col) = (px / wp, px % wp);
        match cell {
            Cell::Point(p) => {
                set.points.push(p);
                set.pixel_index.push((row, col));
            }
            Cell::Skip(reason) => set.excluded.push(ExcludedPixel { row, col, reason }),
        }
    }
    Ok(set)
}

//! Synthetic data with known ground truth, for tests and demos.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::features::RasterStack;
use crate::metrics::LabelRaster;
use crate::seed;
use crate::spd::{self, EmbeddedPoint, SpdMatrix};

/// Equal-weight Gaussian mixture in embedded coordinates, pushed through
/// `unembed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMixture {
    pub m: usize,
    pub centers: Vec<EmbeddedPoint>,
    pub spread: f64,
}

impl SpdMixture {
    /// Three 2x2 components at the corners of an equilateral triangle of side
    /// `separation` in the first two embedded coordinates.
    pub fn three_component(separation: f64, spread: f64) -> Self {
        let h = separation * 3f64.sqrt() / 2.0;
        let centers = [[0.0, 0.0, 0.0], [separation, 0.0, 0.0], [separation / 2.0, h, 0.0]]
            .iter()
            .map(|c| EmbeddedPoint::new(2, c.to_vec()).expect("valid center"))
            .collect();
        Self {
            m: 2,
            centers,
            spread,
        }
    }

    /// `n` draws and their generating component.
    pub fn sample(&self, n: usize, seed: u64) -> (Vec<SpdMatrix>, Vec<usize>) {
        let (points, labels) = self.sample_embedded(n, seed);
        (points.iter().map(spd::unembed).collect(), labels)
    }

    pub fn sample_embedded(&self, n: usize, seed: u64) -> (Vec<EmbeddedPoint>, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let k = self.centers.len();
        (0..n)
            .map(|_| {
                let c = rng.random_range(0..k);
                let p = spd::sample_embedded(self.m, self.spread, Some(&self.centers[c]), &mut rng);
                (p, c)
            })
            .unzip()
    }
}

/// Parameters of [`tiled_class_stack`].
#[derive(Debug, Clone, PartialEq)]
pub struct TiledStackSpec {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub classes: usize,
    /// Side of the square tiles that carry one class each.
    pub tile: usize,
    /// Standard deviation of the per-pixel noise added to the class signal.
    pub noise: f64,
    pub seed: u64,
}

/// A single-band stack whose pixels follow one of `classes` temporal
/// signatures, laid out in square tiles, with the matching label raster.
///
/// Class `c` has a shared AR(1) signal with coefficient spread over
/// `[-0.6, 0.8]` and innovation scale `1 + c`; every pixel adds independent
/// Gaussian noise to its class signal.
pub fn tiled_class_stack(spec: &TiledStackSpec) -> Result<(RasterStack, LabelRaster)> {
    let &TiledStackSpec { t, h, w, classes, tile, noise, seed } = spec;
    assert!(classes >= 1 && tile >= 1, "classes and tile must be positive");
    let mut rng = seed::rng(seed);
    let signals: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let phi = if classes == 1 {
                0.5
            } else {
                -0.6 + 1.4 * c as f64 / (classes - 1) as f64
            };
            let scale = 1.0 + c as f64;
            let mut x = 0.0;
            // burn-in so the signal starts near stationarity
            (0..t + 50)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x = phi * x + scale * z;
                    x
                })
                .skip(50)
                .collect()
        })
        .collect();
    let class_of = |r: usize, c: usize| (r / tile + c / tile) % classes;
    let mut values = vec![0.0; t * h * w];
    for r in 0..h {
        for c in 0..w {
            let sig = &signals[class_of(r, c)];
            for ti in 0..t {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[ti * h * w + r * w + c] = 10.0 + sig[ti] + noise * z;
            }
        }
    }
    let labels = (0..h * w).map(|px| Some(class_of(px / w, px % w) as i64)).collect();
    let stack = RasterStack::new("SYN", t, h, w, values, None)?;
    Ok((stack, LabelRaster { h, w, labels }))
}

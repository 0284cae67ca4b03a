//! SPD matrices, their Cholesky factors and the log-Cholesky embedding.
//!
//! For an SPD matrix `S` with Cholesky factor `L` (lower triangular, positive
//! diagonal), the embedding is
//!
//! ```text
//! embed(S) = (strict lower entries of L, column-major; ln L_11, ..., ln L_mm)
//! ```
//!
//! a bijection onto `R^{m(m+1)/2}`. The log-Cholesky distance between two SPD
//! matrices is the Euclidean distance between their embeddings, and the
//! Fréchet mean of a finite set is `unembed` of the mean embedding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

/// Relative asymmetry accepted (and symmetrized away) by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Dense symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    inner: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates and wraps `m`.
    ///
    /// Inputs whose asymmetry is within `1e-8 * max|m|` are replaced by
    /// `(m + m^T) / 2`; anything more asymmetric is rejected. Positive
    /// definiteness is checked with the same pivot rule as [`cholesky`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyInput("matrix of dimension 0"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        let n = m.nrows();
        let scale = max_abs(&m);
        let tolerance = SYMMETRY_TOL * scale;
        let mut asymmetry = 0.0f64;
        for j in 0..n {
            for i in (j + 1)..n {
                asymmetry = asymmetry.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asymmetry > tolerance {
            return Err(Error::NotSymmetric {
                asymmetry,
                tolerance,
            });
        }
        let sym = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)])
            }
        });
        cholesky_lower(&sym)?;
        Ok(Self { inner: sym })
    }

    /// Builds from a row-major slice of length `dim * dim`.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut flat = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::NotSquare {
                    rows: dim,
                    cols: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::from_row_major(dim, &flat)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            diag,
        )))
    }

    /// Wraps a matrix known to be exactly symmetric and positive definite.
    pub(crate) fn from_symmetric_unchecked(inner: DMatrix<f64>) -> Self {
        debug_assert_eq!(inner, inner.transpose());
        Self { inner }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }
}

/// Lower triangular matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    inner: DMatrix<f64>,
}

impl CholFactor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Cholesky factor entries"));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "Cholesky factor has nonzero entry above the diagonal at ({i}, {j})"
                    )));
                }
            }
            if m[(j, j)] <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: m[(j, j)],
                    tolerance: 0.0,
                });
            }
        }
        Ok(Self { inner: m })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// Point of `R^{m(m+1)/2}` in the image of [`embed`].
///
/// Layout: the `m(m-1)/2` strict-lower Cholesky entries in column-major order,
/// followed by the `m` log-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoint {
    dim_m: usize,
    coords: Vec<f64>,
}

impl EmbeddedPoint {
    pub fn new(dim_m: usize, coords: Vec<f64>) -> Result<Self> {
        if dim_m == 0 {
            return Err(Error::EmptyInput("embedded point of matrix dimension 0"));
        }
        let expected = embedding_dim(dim_m);
        if coords.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: coords.len(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedded coordinates"));
        }
        Ok(Self { dim_m, coords })
    }

    /// Infers the matrix dimension from the coordinate count.
    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        let dim_m = matrix_dim_for(coords.len())?;
        Self::new(dim_m, coords)
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn distance_sq(&self, other: &EmbeddedPoint) -> f64 {
        squared_euclidean(&self.coords, &other.coords)
    }
}

/// `m(m+1)/2`.
pub fn embedding_dim(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Inverse of [`embedding_dim`]; fails on non-triangular lengths.
pub fn matrix_dim_for(len: usize) -> Result<usize> {
    let mut m = 0usize;
    while embedding_dim(m) < len {
        m += 1;
    }
    if m == 0 || embedding_dim(m) != len {
        return Err(Error::DimensionMismatch {
            expected: embedding_dim(m.max(1)),
            found: len,
        });
    }
    Ok(m)
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Column-oriented Cholesky with the pivot threshold `dim * eps * max|S|`.
fn cholesky_lower(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    let tolerance = n as f64 * f64::EPSILON * max_abs(s);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = s[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot.is_nan() || pivot <= tolerance {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
                tolerance,
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Cholesky factor `L` with `L L^T = S`.
pub fn cholesky(s: &SpdMatrix) -> Result<CholFactor> {
    cholesky_lower(&s.inner).map(|inner| CholFactor { inner })
}

/// `L L^T`, computed on the lower triangle and mirrored so the result is
/// exactly symmetric.
pub fn from_cholesky(l: &CholFactor) -> SpdMatrix {
    let n = l.dim();
    let lm = &l.inner;
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut v = 0.0;
            for k in 0..=j {
                v += lm[(i, k)] * lm[(j, k)];
            }
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    SpdMatrix::from_symmetric_unchecked(s)
}

fn embed_factor(l: &CholFactor) -> EmbeddedPoint {
    let n = l.dim();
    let mut coords = Vec::with_capacity(embedding_dim(n));
    for j in 0..n {
        for i in (j + 1)..n {
            coords.push(l.inner[(i, j)]);
        }
    }
    for i in 0..n {
        coords.push(l.inner[(i, i)].ln());
    }
    EmbeddedPoint { dim_m: n, coords }
}

/// Log-Cholesky embedding of `s`.
pub fn embed(s: &SpdMatrix) -> Result<EmbeddedPoint> {
    cholesky(s).map(|l| embed_factor(&l))
}

/// Cholesky factor encoded by an embedded point.
pub fn unembed_factor(v: &EmbeddedPoint) -> CholFactor {
    let n = v.dim_m;
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in (j + 1)..n {
            l[(i, j)] = v.coords[idx];
            idx += 1;
        }
    }
    for i in 0..n {
        l[(i, i)] = v.coords[idx].exp();
        idx += 1;
    }
    CholFactor { inner: l }
}

/// Inverse of [`embed`]. Every finite point maps to an SPD matrix since the
/// diagonal of the factor is `exp` of the trailing coordinates.
pub fn unembed(v: &EmbeddedPoint) -> SpdMatrix {
    from_cholesky(&unembed_factor(v))
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Log-Cholesky distance, evaluated directly on the two Cholesky factors:
/// Frobenius distance of the strict lower parts combined with the Frobenius
/// distance of the log-diagonals.
pub fn log_cholesky_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let la = cholesky(a)?;
    let lb = cholesky(b)?;
    let n = a.dim();
    let mut strict = 0.0;
    let mut diag = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            let d = la.inner[(i, j)] - lb.inner[(i, j)];
            strict += d * d;
        }
        let d = la.inner[(j, j)].ln() - lb.inner[(j, j)].ln();
        diag += d * d;
    }
    Ok((strict + diag).sqrt())
}

/// Empirical dispersion `sum_i d^2(a, S_i)`.
pub fn dispersion(a: &SpdMatrix, set: &[SpdMatrix]) -> Result<f64> {
    let mut total = 0.0;
    for s in set {
        let d = log_cholesky_distance(a, s)?;
        total += d * d;
    }
    Ok(total)
}

fn check_set(set: &[SpdMatrix]) -> Result<usize> {
    let first = set.first().ok_or(Error::EmptyInput("Fréchet mean of no matrices"))?;
    let m = first.dim();
    for s in set {
        check_same_dim(m, s.dim())?;
    }
    Ok(m)
}

/// Arithmetic mean of embedded points, coordinate-wise.
pub fn mean_point(points: &[EmbeddedPoint]) -> Result<EmbeddedPoint> {
    let first = points
        .first()
        .ok_or(Error::EmptyInput("mean of no points"))?;
    let mut acc = vec![0.0; first.coords.len()];
    for p in points {
        check_same_dim(first.dim_m, p.dim_m)?;
        for (a, c) in acc.iter_mut().zip(&p.coords) {
            *a += c;
        }
    }
    let n = points.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(EmbeddedPoint {
        dim_m: first.dim_m,
        coords: acc,
    })
}

/// Log-Cholesky Fréchet mean, computed as `unembed(mean(embed(S_i)))`.
pub fn frechet_mean(set: &[SpdMatrix]) -> Result<SpdMatrix> {
    check_set(set)?;
    let points = set.iter().map(embed).collect::<Result<Vec<_>>>()?;
    Ok(unembed(&mean_point(&points)?))
}

/// Log-Cholesky Fréchet mean assembled in factor space: the strict lower part
/// is the average of the factors' strict lower parts and the diagonal is the
/// exponential of the averaged log-diagonals.
pub fn frechet_mean_cholesky(set: &[SpdMatrix]) -> Result<SpdMatrix> {
    let m = check_set(set)?;
    let weight = 1.0 / set.len() as f64;
    let mut strict = DMatrix::<f64>::zeros(m, m);
    let mut log_diag = vec![0.0; m];
    for s in set {
        let l = cholesky(s)?;
        for j in 0..m {
            for i in (j + 1)..m {
                strict[(i, j)] += l.inner[(i, j)] * weight;
            }
            log_diag[j] += l.inner[(j, j)].ln() * weight;
        }
    }
    for (j, ld) in log_diag.iter().enumerate() {
        strict[(j, j)] = ld.exp();
    }
    Ok(from_cholesky(&CholFactor { inner: strict }))
}

/// Analytic matrix function through the symmetric eigendecomposition
/// `S = U diag(lambda) U^T  =>  f(S) = U diag(f(lambda)) U^T`.
pub fn matrix_function<F>(s: &SpdMatrix, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> f64,
{
    let n = s.dim();
    let eig = s
        .inner
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    let u = &eig.eigenvectors;
    let fl: Vec<f64> = eig.eigenvalues.iter().map(|&l| f(l)).collect();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (0..n).map(|k| u[(i, k)] * fl[k] * u[(j, k)]).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Embedded point with i.i.d. `N(0, spread^2)` coordinates, shifted by
/// `center` when given.
pub fn sample_embedded<R: Rng + ?Sized>(
    m: usize,
    spread: f64,
    center: Option<&EmbeddedPoint>,
    rng: &mut R,
) -> EmbeddedPoint {
    assert!(m >= 1, "matrix dimension must be positive");
    assert!(
        spread.is_finite() && spread >= 0.0,
        "spread must be finite and non-negative"
    );
    let len = embedding_dim(m);
    let coords = (0..len)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            center.map_or(0.0, |c| c.coords[i]) + spread * z
        })
        .collect();
    EmbeddedPoint { dim_m: m, coords }
}

/// Deterministic random SPD matrix: `unembed` of a Gaussian embedded point
/// with standard deviation `spread` per coordinate.
pub fn sample_spd(m: usize, seed: u64, spread: f64) -> SpdMatrix {
    let mut rng = seed::rng(seed);
    unembed(&sample_embedded(m, spread, None, &mut rng))
}

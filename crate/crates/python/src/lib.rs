//! Python bindings. Matrices cross the boundary as lists of rows and
//! embedded points as flat lists of floats.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use spdkmeans::spd::{self, EmbeddedPoint, SpdMatrix};
use spdkmeans::tensor_file::TensorFile;
use spdkmeans::{features, kmeans, metrics, model_select, Error, KmeansConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SpdMatrix> {
    SpdMatrix::from_rows(&rows).map_err(to_py)
}

fn spd_rows(s: &SpdMatrix) -> Vec<Vec<f64>> {
    s.to_row_major().chunks(s.dim()).map(<[f64]>::to_vec).collect()
}

fn point(coords: Vec<f64>) -> PyResult<EmbeddedPoint> {
    EmbeddedPoint::from_coords(coords).map_err(to_py)
}

/// Lower Cholesky factor of an SPD matrix.
#[pyfunction]
fn cholesky(s: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let l = spd::cholesky(&matrix(s)?).map_err(to_py)?;
    let n = l.dim();
    Ok((0..n).map(|i| (0..n).map(|j| l.get(i, j)).collect()).collect())
}

/// Log-Cholesky coordinates: strict-lower factor entries, then log-diagonal.
#[pyfunction]
fn embed(s: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(spd::embed(&matrix(s)?).map_err(to_py)?.into_coords())
}

#[pyfunction]
fn unembed(v: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(spd_rows(&spd::unembed(&point(v)?)))
}

#[pyfunction]
fn log_cholesky_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    spd::log_cholesky_distance(&matrix(a)?, &matrix(b)?).map_err(to_py)
}

#[pyfunction]
fn frechet_mean(set: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let set = set.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    Ok(spd_rows(&spd::frechet_mean(&set).map_err(to_py)?))
}

/// `f(S)` through the eigendecomposition, for `f` in `log`, `exp`, `sqrt`.
#[pyfunction]
fn matrix_function(s: Vec<Vec<f64>>, name: &str) -> PyResult<Vec<Vec<f64>>> {
    let f: fn(f64) -> f64 = match name {
        "log" => f64::ln,
        "exp" => f64::exp,
        "sqrt" => f64::sqrt,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown matrix function {other:?}, expected log, exp or sqrt"
            )))
        }
    };
    let out = spd::matrix_function(&matrix(s)?, f).map_err(to_py)?;
    let n = out.nrows();
    Ok((0..n).map(|i| (0..n).map(|j| out[(i, j)]).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (m, seed, spread=1.0))]
fn sample_spd(m: usize, seed: u64, spread: f64) -> PyResult<Vec<Vec<f64>>> {
    if m == 0 || !(spread.is_finite() && spread >= 0.0) {
        return Err(PyValueError::new_err("need m >= 1 and a finite spread >= 0"));
    }
    Ok(spd_rows(&spd::sample_spd(m, seed, spread)))
}

#[pyclass(name = "ClusterModel", frozen)]
struct PyClusterModel {
    #[pyo3(get)]
    centroids: Vec<Vec<f64>>,
    #[pyo3(get)]
    labels: Vec<usize>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    iters_run: usize,
    #[pyo3(get)]
    objective_history: Vec<f64>,
}

#[pymethods]
impl PyClusterModel {
    /// Centroids as SPD matrices.
    fn spd_centroids(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        self.centroids
            .iter()
            .map(|c| Ok(spd_rows(&spd::unembed(&point(c.clone())?))))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "ClusterModel(k={}, objective={}, iters_run={})",
            self.centroids.len(),
            self.objective,
            self.iters_run
        )
    }
}

fn points(raw: Vec<Vec<f64>>) -> PyResult<Vec<EmbeddedPoint>> {
    raw.into_iter().map(point).collect()
}

fn config(k: usize, restarts: usize, seed: u64) -> KmeansConfig {
    KmeansConfig::new(k).with_restarts(restarts).with_seed(seed)
}

/// k-means on embedded points (rows of log-Cholesky coordinates).
#[pyfunction]
#[pyo3(signature = (points, k, restarts=8, seed=0))]
fn kmeans_fit(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<PyClusterModel> {
    let pts = self::points(points)?;
    let cfg = config(k, restarts, seed);
    let model = py.detach(|| kmeans::fit(&pts, &cfg)).map_err(to_py)?;
    Ok(PyClusterModel {
        centroids: model.centroids.into_iter().map(EmbeddedPoint::into_coords).collect(),
        labels: model.labels,
        objective: model.objective,
        iters_run: model.iters_run,
        objective_history: model.objective_history,
    })
}

/// k-means on SPD matrices; returns the model and the SPD centroids.
#[pyfunction]
#[pyo3(signature = (matrices, k, restarts=8, seed=0))]
fn kmeans_fit_spd(
    py: Python<'_>,
    matrices: Vec<Vec<Vec<f64>>>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<(PyClusterModel, Vec<Vec<Vec<f64>>>)> {
    let mats = matrices.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    let cfg = config(k, restarts, seed);
    let (model, centers) = py.detach(|| kmeans::fit_spd(&mats, &cfg)).map_err(to_py)?;
    let centers = centers.iter().map(spd_rows).collect();
    Ok((
        PyClusterModel {
            centroids: model.centroids.into_iter().map(EmbeddedPoint::into_coords).collect(),
            labels: model.labels,
            objective: model.objective,
            iters_run: model.iters_run,
            objective_history: model.objective_history,
        },
        centers,
    ))
}

type CandidateRow = (usize, f64, f64, f64);

/// Penalized choice of k. Returns `(chosen_k, [(k, objective, penalty, score), ...])`.
#[pyfunction]
#[pyo3(signature = (points, ks, restarts=8, seed=0))]
fn select_k(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    ks: Vec<usize>,
    restarts: usize,
    seed: u64,
) -> PyResult<(usize, Vec<CandidateRow>)> {
    let pts = self::points(points)?;
    let cfg = config(1, restarts, seed);
    let report = py
        .detach(|| model_select::select_k_points(&pts, &ks, &cfg))
        .map_err(to_py)?;
    let rows = report
        .candidates
        .iter()
        .map(|c| (c.k, c.objective, c.penalty, c.score))
        .collect();
    Ok((report.chosen_k, rows))
}

/// Jittered `(lag + 1) x (lag + 1)` autocovariance matrix of a series.
#[pyfunction]
#[pyo3(signature = (series, lag, jitter=1e-10))]
fn autocov_matrix(series: Vec<f64>, lag: usize, jitter: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(spd_rows(
        &features::autocov_matrix(&series, lag, jitter).map_err(to_py)?,
    ))
}

#[pyfunction]
fn adjusted_rand(a: Vec<i64>, b: Vec<i64>) -> PyResult<f64> {
    metrics::adjusted_rand(&a, &b).map_err(to_py)
}

/// One-way ANOVA; returns `(r2, r2_adjusted)`.
#[pyfunction]
fn anova_r2(y: Vec<f64>, groups: Vec<i64>) -> PyResult<(f64, f64)> {
    let fit = metrics::anova_r2(&y, &groups).map_err(to_py)?;
    Ok((fit.r2, fit.r2_adjusted))
}

#[pyfunction]
fn sargde_v1(cc: Vec<f64>, vh: Vec<f64>) -> PyResult<f64> {
    metrics::sargde_v1(&cc, &vh).map_err(to_py)
}

/// Returns `(dims, flat row-major data)`.
#[pyfunction]
fn read_tensor(path: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let t = TensorFile::read_path(path).map_err(to_py)?;
    Ok((t.dims, t.data))
}

#[pyfunction]
fn write_tensor(path: &str, dims: Vec<usize>, data: Vec<f64>) -> PyResult<()> {
    TensorFile::new(dims, data)
        .and_then(|t| t.write_path(path))
        .map_err(to_py)
}

#[pymodule]
fn pyspdkmeans(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClusterModel>()?;
    m.add_function(wrap_pyfunction!(cholesky, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(unembed, m)?)?;
    m.add_function(wrap_pyfunction!(log_cholesky_distance, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_mean, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_function, m)?)?;
    m.add_function(wrap_pyfunction!(sample_spd, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_fit, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_fit_spd, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(autocov_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand, m)?)?;
    m.add_function(wrap_pyfunction!(anova_r2, m)?)?;
    m.add_function(wrap_pyfunction!(sargde_v1, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! k-means clustering of symmetric positive definite matrices under the
//! log-Cholesky metric.
//!
//! The log-Cholesky embedding maps every SPD matrix to a point in
//! `R^{m(m+1)/2}` such that the log-Cholesky distance becomes Euclidean and
//! the Fréchet mean becomes the arithmetic mean. Clustering therefore runs as
//! ordinary Lloyd k-means on embedded points ([`kmeans`]), and centroids map
//! back to SPD matrices through [`spd::unembed`].
//!
//! The crate also carries the raster time-series pipeline built on top of
//! that: per-pixel lag autocovariance features ([`features`]), cluster-count
//! selection ([`model_select`]), evaluation metrics ([`metrics`]) and the
//! binary tensor file format ([`tensor_file`]).

pub mod error;
pub mod features;
pub mod kmeans;
pub mod metrics;
pub mod model_select;
pub mod seed;
pub mod spd;
pub mod synth;
pub mod tensor_file;

pub use error::{Error, Result};
pub use features::{BorderPolicy, FeatureConfig, FeatureSet, RasterStack};
pub use kmeans::{ClusterModel, KmeansConfig};
pub use model_select::KSelectionReport;
pub use spd::{CholFactor, EmbeddedPoint, SpdMatrix};

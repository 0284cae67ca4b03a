//! `spdkmeans` command-line pipeline.
//!
//! Exit codes: 0 success, 2 malformed input, 3 invalid configuration,
//! 4 infeasible clustering (k larger than the number of points).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spdkmeans::BorderPolicy;

#[derive(Debug, Parser)]
#[command(name = "spdkmeans", version, about = "Log-Cholesky k-means on raster time-series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Border {
    Drop,
    Avg,
}

impl From<Border> for BorderPolicy {
    fn from(b: Border) -> Self {
        match b {
            Border::Drop => BorderPolicy::DropPartial,
            Border::Avg => BorderPolicy::AveragePartial,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Patch-average a T x H x W stack and embed per-pixel lag autocovariances.
    Features {
        #[arg(long)]
        band: PathBuf,
        #[arg(long)]
        lag: usize,
        #[arg(long)]
        patch: usize,
        #[arg(long, default_value_t = 1e-10)]
        jitter: f64,
        #[arg(long, value_enum, default_value = "drop")]
        border: Border,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-means on embedded features.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        centroids: PathBuf,
    },
    /// Penalized-objective choice of k over kmin..=kmax.
    #[command(name = "select-k", alias = "select_k")]
    SelectK {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        kmin: usize,
        #[arg(long)]
        kmax: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adjusted Rand index grid over bands, lags, patch sizes and k.
    Sweep {
        /// NAME=FILE pairs.
        #[arg(long, num_args = 1.., required = true)]
        bands: Vec<String>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        lags: String,
        #[arg(long)]
        patches: String,
        #[arg(long)]
        ks: String,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        jitter: f64,
        #[arg(long, value_enum, default_value = "drop")]
        border: Border,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-cluster overlap with positive truth, optional SARGDE and ANOVA.
    Report {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// CC=FILE,VH=FILE
        #[arg(long)]
        sargde: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Patch size the labels were computed at.
        #[arg(long, default_value_t = 1)]
        patch: usize,
        #[arg(long, value_enum, default_value = "drop")]
        border: Border,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Features {
            band,
            lag,
            patch,
            jitter,
            border,
            out,
        } => commands::features(&band, lag, patch, jitter, border.into(), &out),
        Command::Cluster {
            features,
            k,
            restarts,
            seed,
            out,
            centroids,
        } => commands::cluster(&features, k, restarts, seed, &out, &centroids),
        Command::SelectK {
            features,
            kmin,
            kmax,
            restarts,
            seed,
            out,
        } => commands::select_k(&features, kmin, kmax, restarts, seed, &out),
        Command::Sweep {
            bands,
            truth,
            lags,
            patches,
            ks,
            restarts,
            seed,
            jitter,
            border,
            out,
        } => commands::sweep(commands::SweepArgs {
            bands: &bands,
            truth: &truth,
            lags: &lags,
            patches: &patches,
            ks: &ks,
            restarts,
            seed,
            jitter,
            border: border.into(),
            out: &out,
        }),
        Command::Report {
            labels,
            truth,
            sargde,
            threshold,
            patch,
            border,
            out,
        } => commands::report(
            &labels,
            &truth,
            sargde.as_deref(),
            threshold,
            patch,
            border.into(),
            &out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

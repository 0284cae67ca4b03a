#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spdkmeans::features::RasterStack;
use spdkmeans::metrics::LabelRaster;
use spdkmeans::tensor_file::TensorFile;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spdkmeans"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spdkmeans")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "spdkmeans {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn code(args: &[&str]) -> (Option<i32>, String) {
    let out = run(args);
    (out.status.code(), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Value of a `key=value` line on stdout.
pub fn stdout_value(stdout: &str, key: &str) -> Option<String> {
    stdout.lines().find_map(|l| {
        l.split_whitespace()
            .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('=').map(str::to_string))
    })
}

pub fn write_stack(path: &Path, stack: &RasterStack) {
    let mut data = stack.values().to_vec();
    if let Some(mask) = stack.nodata_mask() {
        let hw = stack.h() * stack.w();
        for (i, v) in data.iter_mut().enumerate() {
            if mask[i % hw] {
                *v = f64::NAN;
            }
        }
    }
    TensorFile::new(vec![stack.t(), stack.h(), stack.w()], data)
        .unwrap()
        .write_path(path)
        .unwrap();
}

pub fn write_truth(path: &Path, truth: &LabelRaster) {
    let data = truth
        .labels
        .iter()
        .map(|l| l.map_or(f64::NAN, |v| v as f64))
        .collect();
    TensorFile::new(vec![truth.h, truth.w], data)
        .unwrap()
        .write_path(path)
        .unwrap();
}

pub fn write_tensor(path: &Path, dims: Vec<usize>, data: Vec<f64>) {
    TensorFile::new(dims, data).unwrap().write_path(path).unwrap();
}

/// Data rows of a CSV file, split on commas.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

mod common;

use std::fs;

use common::*;
use sha2::{Digest, Sha256};
use spdkmeans::features::RasterStack;
use spdkmeans::metrics::{self, LabelRaster};
use spdkmeans::synth::{tiled_class_stack, SpdMixture, TiledStackSpec};
use spdkmeans::tensor_file::TensorFile;
use spdkmeans::EmbeddedPoint;
use tempfile::tempdir;

fn write_features(dir: &std::path::Path, name: &str, points: &[EmbeddedPoint]) -> std::path::PathBuf {
    let path = dir.join(name);
    let d = points[0].coords().len();
    let data = points.iter().flat_map(|p| p.coords().to_vec()).collect();
    write_tensor(&path, vec![points.len(), d], data);
    let mut index = String::from("point_index,row,col\n");
    for i in 0..points.len() {
        index.push_str(&format!("{i},0,{i}\n"));
    }
    fs::write(path.with_extension("pixels.csv"), index).unwrap();
    path
}

fn two_component(n: usize, seed: u64) -> (Vec<EmbeddedPoint>, Vec<usize>) {
    let mut mix = SpdMixture::three_component(3.0, 0.1);
    mix.centers.truncate(2);
    mix.sample_embedded(n, seed)
}

fn labels_column(path: &std::path::Path) -> Vec<i64> {
    csv_rows(path).iter().map(|r| r[3].parse().unwrap()).collect()
}

#[test]
fn features_counts_unmasked_nonconstant_pixels() {
    let dir = tempdir().unwrap();
    let (t, h, w) = (5, 4, 4);
    let mut values: Vec<f64> = (0..t * h * w)
        .map(|i| ((i * 7919) % 101) as f64 / 10.0)
        .collect();
    for ti in 0..t {
        values[ti * h * w + 5] = f64::NAN;
        values[ti * h * w + 6] = 3.0;
    }
    let band = dir.path().join("band.spdk");
    write_tensor(&band, vec![t, h, w], values);
    let out = dir.path().join("feat.spdk");
    let stdout = run_ok(&[
        "features", "--band", p(&band), "--lag", "1", "--patch", "1", "--out", p(&out),
    ]);
    assert_eq!(stdout_value(&stdout, "points").as_deref(), Some("14"));
    let f = TensorFile::read_path(&out).unwrap();
    assert_eq!(f.dims, vec![14, 3]);
    let index = csv_rows(&out.with_extension("pixels.csv"));
    assert_eq!(index.len(), 14);
    assert!(index.iter().all(|r| !(r[1] == "1" && (r[2] == "1" || r[2] == "2"))));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.with_extension("manifest.json")).unwrap())
            .unwrap();
    let digest = hex::encode(Sha256::digest(fs::read(&band).unwrap()));
    assert_eq!(manifest["inputs"][0]["sha256"], digest.as_str());
    assert_eq!(manifest["command"], "features");
    assert_eq!(manifest["parameters"]["lag"], "1");
}

#[test]
fn features_lag_too_large_exits_3() {
    let dir = tempdir().unwrap();
    let band = dir.path().join("band.spdk");
    write_tensor(&band, vec![3, 2, 2], (0..12).map(|i| (i % 5) as f64).collect());
    let out = dir.path().join("feat.spdk");
    let (c, err) = code(&["features", "--band", p(&band), "--lag", "3", "--patch", "1", "--out", p(&out)]);
    assert_eq!(c, Some(3));
    assert!(err.contains("lag too large"), "{err}");
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("feat.spdk");
    let junk = dir.path().join("junk.spdk");
    fs::write(&junk, b"not a tensor").unwrap();
    let (c, _) = code(&["features", "--band", p(&junk), "--lag", "1", "--patch", "1", "--out", p(&out)]);
    assert_eq!(c, Some(2));

    let flat = dir.path().join("flat.spdk");
    write_tensor(&flat, vec![4, 4], vec![1.0; 16]);
    let (c, err) = code(&["features", "--band", p(&flat), "--lag", "1", "--patch", "1", "--out", p(&out)]);
    assert_eq!(c, Some(2));
    assert!(err.contains("3-D"), "{err}");

    let missing = dir.path().join("missing.spdk");
    let (c, _) = code(&["features", "--band", p(&missing), "--lag", "1", "--patch", "1", "--out", p(&out)]);
    assert_eq!(c, Some(2));
}

#[test]
fn features_golden_stack_is_deterministic_and_matches_hand_embedding() {
    let (stack, _) = tiled_class_stack(&TiledStackSpec {
        t: 4,
        h: 6,
        w: 6,
        classes: 2,
        tile: 3,
        noise: 0.5,
        seed: 20240611,
    })
    .unwrap();
    let dir = tempdir().unwrap();
    let band = dir.path().join("golden.spdk");
    write_stack(&band, &stack);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("feat{run}.spdk"));
        run_ok(&["features", "--band", p(&band), "--lag", "1", "--patch", "1", "--out", p(&out)]);
        outputs.push((fs::read(&out).unwrap(), fs::read(out.with_extension("pixels.csv")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(
        hex::encode(Sha256::digest(&outputs[0].0)),
        GOLDEN_FEATURES_SHA256,
        "golden feature file changed"
    );

    // Pixel (2, 4) by hand: biased autocovariances, jittered 2x2 Toeplitz,
    // closed-form Cholesky.
    let f = TensorFile::from_bytes(&outputs[0].0).unwrap();
    let x = stack.series(2, 4);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let g0 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let g1 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n;
    let a = g0 + 1e-10 * g0;
    let l11 = a.sqrt();
    let l21 = g1 / l11;
    let l22 = (a - l21 * l21).sqrt();
    let expected = [l21, l11.ln(), l22.ln()];
    let row = 2 * 6 + 4;
    for (j, e) in expected.iter().enumerate() {
        let got = f.data[row * 3 + j];
        assert!((got - e).abs() <= 1e-12 * e.abs().max(1.0), "coord {j}: {got} vs {e}");
    }
}

const GOLDEN_FEATURES_SHA256: &str = "7f7d323f6a5590c3c6fc5a2a3b497ca82555aeb69b362f0969c6744da2ddbc0f";

#[test]
fn cluster_k1_gives_all_zero_labels() {
    let dir = tempdir().unwrap();
    let (pts, _) = two_component(40, 1);
    let feat = write_features(dir.path(), "f.spdk", &pts);
    let (labels, cents) = (dir.path().join("l.csv"), dir.path().join("c.csv"));
    let stdout = run_ok(&[
        "cluster", "--features", p(&feat), "--k", "1", "--out", p(&labels), "--centroids", p(&cents),
    ]);
    assert!(stdout_value(&stdout, "objective").unwrap().parse::<f64>().unwrap() > 0.0);
    assert_eq!(csv_header(&labels), "point_index,row,col,label");
    assert!(labels_column(&labels).iter().all(|&l| l == 0));
    assert_eq!(
        csv_header(&cents),
        "label,v0,v1,v2,s0_0,s0_1,s1_0,s1_1"
    );
    assert_eq!(csv_rows(&cents).len(), 1);
}

#[test]
fn cluster_recovers_two_components_and_is_reproducible() {
    let dir = tempdir().unwrap();
    let (pts, truth) = two_component(300, 7);
    let feat = write_features(dir.path(), "f.spdk", &pts);
    let mut bytes = Vec::new();
    for run in 0..2 {
        let labels = dir.path().join(format!("l{run}.csv"));
        let cents = dir.path().join(format!("c{run}.csv"));
        run_ok(&[
            "cluster", "--features", p(&feat), "--k", "2", "--seed", "11", "--out", p(&labels),
            "--centroids", p(&cents),
        ]);
        let got = labels_column(&labels);
        assert!(metrics::adjusted_rand(&got, &truth).unwrap() > 0.99);
        bytes.push((fs::read(&labels).unwrap(), fs::read(&cents).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn cluster_k_above_n_exits_4() {
    let dir = tempdir().unwrap();
    let (pts, _) = two_component(5, 2);
    let feat = write_features(dir.path(), "f.spdk", &pts);
    let (labels, cents) = (dir.path().join("l.csv"), dir.path().join("c.csv"));
    let (c, _) = code(&[
        "cluster", "--features", p(&feat), "--k", "6", "--out", p(&labels), "--centroids", p(&cents),
    ]);
    assert_eq!(c, Some(4));
    let (c, _) = code(&[
        "cluster", "--features", p(&feat), "--k", "0", "--out", p(&labels), "--centroids", p(&cents),
    ]);
    assert_eq!(c, Some(3));
}

#[test]
fn select_k_cases() {
    let dir = tempdir().unwrap();
    let (pts, _) = SpdMixture::three_component(2.0, 0.1).sample_embedded(300, 5);
    let feat = write_features(dir.path(), "f.spdk", &pts);
    let report = dir.path().join("k.csv");

    let stdout = run_ok(&["select-k", "--features", p(&feat), "--kmin", "4", "--kmax", "4", "--out", p(&report)]);
    assert_eq!(stdout_value(&stdout, "k_star").as_deref(), Some("4"));

    let stdout = run_ok(&["select-k", "--features", p(&feat), "--kmin", "1", "--kmax", "8", "--seed", "3", "--out", p(&report)]);
    assert_eq!(stdout_value(&stdout, "k_star").as_deref(), Some("3"));
    assert_eq!(csv_header(&report), "k,objective,penalty,score,chosen");
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 8);
    let chosen: Vec<&str> = rows.iter().filter(|r| r[4] == "1").map(|r| r[0].as_str()).collect();
    assert_eq!(chosen, vec!["3"]);

    let (c, _) = code(&["select-k", "--features", p(&feat), "--kmin", "1", "--kmax", "301", "--out", p(&report)]);
    assert_eq!(c, Some(4));
    let (c, _) = code(&["select-k", "--features", p(&feat), "--kmin", "5", "--kmax", "2", "--out", p(&report)]);
    assert_eq!(c, Some(3));
}

fn tiled(seed: u64) -> (RasterStack, LabelRaster) {
    tiled_class_stack(&TiledStackSpec {
        t: 20,
        h: 12,
        w: 12,
        classes: 2,
        tile: 4,
        noise: 0.05,
        seed,
    })
    .unwrap()
}

#[test]
fn sweep_cases() {
    let dir = tempdir().unwrap();
    let (stack, truth) = tiled(3);
    let band = dir.path().join("b.spdk");
    let truth_path = dir.path().join("truth.spdk");
    write_stack(&band, &stack);
    write_truth(&truth_path, &truth);
    let grid = dir.path().join("grid.csv");
    let band_arg = format!("SYN={}", p(&band));

    run_ok(&[
        "sweep", "--bands", &band_arg, "--truth", p(&truth_path), "--lags", "1", "--patches", "1",
        "--ks", "2", "--out", p(&grid),
    ]);
    assert_eq!(csv_header(&grid), "band,lag,patch,k,ari");
    assert_eq!(csv_rows(&grid).len(), 1);

    let stdout = run_ok(&[
        "sweep", "--bands", &band_arg, "--truth", p(&truth_path), "--lags", "1,2", "--patches", "1,2",
        "--ks", "2..4", "--out", p(&grid),
    ]);
    assert_eq!(csv_rows(&grid).len(), 12);
    let best = stdout.lines().find(|l| l.starts_with("best")).unwrap();
    assert!(best.contains("lag=1 patch=1 k=2"), "{best}");

    let small = dir.path().join("small.spdk");
    write_tensor(&small, vec![3, 3], vec![0.0; 9]);
    let (c, _) = code(&[
        "sweep", "--bands", &band_arg, "--truth", p(&small), "--lags", "1", "--patches", "1",
        "--ks", "2", "--out", p(&grid),
    ]);
    assert_eq!(c, Some(2));
}

#[test]
fn report_perfect_labeling_and_sargde_hand_example() {
    let dir = tempdir().unwrap();
    // 1 x 3 grid: classes 0, 1, 1 and clusters that match exactly.
    let truth_path = dir.path().join("truth.spdk");
    write_tensor(&truth_path, vec![1, 3], vec![0.0, 1.0, 1.0]);
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, "point_index,row,col,label\n0,0,0,0\n1,0,1,1\n2,0,2,1\n").unwrap();
    let out = dir.path().join("report.csv");
    let stdout = run_ok(&["report", "--labels", p(&labels), "--truth", p(&truth_path), "--out", p(&out)]);
    assert_eq!(stdout_value(&stdout, "flagged").as_deref(), Some("1"));
    assert_eq!(csv_header(&out), "cluster,size,overlap_fraction,flagged");
    let rows = csv_rows(&out);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][3], "1");

    let cc = dir.path().join("cc.spdk");
    let vh = dir.path().join("vh.spdk");
    // time-major T=2 x 1 x 3; pixel 0 is the hand example
    write_tensor(&cc, vec![2, 1, 3], vec![0.4, 1.0, 2.0, 0.6, 1.5, 2.2]);
    write_tensor(&vh, vec![2, 1, 3], vec![1.0, 0.0, 5.0, 3.0, 1.0, 4.0]);
    let spec = format!("CC={},VH={}", p(&cc), p(&vh));
    let stdout = run_ok(&[
        "report", "--labels", p(&labels), "--truth", p(&truth_path), "--sargde", &spec, "--out", p(&out),
    ]);
    let per_pixel = csv_rows(&out.with_extension("sargde.csv"));
    let v: f64 = per_pixel[0][4].parse().unwrap();
    assert!((v - 10.0).abs() < 1e-12, "{v}");
    let r2: f64 = stdout_value(&stdout, "anova_r2").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&r2));
    assert!(out.with_extension("anova.csv").exists());
    assert!(out.with_extension("manifest.json").exists());
}

use std::fs;
use std::path::Path;

use spdkmeans::features::{self, RasterStack};
use spdkmeans::metrics::{self, LabelRaster, SweepConfig};
use spdkmeans::model_select;
use spdkmeans::spd::{self, EmbeddedPoint};
use spdkmeans::tensor_file::TensorFile;
use spdkmeans::{kmeans, BorderPolicy, Error, FeatureConfig, KmeansConfig};

use crate::output::{fmt_f64, sidecar, Csv, RunManifest};

pub const EXIT_MALFORMED: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn malformed(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_MALFORMED,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::malformed(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_)
            | Error::Format(_)
            | Error::NotSymmetric { .. }
            | Error::NotSquare { .. }
            | Error::NonFinite(_)
            | Error::DimensionMismatch { .. }
            | Error::LengthMismatch { .. } => EXIT_MALFORMED,
            Error::KExceedsN { .. } | Error::EmptyInput(_) => EXIT_INFEASIBLE,
            Error::NotPositiveDefinite { .. }
            | Error::EigenFailure
            | Error::InvalidConfig(_)
            | Error::LagTooLarge { .. }
            | Error::DegenerateOutput(_)
            | Error::ConstantSeries
            | Error::DegenerateGroups(_)
            | Error::DegenerateSeries(_) => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_tensor(path: &Path, ndim: usize) -> CliResult<TensorFile> {
    let t = TensorFile::read_path(path).map_err(|e| match e {
        Error::Io(io) => CliError::io(path, io),
        other => CliError::malformed(format!("{}: {other}", path.display())),
    })?;
    if t.ndim() != ndim {
        return Err(CliError::malformed(format!(
            "{}: expected a {ndim}-D tensor, found dims {:?}",
            path.display(),
            t.dims
        )));
    }
    Ok(t)
}

fn read_stack(path: &Path, name: &str) -> CliResult<RasterStack> {
    let t = read_tensor(path, 3)?;
    let (tt, h, w) = (t.dims[0], t.dims[1], t.dims[2]);
    RasterStack::from_nan_masked(name, tt, h, w, t.data).map_err(|e| {
        CliError::malformed(format!("{}: {e}", path.display()))
    })
}

fn read_truth(path: &Path) -> CliResult<LabelRaster> {
    let t = read_tensor(path, 2)?;
    LabelRaster::from_f64(t.dims[0], t.dims[1], &t.data)
        .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))
}

fn band_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "band".into())
}

struct Features {
    points: Vec<EmbeddedPoint>,
    pixels: Vec<(usize, usize)>,
}

fn read_features(path: &Path) -> CliResult<Features> {
    let t = read_tensor(path, 2)?;
    let (n, d) = (t.dims[0], t.dims[1]);
    let m = spd::matrix_dim_for(d).map_err(|_| {
        CliError::malformed(format!(
            "{}: {d} columns is not an embedding dimension m(m+1)/2",
            path.display()
        ))
    })?;
    let points = t
        .data
        .chunks_exact(d.max(1))
        .take(n)
        .map(|row| EmbeddedPoint::new(m, row.to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
    let index_path = sidecar(path, "pixels.csv");
    let text = fs::read_to_string(&index_path).map_err(|e| CliError::io(&index_path, e))?;
    let mut pixels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| s.trim().parse::<usize>().ok();
        match (f.len(), f.first().and_then(|s| parse(s)), f.get(1).and_then(|s| parse(s)), f.get(2).and_then(|s| parse(s))) {
            (3, Some(i), Some(r), Some(c)) if i == pixels.len() => pixels.push((r, c)),
            _ => {
                return Err(CliError::malformed(format!(
                    "{}:{}: bad row {line:?}",
                    index_path.display(),
                    lineno + 1
                )))
            }
        }
    }
    if pixels.len() != n {
        return Err(CliError::malformed(format!(
            "{} lists {} pixels but features have {n} rows",
            index_path.display(),
            pixels.len()
        )));
    }
    Ok(Features { points, pixels })
}

pub fn features(
    band: &Path,
    lag: usize,
    patch: usize,
    jitter: f64,
    border: BorderPolicy,
    out: &Path,
) -> CliResult<()> {
    let mut manifest = RunManifest::start("features", None);
    manifest
        .param("lag", lag)
        .param("patch", patch)
        .param("jitter", fmt_f64(jitter))
        .param("border", format!("{border:?}"))
        .input(band)?;
    let stack = read_stack(band, &band_name(band))?;
    let cfg = FeatureConfig {
        lag,
        patch,
        jitter,
        border_policy: border,
    };
    let set = features::build_features(&stack, &cfg)?;
    let d = spd::embedding_dim(set.m);
    let data: Vec<f64> = set.points.iter().flat_map(|p| p.coords().iter().copied()).collect();
    TensorFile::new(vec![set.points.len(), d], data)?
        .write_path(out)
        .map_err(|e| match e {
            Error::Io(io) => CliError::io(out, io),
            other => other.into(),
        })?;
    let mut index = Csv::new(&["point_index", "row", "col"]);
    for (i, (r, c)) in set.pixel_index.iter().enumerate() {
        index.row([i.to_string(), r.to_string(), c.to_string()]);
    }
    let index_path = sidecar(out, "pixels.csv");
    index.write(&index_path)?;
    manifest.output(out).output(&index_path).finish(out)?;
    println!("points={}", set.points.len());
    println!("grid={}x{}", set.grid_dims.0, set.grid_dims.1);
    println!("excluded={}", set.excluded.len());
    Ok(())
}

pub fn cluster(
    features_path: &Path,
    k: usize,
    restarts: usize,
    seed: u64,
    out: &Path,
    centroids_path: &Path,
) -> CliResult<()> {
    let mut manifest = RunManifest::start("cluster", Some(seed));
    manifest
        .param("k", k)
        .param("restarts", restarts)
        .input(features_path)?;
    let feats = read_features(features_path)?;
    let cfg = KmeansConfig {
        restarts,
        seed,
        ..KmeansConfig::new(k)
    };
    let model = kmeans::fit(&feats.points, &cfg)?;

    let mut labels = Csv::new(&["point_index", "row", "col", "label"]);
    for (i, (&l, &(r, c))) in model.labels.iter().zip(&feats.pixels).enumerate() {
        labels.row([i.to_string(), r.to_string(), c.to_string(), l.to_string()]);
    }
    labels.write(out)?;

    let m = model.centroids[0].dim_m();
    let d = spd::embedding_dim(m);
    let mut header = vec!["label".to_string()];
    header.extend((0..d).map(|i| format!("v{i}")));
    for i in 0..m {
        for j in 0..m {
            header.push(format!("s{i}_{j}"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut cents = Csv::new(&header_refs);
    for (j, c) in model.centroids.iter().enumerate() {
        let mut row = vec![j.to_string()];
        row.extend(c.coords().iter().map(|&v| fmt_f64(v)));
        row.extend(spd::unembed(c).to_row_major().into_iter().map(fmt_f64));
        cents.row(row);
    }
    cents.write(centroids_path)?;
    manifest.output(out).output(centroids_path).finish(out)?;
    println!("objective={}", fmt_f64(model.objective));
    Ok(())
}

pub fn select_k(
    features_path: &Path,
    kmin: usize,
    kmax: usize,
    restarts: usize,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    if kmin == 0 || kmin > kmax {
        return Err(CliError::config(format!(
            "need 1 <= kmin <= kmax, got kmin={kmin} kmax={kmax}"
        )));
    }
    let mut manifest = RunManifest::start("select-k", Some(seed));
    manifest
        .param("kmin", kmin)
        .param("kmax", kmax)
        .param("restarts", restarts)
        .input(features_path)?;
    let feats = read_features(features_path)?;
    let ks: Vec<usize> = (kmin..=kmax).collect();
    let cfg = KmeansConfig {
        restarts,
        seed,
        ..KmeansConfig::new(kmin)
    };
    let report = model_select::select_k_points(&feats.points, &ks, &cfg)?;
    let mut csv = Csv::new(&["k", "objective", "penalty", "score", "chosen"]);
    for c in &report.candidates {
        csv.row([
            c.k.to_string(),
            fmt_f64(c.objective),
            fmt_f64(c.penalty),
            fmt_f64(c.score),
            u8::from(c.k == report.chosen_k).to_string(),
        ]);
    }
    csv.write(out)?;
    manifest.output(out).finish(out)?;
    println!("k_star={}", report.chosen_k);
    Ok(())
}

/// Comma-separated integers; `a..b` is an inclusive range.
pub fn parse_list(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::config(format!("cannot parse list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub struct SweepArgs<'a> {
    pub bands: &'a [String],
    pub truth: &'a Path,
    pub lags: &'a str,
    pub patches: &'a str,
    pub ks: &'a str,
    pub restarts: usize,
    pub seed: u64,
    pub jitter: f64,
    pub border: BorderPolicy,
    pub out: &'a Path,
}

pub fn sweep(args: SweepArgs<'_>) -> CliResult<()> {
    let lags = parse_list(args.lags)?;
    let patches = parse_list(args.patches)?;
    let ks = parse_list(args.ks)?;
    let mut manifest = RunManifest::start("sweep", Some(args.seed));
    manifest
        .param("lags", args.lags)
        .param("patches", args.patches)
        .param("ks", args.ks)
        .param("restarts", args.restarts)
        .param("jitter", fmt_f64(args.jitter))
        .param("border", format!("{:?}", args.border))
        .input(args.truth)?;
    let mut stacks = Vec::new();
    for spec in args.bands {
        let (name, file) = spec
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("band {spec:?} is not NAME=FILE")))?;
        let path = Path::new(file);
        manifest.param(&format!("band.{name}"), file).input(path)?;
        stacks.push(read_stack(path, name)?);
    }
    let truth = read_truth(args.truth)?;
    for s in &stacks {
        if (s.h(), s.w()) != (truth.h, truth.w) {
            return Err(CliError::malformed(format!(
                "truth raster is {}x{} but band {} is {}x{}",
                truth.h,
                truth.w,
                s.band_name(),
                s.h(),
                s.w()
            )));
        }
    }
    let mut cfg = SweepConfig::new(lags, patches, ks, args.seed);
    cfg.kmeans.restarts = args.restarts;
    cfg.jitter = args.jitter;
    cfg.border_policy = args.border;
    let result = metrics::sweep(&stacks, &truth, &cfg)?;
    let mut csv = Csv::new(&["band", "lag", "patch", "k", "ari"]);
    for r in &result.grid {
        csv.row([
            r.band.clone(),
            r.lag.to_string(),
            r.patch.to_string(),
            r.k.to_string(),
            fmt_f64(r.ari),
        ]);
    }
    csv.write(args.out)?;
    manifest.output(args.out).finish(args.out)?;
    let b = &result.best;
    println!(
        "best band={} lag={} patch={} k={} ari={}",
        b.band,
        b.lag,
        b.patch,
        b.k,
        fmt_f64(b.ari)
    );
    Ok(())
}

struct LabelRow {
    row: usize,
    col: usize,
    label: i64,
}

fn read_labels(path: &Path) -> CliResult<Vec<LabelRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (f.len() == 4)
            .then(|| Some((f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?)))
            .flatten();
        match parsed {
            Some((row, col, label)) => rows.push(LabelRow { row, col, label }),
            None => {
                return Err(CliError::malformed(format!(
                    "{}:{}: bad row {line:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(rows)
}

fn parse_sargde_spec(spec: &str) -> CliResult<(String, String)> {
    let (mut cc, mut vh) = (None, None);
    for part in spec.split(',') {
        match part.split_once('=') {
            Some((k, v)) if k.trim().eq_ignore_ascii_case("cc") => cc = Some(v.trim().to_string()),
            Some((k, v)) if k.trim().eq_ignore_ascii_case("vh") => vh = Some(v.trim().to_string()),
            _ => return Err(CliError::config(format!("bad --sargde entry {part:?}"))),
        }
    }
    cc.zip(vh)
        .ok_or_else(|| CliError::config("--sargde needs CC=FILE,VH=FILE"))
}

pub fn report(
    labels_path: &Path,
    truth_path: &Path,
    sargde: Option<&str>,
    threshold: f64,
    patch: usize,
    border: BorderPolicy,
    out: &Path,
) -> CliResult<()> {
    let mut manifest = RunManifest::start("report", None);
    manifest
        .param("threshold", fmt_f64(threshold))
        .param("patch", patch)
        .param("border", format!("{border:?}"))
        .input(labels_path)?
        .input(truth_path)?;
    let labels = read_labels(labels_path)?;
    let truth = metrics::majority_vote_patch(&read_truth(truth_path)?, patch, border)?;
    for l in &labels {
        if l.row >= truth.h || l.col >= truth.w {
            return Err(CliError::malformed(format!(
                "label pixel ({}, {}) outside the {}x{} patched truth grid",
                l.row, l.col, truth.h, truth.w
            )));
        }
    }
    let (mut pred, mut actual) = (Vec::new(), Vec::new());
    for l in &labels {
        if let Some(t) = truth.get(l.row, l.col) {
            pred.push(l.label);
            actual.push(t);
        }
    }
    let rows = metrics::overlap_report(&pred, &actual, threshold)?;
    let mut csv = Csv::new(&["cluster", "size", "overlap_fraction", "flagged"]);
    for r in &rows {
        csv.row([
            r.cluster.to_string(),
            r.size.to_string(),
            fmt_f64(r.overlap_fraction),
            u8::from(r.flagged).to_string(),
        ]);
    }
    csv.write(out)?;
    manifest.output(out);
    println!("flagged={}", rows.iter().filter(|r| r.flagged).count());

    if let Some(spec) = sargde {
        let (cc_file, vh_file) = parse_sargde_spec(spec)?;
        let (cc_path, vh_path) = (Path::new(&cc_file), Path::new(&vh_file));
        manifest.input(cc_path)?.input(vh_path)?;
        let cc = features::patch_average(&read_stack(cc_path, "CC")?, patch, border)?;
        let vh = features::patch_average(&read_stack(vh_path, "VH")?, patch, border)?;
        if (cc.h(), cc.w()) != (truth.h, truth.w) {
            return Err(CliError::malformed(format!(
                "SARGDE grid {}x{} does not match the truth grid {}x{}",
                cc.h(),
                cc.w(),
                truth.h,
                truth.w
            )));
        }
        let index = metrics::sargde_raster(&cc, &vh)?;
        let mut per_pixel = Csv::new(&["point_index", "row", "col", "label", "sargde"]);
        let (mut y, mut groups) = (Vec::new(), Vec::new());
        for (i, l) in labels.iter().enumerate() {
            let v = index[l.row * cc.w() + l.col];
            per_pixel.row([
                i.to_string(),
                l.row.to_string(),
                l.col.to_string(),
                l.label.to_string(),
                fmt_f64(v.unwrap_or(f64::NAN)),
            ]);
            if let Some(v) = v {
                y.push(v);
                groups.push(l.label);
            }
        }
        let sargde_path = sidecar(out, "sargde.csv");
        per_pixel.write(&sargde_path)?;
        manifest.output(&sargde_path);
        let fit = metrics::anova_r2(&y, &groups)?;
        let mut anova = Csv::new(&["groups", "n", "r2", "r2_adjusted"]);
        anova.row([
            fit.groups.to_string(),
            fit.n.to_string(),
            fmt_f64(fit.r2),
            fmt_f64(fit.r2_adjusted),
        ]);
        let anova_path = sidecar(out, "anova.csv");
        anova.write(&anova_path)?;
        manifest.output(&anova_path);
        println!("anova_r2={}", fmt_f64(fit.r2));
        println!("anova_r2_adjusted={}", fmt_f64(fit.r2_adjusted));
    }
    manifest.finish(out)
}

//! Datasets: synthetic generators, WDBC ingestion, splitting, and CSV I/O.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activations::ActivationState;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of real-valued features per WDBC row.
pub const WDBC_FEATURES: usize = 30;

/// A binary-labelled point set: `features` is `n × d`, `labels` holds 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<u8>,
}

impl Dataset {
    /// Checks labels are binary with both classes present and all features finite.
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        let name = name.into();
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{name}: {} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!("{name}: label {bad} is not 0 or 1")));
        }
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(Error::InvalidArgument(format!("{name}: both classes must be present")));
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument(format!("{name}: non-finite feature value")));
        }
        Ok(Self { name, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// `(count of label 0, count of label 1)`
    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        (self.len() - ones, ones)
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Writes `x0,...,x{d-1},label` followed by one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, y) in self.features.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: &Path, name: &str) -> Result<Self> {
        let text = read_text(path)?;
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 2 || header.get(cols - 1) != Some("label") {
            return Err(parse_err(path, 1, "header must be x0,...,x{d-1},label"));
        }
        let d = cols - 1;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != cols {
                return Err(parse_err(
                    path,
                    line,
                    &format!("expected {cols} fields, found {}", rec.len()),
                ));
            }
            for field in rec.iter().take(d) {
                data.push(parse_f64(path, line, field)?);
            }
            labels.push(match rec.get(d).map(str::trim) {
                Some("0") => 0,
                Some("1") => 1,
                other => return Err(parse_err(path, line, &format!("label must be 0 or 1, got {other:?}"))),
            });
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset(format!("{} has no rows", path.display())));
        }
        let features = Matrix::from_vec(labels.len(), d, data)?;
        Dataset::new(name, features, labels)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn parse_err(path: &Path, line: u64, msg: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(
            path,
            line,
            &format!("cannot parse `{field}` as a finite number"),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub ratio: f64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Two concentric noisy circles: the outer one (radius 1) is class 0, the
/// inner one (radius `radius_ratio`) is class 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirclesParams {
    pub n: usize,
    pub noise: f64,
    pub radius_ratio: f64,
}

impl Default for CirclesParams {
    fn default() -> Self {
        Self {
            n: 1000,
            noise: 0.2,
            radius_ratio: 0.5,
        }
    }
}

/// Two phase-shifted (1,1) curves on a torus, one per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusParams {
    pub n: usize,
    pub major_radius: f64,
    pub minor_radius: f64,
    pub phase: f64,
    pub noise: f64,
}

impl Default for TorusParams {
    fn default() -> Self {
        Self {
            n: 1000,
            major_radius: 2.0,
            minor_radius: 1.0,
            phase: PI,
            noise: 0.05,
        }
    }
}

fn noise_dist(sigma: f64) -> Result<Option<Normal<f64>>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise must be finite and >= 0, got {sigma}"
        )));
    }
    Ok((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma")))
}

fn jitter<R: Rng + ?Sized>(v: f64, noise: &Option<Normal<f64>>, rng: &mut R) -> f64 {
    match noise {
        Some(d) => v + d.sample(rng),
        None => v,
    }
}

/// ⌈n/2⌉ points of class 0 on the unit circle, ⌊n/2⌋ of class 1 on the inner circle.
pub fn gen_circles<R: Rng + ?Sized>(p: &CirclesParams, rng: &mut R) -> Result<Dataset> {
    if p.n < 4 {
        return Err(Error::InvalidArgument(format!("circles needs n >= 4, got {}", p.n)));
    }
    if !(p.radius_ratio > 0.0 && p.radius_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "radius ratio must lie in (0, 1), got {}",
            p.radius_ratio
        )));
    }
    let noise = noise_dist(p.noise)?;
    let outer = p.n.div_ceil(2);
    let mut data = Vec::with_capacity(2 * p.n);
    let mut labels = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let (label, radius) = if i < outer { (0, 1.0) } else { (1, p.radius_ratio) };
        let theta = rng.random_range(0.0..TAU);
        let (s, c) = theta.sin_cos();
        data.push(jitter(radius * c, &noise, rng));
        data.push(jitter(radius * s, &noise, rng));
        labels.push(label);
    }
    Dataset::new("circles", Matrix::from_vec(p.n, 2, data)?, labels)
}

/// Class `k` follows `t ↦ ((R + r·cos(t + kφ))·cos t, (R + r·cos(t + kφ))·sin t, r·sin(t + kφ))`.
pub fn gen_curves_on_torus<R: Rng + ?Sized>(p: &TorusParams, rng: &mut R) -> Result<Dataset> {
    if p.n < 2 {
        return Err(Error::InvalidArgument(format!("torus needs n >= 2, got {}", p.n)));
    }
    if !(p.minor_radius > 0.0 && p.major_radius > p.minor_radius && p.major_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "torus needs major_radius > minor_radius > 0, got R = {}, r = {}",
            p.major_radius, p.minor_radius
        )));
    }
    if !p.phase.is_finite() {
        return Err(Error::InvalidArgument("phase must be finite".into()));
    }
    let noise = noise_dist(p.noise)?;
    let first = p.n.div_ceil(2);
    let mut data = Vec::with_capacity(3 * p.n);
    let mut labels = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let label: u8 = if i < first { 0 } else { 1 };
        let t = rng.random_range(0.0..TAU);
        let u = t + f64::from(label) * p.phase;
        let ring = p.major_radius + p.minor_radius * u.cos();
        let (st, ct) = t.sin_cos();
        data.push(jitter(ring * ct, &noise, rng));
        data.push(jitter(ring * st, &noise, rng));
        data.push(jitter(p.minor_radius * u.sin(), &noise, rng));
        labels.push(label);
    }
    Dataset::new("curves-on-torus", Matrix::from_vec(p.n, 3, data)?, labels)
}

/// Parses the comma-separated WDBC layout: `id, diagnosis (M|B), 30 features`.
///
/// Malignant rows get label 1. The id column is dropped and row order kept.
pub fn load_wdbc(path: &Path) -> Result<Dataset> {
    let text = read_text(path)?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != WDBC_FEATURES + 2 {
            return Err(parse_err(
                path,
                line_no,
                &format!("expected {} fields, found {}", WDBC_FEATURES + 2, fields.len()),
            ));
        }
        labels.push(match fields[1].trim() {
            "M" => 1,
            "B" => 0,
            other => return Err(parse_err(path, line_no, &format!("unknown diagnosis `{other}`"))),
        });
        for f in &fields[2..] {
            data.push(parse_f64(path, line_no, f)?);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no rows", path.display())));
    }
    let features = Matrix::from_vec(labels.len(), WDBC_FEATURES, data)?;
    Dataset::new("breast-cancer", features, labels)
}

/// Per-feature statistics used by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation (divides by n).
    pub std: Vec<f64>,
}

/// Zero-mean, unit-variance copy of `d`; constant features become 0.
pub fn standardize(d: &Dataset) -> (Dataset, Standardization) {
    let n = d.len() as f64;
    let cols = d.dim();
    let mut mean = vec![0.0; cols];
    let mut std = vec![0.0; cols];
    for j in 0..cols {
        let col = d.features.column(j);
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean[j] = m;
        std[j] = var.sqrt();
    }
    let mut features = d.features.clone();
    for r in 0..features.rows() {
        for (j, v) in features.row_mut(r).iter_mut().enumerate() {
            *v = if std[j] > 0.0 { (*v - mean[j]) / std[j] } else { 0.0 };
        }
    }
    (
        Dataset {
            name: d.name.clone(),
            features,
            labels: d.labels.clone(),
        },
        Standardization { mean, std },
    )
}

/// Uniform random partition with `round(ratio·n)` training samples.
pub fn split<R: Rng + ?Sized>(d: &Dataset, ratio: f64, rng: &mut R) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = d.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} on {n} samples leaves an empty split"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let test_indices = idx.split_off(n_train);
    let train_indices = idx;
    Ok(SplitDataset {
        train: d.subset(&train_indices),
        test: d.subset(&test_indices),
        ratio,
        train_indices,
        test_indices,
    })
}

/// Applies `state` to every coordinate of every point; labels are kept.
pub fn transform_pointcloud(d: &Dataset, state: &ActivationState) -> Dataset {
    Dataset {
        name: d.name.clone(),
        features: d.features.map(|v| state.eval(v)),
        labels: d.labels.clone(),
    }
}

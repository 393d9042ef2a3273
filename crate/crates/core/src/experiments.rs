//! Experiment grids: datasets × activations × depths × widths × repeated runs.
//!
//! Every run is a pure function of its [`RunSpec`], so a grid gives the same
//! records regardless of how many workers execute it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::{self, CirclesParams, Dataset, TorusParams};
use crate::error::{Error, Result};
use crate::nn::{self, NetworkSpec, OutputHead, TrainConfig, TrainReport};

/// Where a grid's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Circles(CirclesParams),
    CurvesOnTorus(TorusParams),
    BreastCancer { path: PathBuf },
}

impl DatasetSource {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSource::Circles(_) => "circles",
            DatasetSource::CurvesOnTorus(_) => "curves-on-torus",
            DatasetSource::BreastCancer { .. } => "breast-cancer",
        }
    }

    /// Generates or loads the dataset; `seed` only matters for the generators.
    pub fn materialize(&self, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            DatasetSource::Circles(p) => data::gen_circles(p, &mut rng),
            DatasetSource::CurvesOnTorus(p) => data::gen_curves_on_torus(p, &mut rng),
            DatasetSource::BreastCancer { path } => data::load_wdbc(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    #[serde(flatten)]
    pub source: DatasetSource,
    pub widths: Vec<usize>,
}

fn default_wdbc_path() -> PathBuf {
    PathBuf::from("data/wdbc.data")
}

/// Full description of an experiment grid. The default covers all three
/// datasets with 10 runs per cell, 100 epochs, lr 0.05 and a 70/30 split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub datasets: Vec<DatasetEntry>,
    pub depths: Vec<usize>,
    pub activations: Vec<ActivationKind>,
    pub runs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub base_seed: u64,
    pub split_ratio: f64,
    pub standardize: bool,
    pub clip: Option<f64>,
    /// Generate one sample per dataset and only re-split it between runs.
    pub fixed_sample: bool,
    pub head: OutputHead,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            datasets: vec![
                DatasetEntry {
                    source: DatasetSource::Circles(CirclesParams::default()),
                    widths: vec![2, 3, 4],
                },
                DatasetEntry {
                    source: DatasetSource::CurvesOnTorus(TorusParams::default()),
                    widths: vec![3, 4, 5, 6, 7],
                },
                DatasetEntry {
                    source: DatasetSource::BreastCancer {
                        path: default_wdbc_path(),
                    },
                    widths: vec![30, 40, 80, 100],
                },
            ],
            depths: vec![1, 2, 3],
            activations: vec![
                ActivationKind::Tanh,
                ActivationKind::Relu,
                ActivationKind::PRelu,
                ActivationKind::SmoothSplit,
                ActivationKind::ParametricSplit,
            ],
            runs: 10,
            epochs: 100,
            lr: 0.05,
            batch_size: 32,
            base_seed: 0,
            split_ratio: 0.7,
            standardize: false,
            clip: None,
            fixed_sample: false,
            head: OutputHead::default(),
        }
    }
}

impl GridConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: GridConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid config serializes")
    }

    /// Keeps only the datasets whose name matches.
    pub fn only_dataset(mut self, name: &str) -> Self {
        self.datasets.retain(|d| d.source.name() == name);
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            clip: self.clip,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.datasets.is_empty() || self.depths.is_empty() || self.activations.is_empty() {
            return bad("datasets, depths and activations must be non-empty".into());
        }
        if self.depths.contains(&0) {
            return bad("depths must be at least 1".into());
        }
        for d in &self.datasets {
            if d.widths.is_empty() || d.widths.contains(&0) {
                return bad(format!(
                    "{}: widths must be a non-empty list of positive counts",
                    d.source.name()
                ));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        self.train_config().validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Identifies one table cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub dataset: String,
    pub activation: ActivationKind,
    pub depth: usize,
    pub width: usize,
}

/// One fully-determined training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub key: CellKey,
    pub cell_index: usize,
    pub run_index: usize,
    pub source: DatasetSource,
    /// Seeds network initialisation and batch shuffling.
    pub seed: u64,
    pub sample_seed: u64,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub split_ratio: f64,
    pub standardize: bool,
    pub head: OutputHead,
}

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn mix(base_seed: u64, label: &str, run_index: usize) -> u64 {
    base_seed ^ splitmix64(fnv1a(label.as_bytes()) ^ splitmix64(run_index as u64))
}

/// Seed for network initialisation and shuffling.
///
/// Derived from the cell's identity rather than its position, so adding or
/// removing grid entries leaves every other cell's seeds untouched.
pub fn run_seed(base_seed: u64, key: &CellKey, run_index: usize) -> u64 {
    let label = format!("{}/{}/{}/{}", key.dataset, key.activation, key.depth, key.width);
    mix(base_seed, &label, run_index)
}

/// Seed for generating a synthetic sample; shared by every cell of a dataset.
pub fn sample_seed(base_seed: u64, dataset: &str, run_index: usize) -> u64 {
    mix(base_seed, &format!("sample/{dataset}"), run_index)
}

/// Seed for the train/test split; shared by every cell of a dataset.
pub fn split_seed(base_seed: u64, dataset: &str, run_index: usize) -> u64 {
    mix(base_seed, &format!("split/{dataset}"), run_index)
}

/// Cartesian product in dataset, activation, depth, width, run order.
pub fn expand_grid(cfg: &GridConfig) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    let mut cell_index = 0;
    for entry in &cfg.datasets {
        let name = entry.source.name();
        for &activation in &cfg.activations {
            for &depth in &cfg.depths {
                for &width in &entry.widths {
                    let key = CellKey {
                        dataset: name.to_string(),
                        activation,
                        depth,
                        width,
                    };
                    for run_index in 0..cfg.runs {
                        let sample_run = if cfg.fixed_sample { 0 } else { run_index };
                        specs.push(RunSpec {
                            seed: run_seed(cfg.base_seed, &key, run_index),
                            sample_seed: sample_seed(cfg.base_seed, name, sample_run),
                            split_seed: split_seed(cfg.base_seed, name, run_index),
                            key: key.clone(),
                            cell_index,
                            run_index,
                            source: entry.source.clone(),
                            train: cfg.train_config(),
                            split_ratio: cfg.split_ratio,
                            standardize: cfg.standardize,
                            head: cfg.head,
                        });
                    }
                    cell_index += 1;
                }
            }
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub key: CellKey,
    pub run_index: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub wall_time: Duration,
}

/// Generates the data, splits it, trains, and scores the held-out part.
pub fn run_one(spec: &RunSpec) -> Result<RunRecord> {
    run_detailed(spec).map(|(rec, _)| rec)
}

/// Like [`run_one`], also returning the per-epoch losses.
pub fn run_detailed(spec: &RunSpec) -> Result<(RunRecord, TrainReport)> {
    let start = Instant::now();
    let mut dataset = spec.source.materialize(spec.sample_seed)?;
    if spec.standardize {
        dataset = data::standardize(&dataset).0;
    }
    let mut split_rng = ChaCha8Rng::seed_from_u64(spec.split_seed);
    let split = data::split(&dataset, spec.split_ratio, &mut split_rng)?;
    let net_spec = NetworkSpec {
        input_dim: dataset.dim(),
        hidden_width: spec.key.width,
        hidden_depth: spec.key.depth,
        activation: spec.key.activation,
        head: spec.head,
        seed: spec.seed,
    };
    let (_, report) = nn::train(&net_spec, &split, &spec.train)?;
    let rec = RunRecord {
        key: spec.key.clone(),
        run_index: spec.run_index,
        seed: spec.seed,
        final_loss: report.final_val_loss,
        final_accuracy: report.final_val_accuracy,
        wall_time: start.elapsed(),
    };
    Ok((rec, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub key: CellKey,
    pub run_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridOutcome {
    /// Successful runs in grid order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

pub fn run_grid(cfg: &GridConfig, parallelism: usize) -> Result<GridOutcome> {
    run_grid_with(cfg, parallelism, |_, _| {})
}

/// Runs every spec on up to `parallelism` workers, calling `on_done` as runs finish.
///
/// Failed runs are collected in [`GridOutcome::failures`]; the rest still run.
pub fn run_grid_with<F>(cfg: &GridConfig, parallelism: usize, on_done: F) -> Result<GridOutcome>
where
    F: Fn(&RunSpec, &Result<RunRecord>) + Sync,
{
    if parallelism == 0 {
        return Err(Error::InvalidArgument("parallelism must be at least 1".into()));
    }
    cfg.validate()?;
    let specs = expand_grid(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let r = run_one(s);
                on_done(s, &r);
                r
            })
            .collect()
    });

    let mut outcome = GridOutcome::default();
    for (spec, result) in specs.iter().zip(results) {
        match result {
            Ok(rec) => outcome.records.push(rec),
            Err(e) => outcome.failures.push(RunFailure {
                key: spec.key.clone(),
                run_index: spec.run_index,
                error: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub key: CellKey,
    pub mean_loss: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std_loss: f64,
    pub runs: usize,
}

/// Mean and sample std of the final loss per cell, in first-seen cell order.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRecord> {
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: HashMap<CellKey, Vec<f64>> = HashMap::new();
    for r in records {
        groups
            .entry(r.key.clone())
            .or_insert_with(|| {
                order.push(r.key.clone());
                Vec::new()
            })
            .push(r.final_loss);
    }
    order
        .into_iter()
        .map(|key| {
            let losses = &groups[&key];
            let n = losses.len();
            // shifted by the first value so that identical losses give that value back exactly
            let shift = losses[0];
            let mean = shift + losses.iter().map(|l| l - shift).sum::<f64>() / n as f64;
            let std = if n > 1 {
                (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            AggregateRecord {
                key,
                mean_loss: mean,
                std_loss: std,
                runs: n,
            }
        })
        .collect()
}

pub const RECORDS_HEADER: &str = "dataset,activation,depth,width,run,seed,final_loss,final_accuracy";
pub const AGGREGATES_HEADER: &str = "dataset,activation,depth,width,mean_loss,std_loss,runs";

/// Records as CSV. Wall time is left out so the file is schedule-independent.
pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let k = &r.key;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            k.dataset, k.activation, k.depth, k.width, r.run_index, r.seed, r.final_loss, r.final_accuracy
        );
    }
    out
}

pub fn timings_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("dataset,activation,depth,width,run,wall_time_ms\n");
    for r in records {
        let k = &r.key;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            k.dataset,
            k.activation,
            k.depth,
            k.width,
            r.run_index,
            r.wall_time.as_secs_f64() * 1e3
        );
    }
    out
}

/// Parses a file written by [`records_csv`].
pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RECORDS_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{RECORDS_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| err(format!("bad number `{}` in column {}", field(i), i + 1)))
        };
        let count = |i: usize| -> Result<usize> {
            field(i)
                .parse::<usize>()
                .map_err(|_| err(format!("bad count `{}` in column {}", field(i), i + 1)))
        };
        if rec.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", rec.len())));
        }
        out.push(RunRecord {
            key: CellKey {
                dataset: field(0).to_string(),
                activation: field(1).parse().map_err(|e: Error| err(e.to_string()))?,
                depth: count(2)?,
                width: count(3)?,
            },
            run_index: count(4)?,
            seed: field(5).parse().map_err(|_| err(format!("bad seed `{}`", field(5))))?,
            final_loss: num(6)?,
            final_accuracy: num(7)?,
            wall_time: Duration::ZERO,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format `{other}` (valid: csv, markdown)"
            ))),
        }
    }
}

pub fn aggregates_csv(aggs: &[AggregateRecord]) -> String {
    let mut out = String::from(AGGREGATES_HEADER);
    out.push('\n');
    for a in aggs {
        let k = &a.key;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            k.dataset, k.activation, k.depth, k.width, a.mean_loss, a.std_loss, a.runs
        );
    }
    out
}

/// `"0.398 (±0.128)"`
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.3} (±{std:.3})")
}

fn dedup_in_order<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// One table per dataset: rows grouped by depth then activation, one column
/// per width. The lowest mean in each (depth, width) column is bolded; ties
/// at the displayed precision are all bolded.
pub fn aggregates_markdown(aggs: &[AggregateRecord]) -> String {
    let mut out = String::new();
    let datasets = dedup_in_order(aggs.iter().map(|a| a.key.dataset.clone()));
    for (t, dataset) in datasets.iter().enumerate() {
        let rows: Vec<&AggregateRecord> = aggs.iter().filter(|a| &a.key.dataset == dataset).collect();
        let mut widths = dedup_in_order(rows.iter().map(|a| a.key.width));
        widths.sort_unstable();
        let mut depths = dedup_in_order(rows.iter().map(|a| a.key.depth));
        depths.sort_unstable();
        let activations = dedup_in_order(rows.iter().map(|a| a.key.activation));
        let lookup: HashMap<(ActivationKind, usize, usize), &AggregateRecord> = rows
            .iter()
            .map(|a| ((a.key.activation, a.key.depth, a.key.width), *a))
            .collect();

        if t > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "### {dataset}\n");
        let _ = write!(out, "| # of layers | Activation |");
        for w in &widths {
            let _ = write!(out, " {w} |");
        }
        out.push('\n');
        out.push_str("|---|---|");
        for _ in &widths {
            out.push_str("---|");
        }
        out.push('\n');

        for &depth in &depths {
            // displayed minimum per width within this depth block
            let best: HashMap<usize, String> = widths
                .iter()
                .filter_map(|&w| {
                    activations
                        .iter()
                        .filter_map(|&act| lookup.get(&(act, depth, w)))
                        .map(|a| a.mean_loss)
                        .min_by(|a, b| a.total_cmp(b))
                        .map(|m| (w, format!("{m:.3}")))
                })
                .collect();
            for (i, &act) in activations.iter().enumerate() {
                let label = if i == 0 { depth.to_string() } else { String::new() };
                let _ = write!(out, "| {label} | {act} |");
                for &w in &widths {
                    match lookup.get(&(act, depth, w)) {
                        Some(a) => {
                            let cell = format_cell(a.mean_loss, a.std_loss);
                            if best.get(&w) == Some(&format!("{:.3}", a.mean_loss)) {
                                let _ = write!(out, " **{cell}** |");
                            } else {
                                let _ = write!(out, " {cell} |");
                            }
                        }
                        None => out.push_str(" – |"),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn render_report(aggs: &[AggregateRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => aggregates_csv(aggs),
        ReportFormat::Markdown => aggregates_markdown(aggs),
    }
}

pub fn write_report(aggs: &[AggregateRecord], format: ReportFormat, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(render_report(aggs, format).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn record(act: ActivationKind, depth: usize, width: usize, run: usize, loss: f64) -> RunRecord {
        RunRecord {
            key: CellKey {
                dataset: "circles".into(),
                activation: act,
                depth,
                width,
            },
            run_index: run,
            seed: run as u64,
            final_loss: loss,
            final_accuracy: 0.5,
            wall_time: Duration::ZERO,
        }
    }

    fn small_cfg() -> GridConfig {
        GridConfig {
            datasets: vec![DatasetEntry {
                source: DatasetSource::Circles(CirclesParams {
                    n: 40,
                    ..Default::default()
                }),
                widths: vec![2, 3],
            }],
            depths: vec![1],
            activations: vec![ActivationKind::Relu, ActivationKind::ParametricSplit],
            runs: 2,
            epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn expand_counts() {
        let cfg = small_cfg();
        let specs = expand_grid(&cfg);
        assert_eq!(specs.len(), 8);
        assert_eq!(specs, expand_grid(&cfg));
        assert_eq!(specs[0].key.activation, ActivationKind::Relu);
        assert_eq!((specs[1].cell_index, specs[1].run_index), (0, 1));
        assert_eq!(specs[2].key.width, 3);

        let circles = GridConfig::default().only_dataset("circles");
        assert_eq!(expand_grid(&circles).len(), 450);
    }

    #[test]
    fn seeds_are_injective_and_stable() {
        let specs = expand_grid(&GridConfig::default());
        let seeds: HashSet<u64> = specs.iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), specs.len());

        // adding an activation does not move other cells' seeds
        let mut more = GridConfig::default();
        more.activations.insert(0, ActivationKind::SignSplit);
        let extended = expand_grid(&more);
        let lookup: HashMap<(CellKey, usize), u64> = extended
            .iter()
            .map(|s| ((s.key.clone(), s.run_index), s.seed))
            .collect();
        for s in &specs {
            assert_eq!(lookup[&(s.key.clone(), s.run_index)], s.seed);
        }
    }

    #[test]
    fn fixed_sample_shares_generation_seed() {
        let mut cfg = small_cfg();
        cfg.fixed_sample = true;
        let specs = expand_grid(&cfg);
        assert_eq!(specs[0].sample_seed, specs[1].sample_seed);
        assert_ne!(specs[0].split_seed, specs[1].split_seed);
        cfg.fixed_sample = false;
        let specs = expand_grid(&cfg);
        assert_ne!(specs[0].sample_seed, specs[1].sample_seed);
    }

    #[test]
    fn run_one_is_deterministic() {
        let spec = &expand_grid(&small_cfg())[3];
        let a = run_one(spec).unwrap();
        let b = run_one(spec).unwrap();
        assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
        assert!(a.final_loss >= 0.0);
    }

    #[test]
    fn zero_lr_keeps_initial_loss() {
        let mut spec = expand_grid(&small_cfg())[0].clone();
        spec.train.lr = 0.0;
        let rec = run_one(&spec).unwrap();

        let ds = spec.source.materialize(spec.sample_seed).unwrap();
        let split = data::split(&ds, 0.7, &mut ChaCha8Rng::seed_from_u64(spec.split_seed)).unwrap();
        let net_spec = NetworkSpec::new(2, spec.key.width, spec.key.depth, spec.key.activation, spec.seed);
        let net = nn::Network::build(&net_spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
        let initial = net.loss(&split.test.features, &split.test.labels).unwrap();
        assert_eq!(rec.final_loss, initial);
    }

    #[test]
    fn grid_isolates_failures() {
        let mut cfg = small_cfg();
        cfg.datasets.push(DatasetEntry {
            source: DatasetSource::BreastCancer {
                path: PathBuf::from("/nonexistent/wdbc.data"),
            },
            widths: vec![2],
        });
        let out = run_grid(&cfg, 2).unwrap();
        assert_eq!(out.records.len(), 8);
        assert_eq!(out.failures.len(), 4);
        assert!(out.failures[0].error.contains("not found"));
        assert!(run_grid(&cfg, 0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let recs = vec![
            record(ActivationKind::Relu, 1, 2, 0, 0.4),
            record(ActivationKind::Relu, 1, 2, 1, 0.6),
            record(ActivationKind::Tanh, 1, 2, 0, 0.3),
        ];
        let aggs = aggregate(&recs);
        assert_eq!(aggs.len(), 2);
        assert!((aggs[0].mean_loss - 0.5).abs() < 1e-12);
        assert!((aggs[0].std_loss - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!((aggs[1].std_loss, aggs[1].runs), (0.0, 1));

        let same: Vec<_> = (0..10).map(|i| record(ActivationKind::Relu, 1, 2, i, 0.25)).collect();
        let a = &aggregate(&same)[0];
        assert_eq!((a.mean_loss, a.std_loss, a.runs), (0.25, 0.0, 10));
    }

    #[test]
    fn report_formats() {
        let one = aggregate(&[record(ActivationKind::Relu, 1, 2, 0, 0.5)]);
        let csv = aggregates_csv(&one);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), AGGREGATES_HEADER);

        assert_eq!(format_cell(0.39752, 0.12849), "0.398 (±0.128)");

        let recs = vec![
            record(ActivationKind::Relu, 1, 2, 0, 0.4),
            record(ActivationKind::Tanh, 1, 2, 0, 0.4),
            record(ActivationKind::PRelu, 1, 2, 0, 0.6),
        ];
        let md = aggregates_markdown(&aggregate(&recs));
        assert_eq!(md.matches("**0.400 (±0.000)**").count(), 2);
        assert!(md.contains("| 1 | relu |"));
        assert!(md.contains("|  | prelu | 0.600 (±0.000) |"));
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            record(ActivationKind::SmoothSplit, 2, 3, 0, 0.123_456_789_012_345_67),
            record(ActivationKind::SmoothSplit, 2, 3, 1, 0.7),
        ];
        let path = dir.path().join("records.csv");
        fs::write(&path, records_csv(&recs)).unwrap();
        let back = read_records_csv(&path).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn config_toml() {
        let cfg = GridConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(GridConfig::from_toml_str(&text).unwrap(), cfg);

        let cfg = GridConfig::from_toml_str(
            r#"
            runs = 3
            depths = [1]
            activations = ["relu", "parametricsplit"]
            [[datasets]]
            kind = "circles"
            n = 200
            widths = [4]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.runs, 3);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(
            cfg.datasets[0].source,
            DatasetSource::Circles(CirclesParams {
                n: 200,
                ..Default::default()
            })
        );

        assert!(GridConfig::from_toml_str("runs = 0").is_err());
        assert!(GridConfig::from_toml_str("bogus = 1").is_err());
        assert!(GridConfig::from_toml_str("activations = [\"swish\"]").is_err());
    }
}

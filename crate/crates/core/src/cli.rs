//! The `topoact` command line.
//!
//! Exit codes: 0 on success, 1 when the invocation or its inputs are invalid,
//! 2 when something fails at run time. Inputs are validated before any output
//! file is touched.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{self, ActivationKind, ActivationState, BOUNDARY_MARGIN};
use crate::data::{self, CirclesParams, Dataset, TorusParams};
use crate::error::{Error, Result};
use crate::experiments::{self, CellKey, DatasetSource, GridConfig, ReportFormat, RunSpec};
use crate::matrix::Matrix;
use crate::nn::{self, Network, NetworkSpec, OutputHead, TrainConfig};

/// Environment variable that overrides the default `grid --out-dir`.
pub const OUT_DIR_ENV: &str = "TOPOACT_OUT_DIR";

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "topoact",
    version,
    about = "Topology-aware activations: data, training and experiment grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Train one network and print its per-epoch losses.
    Train(TrainArgs),
    /// Run an experiment grid and write records, aggregates and a markdown table.
    Grid(GridArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Apply an activation to every coordinate of a dataset CSV.
    Transform(TransformArgs),
    /// Re-aggregate a records CSV into a table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticDataset {
    Circles,
    #[value(alias = "curves-on-torus")]
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainDataset {
    Circles,
    #[value(alias = "curves-on-torus")]
    Torus,
    #[value(alias = "wdbc")]
    BreastCancer,
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    /// Number of points.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Gaussian noise std [default: 0.2 for circles, 0.05 for torus].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Inner circle radius relative to the outer one.
    #[arg(long, default_value_t = 0.5)]
    pub radius_ratio: f64,
    #[arg(long, default_value_t = 2.0)]
    pub major_radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub minor_radius: f64,
    /// Phase offset between the two torus curves.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    pub phase: f64,
}

impl GeneratorArgs {
    fn circles(&self) -> CirclesParams {
        let d = CirclesParams::default();
        CirclesParams {
            n: self.n,
            noise: self.noise.unwrap_or(d.noise),
            radius_ratio: self.radius_ratio,
        }
    }

    fn torus(&self) -> TorusParams {
        let d = TorusParams::default();
        TorusParams {
            n: self.n,
            noise: self.noise.unwrap_or(d.noise),
            major_radius: self.major_radius,
            minor_radius: self.minor_radius,
            phase: self.phase,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub dataset: SyntheticDataset,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub dataset: TrainDataset,
    /// Path of the WDBC file for `--dataset breast-cancer`.
    #[arg(long, default_value = "data/wdbc.data")]
    pub wdbc: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long)]
    pub activation: ActivationKind,
    /// Number of hidden layers.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Units per hidden layer.
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Base seed; the run matches run 0 of the same cell in a grid with this base seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub split_ratio: f64,
    /// Standardize features before splitting.
    #[arg(long)]
    pub standardize: bool,
    /// Clip every gradient component to ±CLIP.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, default_value = "linear")]
    pub head: OutputHead,
    /// Write `epoch,train_loss,val_loss` rows to this CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// TOML grid description; the built-in default grid when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Keep only this dataset (circles, curves-on-torus, breast-cancer).
    #[arg(long)]
    pub only: Option<String>,
    /// Override the config's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
    pub out_dir: PathBuf,
    /// Suppress per-run progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Parameter draws per activation kind, and networks per kind.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Evaluation points per draw.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt the analytic input derivatives (exercises the detector).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub activation: ActivationKind,
    /// Activation parameters as name=value pairs, e.g. `a=2.35619 b=1`.
    #[arg(long, num_args = 0..)]
    pub params: Vec<String>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a subcommand, already mapped onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train(&a),
        Command::Grid(a) => grid(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Transform(a) => transform(&a),
        Command::Report(a) => report(&a),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate(a: &GenerateArgs) -> CmdResult {
    let source = match a.dataset {
        SyntheticDataset::Circles => DatasetSource::Circles(a.generator.circles()),
        SyntheticDataset::Torus => DatasetSource::CurvesOnTorus(a.generator.torus()),
    };
    let d = source.materialize(a.seed)?;
    write_output(a.out.as_deref(), &d.to_csv_string())
}

fn train(a: &TrainArgs) -> CmdResult {
    let source = match a.dataset {
        TrainDataset::Circles => DatasetSource::Circles(a.generator.circles()),
        TrainDataset::Torus => DatasetSource::CurvesOnTorus(a.generator.torus()),
        TrainDataset::BreastCancer => DatasetSource::BreastCancer { path: a.wdbc.clone() },
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        clip: a.clip,
    };
    cfg.validate()?;
    NetworkSpec::new(1, a.width, a.depth, a.activation, 0).validate()?;
    if !(a.split_ratio > 0.0 && a.split_ratio < 1.0) {
        return Err(Failure::Invalid(format!(
            "--split-ratio must lie in (0, 1), got {}",
            a.split_ratio
        )));
    }

    let name = source.name();
    let key = CellKey {
        dataset: name.to_string(),
        activation: a.activation,
        depth: a.depth,
        width: a.width,
    };
    let spec = RunSpec {
        seed: experiments::run_seed(a.seed, &key, 0),
        sample_seed: experiments::sample_seed(a.seed, name, 0),
        split_seed: experiments::split_seed(a.seed, name, 0),
        key,
        cell_index: 0,
        run_index: 0,
        source,
        train: cfg,
        split_ratio: a.split_ratio,
        standardize: a.standardize,
        head: a.head,
    };
    let (_, report) = experiments::run_detailed(&spec)?;

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    println!(
        "{} {} depth={} width={} epochs={} lr={} batch_size={} seed={}",
        name, a.activation, a.depth, a.width, a.epochs, a.lr, a.batch_size, a.seed
    );
    for (i, (tl, vl)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
        println!("epoch {:>4}  train_loss {tl:.6}  val_loss {vl:.6}", i + 1);
        let _ = writeln!(csv, "{},{tl},{vl}", i + 1);
    }
    println!(
        "final  val_loss {:.6}  val_accuracy {:.4}",
        report.final_val_loss, report.final_val_accuracy
    );
    match &a.out {
        Some(path) => write_output(Some(path), &csv),
        None => Ok(()),
    }
}

fn grid(a: &GridArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(path) => GridConfig::from_file(path)?,
        None => GridConfig::default(),
    };
    if let Some(name) = &a.only {
        cfg = cfg.only_dataset(name);
        if cfg.datasets.is_empty() {
            return Err(Failure::Invalid(format!(
                "no dataset named `{name}` in the grid (valid: circles, curves-on-torus, breast-cancer)"
            )));
        }
    }
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    cfg.validate()?;
    let parallelism = match a.parallelism {
        Some(0) => return Err(Failure::Invalid("--parallelism must be at least 1".into())),
        Some(p) => p,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    let total = experiments::expand_grid(&cfg).len();
    let done = AtomicUsize::new(0);
    let quiet = a.quiet;
    let outcome = experiments::run_grid_with(&cfg, parallelism, |spec, result| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if quiet {
            return;
        }
        let key = &spec.key;
        let status = match result {
            Ok(r) => format!("loss {:.4}", r.final_loss),
            Err(e) => format!("FAILED: {e}"),
        };
        eprintln!(
            "[{k:>w$}/{total}] {} {} d{} w{} run {}  {status}",
            key.dataset,
            key.activation,
            key.depth,
            key.width,
            spec.run_index,
            w = total.to_string().len()
        );
    })?;

    let aggs = experiments::aggregate(&outcome.records);
    let table = experiments::aggregates_markdown(&aggs);
    let artifacts = [
        ("records.csv", experiments::records_csv(&outcome.records)),
        ("aggregates.csv", experiments::aggregates_csv(&aggs)),
        ("table.md", table.clone()),
        ("timings.csv", experiments::timings_csv(&outcome.records)),
    ];
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", a.out_dir.display())))?;
    for (file, text) in &artifacts {
        write_output(Some(&a.out_dir.join(file)), text)?;
    }
    print!("{table}");

    if outcome.failures.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{} of {total} runs failed:", outcome.failures.len());
    for f in &outcome.failures {
        let k = &f.key;
        let _ = write!(
            msg,
            "\n  {} {} d{} w{} run {}: {}",
            k.dataset, k.activation, k.depth, k.width, f.run_index, f.error
        );
    }
    Err(Failure::Runtime(msg))
}

/// Uniform draw from `[-range, range]` that stays clear of every boundary.
fn draw_clear_point<R: Rng + ?Sized>(rng: &mut R, boundaries: &[f64], range: f64) -> f64 {
    loop {
        let x = rng.random_range(-range..=range);
        if boundaries.iter().all(|&b| (x - b).abs() > BOUNDARY_MARGIN) {
            return x;
        }
    }
}

/// Finite-difference step for `state`.
///
/// Parametricsplit's middle branch varies in `a` on the scale of `cos a`, so
/// the step shrinks with it to keep truncation error small near `a = π/2`.
fn step_for(state: &ActivationState) -> f64 {
    let scale = match state.kind() {
        ActivationKind::ParametricSplit => state.params()[0].cos().abs().min(1.0),
        _ => 1.0,
    };
    1e-5 * scale.max(1e-3)
}

/// Worst relative error over `trials` parameter draws of `kind`.
pub fn activation_gradcheck<R: Rng + ?Sized>(
    kind: ActivationKind,
    trials: usize,
    points: usize,
    inject_fault: bool,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let state = ActivationState::init(kind, rng);
        let boundaries = state.branch_boundaries();
        let x: Vec<f64> = (0..points).map(|_| draw_clear_point(rng, &boundaries, 3.0)).collect();
        let h = step_for(&state);
        let err = if inject_fault {
            let mut grads = state.backward(&x, &vec![1.0; x.len()])?;
            grads.d_input.iter_mut().for_each(|g| *g += 1e-3);
            activations::compare_to_numeric(&state, &x, h, &grads)
        } else {
            activations::finite_diff_check(&state, &x, h)?
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn near_boundary(net: &Network, batch: &Matrix) -> Result<bool> {
    let (_, cache) = net.forward(batch)?;
    for (layer, z) in net.layers.iter().zip(cache.pre_activations()) {
        let Some(act) = &layer.activation else { continue };
        let bounds = act.branch_boundaries();
        if z.as_slice()
            .iter()
            .any(|&v| bounds.iter().any(|&b| (v - b).abs() <= BOUNDARY_MARGIN))
        {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Worst relative error of full-network parameter gradients over `trials`
/// random small networks (depth ≤ 2, width ≤ 4, batch ≤ 8) using `kind`.
///
/// Networks whose pre-activations come within the boundary margin of a kink
/// are redrawn.
pub fn network_gradcheck<R: Rng + ?Sized>(kind: ActivationKind, trials: usize, rng: &mut R) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut attempts = 0;
        let (net, data) = loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::IllPosedCheck(format!(
                    "could not draw a {kind} network clear of branch boundaries"
                )));
            }
            let input_dim = rng.random_range(1..=3);
            let mut spec = NetworkSpec::new(
                input_dim,
                rng.random_range(1..=4),
                rng.random_range(1..=2),
                kind,
                rng.next_u64(),
            );
            spec.head = OutputHead::ALL[t % OutputHead::ALL.len()];
            let net = Network::build(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))?;
            let n = rng.random_range(2..=8);
            let features: Vec<f64> = (0..n * input_dim).map(|_| rng.random_range(-2.0..=2.0)).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let data = Dataset::new("gradcheck", Matrix::from_vec(n, input_dim, features)?, labels)?;
            if !near_boundary(&net, &data.features)? {
                break (net, data);
            }
        };
        let h = net
            .layers
            .iter()
            .filter_map(|l| l.activation.as_ref())
            .map(step_for)
            .fold(1e-5, f64::min);
        worst = worst.max(nn::network_gradient_check(&net, &data, h)?);
    }
    Ok(worst)
}

fn gradcheck(a: &GradcheckArgs) -> CmdResult {
    if a.trials == 0 {
        return Err(Failure::Invalid("--trials must be at least 1".into()));
    }
    if a.points == 0 {
        return Err(Failure::Invalid("--points must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut ok = true;
    println!("activation gradients ({} draws x {} points each)", a.trials, a.points);
    for kind in ActivationKind::ALL {
        let err = activation_gradcheck(kind, a.trials, a.points, a.inject_fault, &mut rng)?;
        ok &= err <= GRADCHECK_TOLERANCE;
        println!("  {:<16} max rel err {err:.3e}", kind.name());
    }
    println!(
        "network parameter gradients ({} random networks per activation)",
        a.trials
    );
    for kind in ActivationKind::ALL {
        let err = network_gradcheck(kind, a.trials, &mut rng)?;
        ok &= err <= GRADCHECK_TOLERANCE;
        println!("  {:<16} max rel err {err:.3e}", kind.name());
    }
    if ok {
        println!("PASS (tolerance {GRADCHECK_TOLERANCE:e})");
        Ok(())
    } else {
        println!("FAIL (tolerance {GRADCHECK_TOLERANCE:e})");
        Err(Failure::Runtime("gradient check exceeded tolerance".into()))
    }
}

/// Parses `name=value` pairs into the parameter vector of `kind`.
pub fn parse_params(kind: ActivationKind, pairs: &[String]) -> Result<Vec<f64>> {
    let names = kind.param_names();
    let mut values = vec![None; names.len()];
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("parameter `{pair}` is not of the form name=value")))?;
        let idx = names.iter().position(|n| *n == k.trim()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{kind} has no parameter `{k}` (expected: {})",
                if names.is_empty() {
                    "none".to_string()
                } else {
                    names.join(", ")
                }
            ))
        })?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("parameter {k}: `{v}` is not a number")))?;
        if values[idx].replace(v).is_some() {
            return Err(Error::InvalidArgument(format!("parameter {k} given twice")));
        }
    }
    names
        .iter()
        .zip(values)
        .map(|(n, v)| v.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs parameter `{n}`"))))
        .collect()
}

fn transform(a: &TransformArgs) -> CmdResult {
    let state = ActivationState::new(a.activation, parse_params(a.activation, &a.params)?)?;
    let name = a
        .input
        .file_stem()
        .map_or_else(|| "input".to_string(), |s| s.to_string_lossy().into_owned());
    let d = Dataset::read_csv(&a.input, &name)?;
    let out = data::transform_pointcloud(&d, &state);
    write_output(a.out.as_deref(), &out.to_csv_string())
}

fn report(a: &ReportArgs) -> CmdResult {
    let records = experiments::read_records_csv(&a.records)?;
    if records.is_empty() {
        return Err(Failure::Invalid(format!("{} contains no records", a.records.display())));
    }
    let text = experiments::render_report(&experiments::aggregate(&records), a.format);
    write_output(a.out.as_deref(), &text)
}

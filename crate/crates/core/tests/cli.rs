//! Exit-code contract and end-to-end behaviour of the `topoact` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn topoact(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topoact"))
        .args(args)
        .current_dir(dir)
        .env_remove("TOPOACT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL_GRID: &str = r#"
depths = [1]
activations = ["tanh", "parametricsplit"]
runs = 2
epochs = 4

[[datasets]]
kind = "circles"
n = 150
widths = [2, 3]
"#;

#[test]
fn help_and_version_exit_zero() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&topoact(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&topoact(tmp.path(), &["--version"])), 0);
    assert_eq!(code(&topoact(tmp.path(), &["grid", "--help"])), 0);
}

#[test]
fn bad_invocations_exit_one() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &[][..],
        &["frobnicate"],
        &["generate", "--dataset", "circles", "--bogus-flag"],
        &["train", "--dataset", "circles", "--activation", "gelu"],
        &["train", "--dataset", "circles", "--activation", "tanh", "--depth", "0"],
        &[
            "train",
            "--dataset",
            "circles",
            "--activation",
            "tanh",
            "--batch-size",
            "0",
        ],
        &[
            "train",
            "--dataset",
            "breast-cancer",
            "--wdbc",
            "nowhere.data",
            "--activation",
            "tanh",
        ],
        &["generate", "--dataset", "circles", "--n", "2"],
        &["generate", "--dataset", "circles", "--noise", "-1"],
        &["grid", "--parallelism", "0"],
        &["grid", "--only", "mnist"],
        &["report", "--records", "missing.csv"],
        &["transform", "--in", "missing.csv", "--activation", "tanh"],
    ] {
        let o = topoact(tmp.path(), args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn generate_writes_header_plus_rows_deterministically() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "generate",
        "--dataset",
        "circles",
        "--n",
        "1000",
        "--seed",
        "0",
        "--out",
        "c.csv",
    ];
    assert_eq!(code(&topoact(tmp.path(), &args)), 0);
    let first = fs::read_to_string(tmp.path().join("c.csv")).unwrap();
    assert_eq!(first.lines().count(), 1001);
    assert!(!first.contains('\r'));
    assert_eq!(code(&topoact(tmp.path(), &args)), 0);
    assert_eq!(fs::read_to_string(tmp.path().join("c.csv")).unwrap(), first);

    let o = topoact(
        tmp.path(),
        &["generate", "--dataset", "torus", "--n", "10", "--seed", "3"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("x0,x1,x2,label"));
}

#[test]
fn unknown_dataset_lists_valid_ones() {
    let tmp = TempDir::new().unwrap();
    let o = topoact(tmp.path(), &["generate", "--dataset", "cube", "--out", "x.csv"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("circles") && err.contains("torus"), "{err}");
    assert!(!tmp.path().join("x.csv").exists());
}

#[test]
fn io_failure_exits_two() {
    let tmp = TempDir::new().unwrap();
    let o = topoact(
        tmp.path(),
        &["generate", "--dataset", "circles", "--out", "no/such/dir/c.csv"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn train_defaults_zero_lr_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let o = topoact(
        tmp.path(),
        &["train", "--dataset", "circles", "--activation", "relu", "--n", "200"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(
        out.lines().next().unwrap().contains("epochs=100 lr=0.05 batch_size=32"),
        "{out}"
    );
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch ")).count(), 100);
    assert!(out.contains("final  val_loss"));

    let again = topoact(
        tmp.path(),
        &["train", "--dataset", "circles", "--activation", "relu", "--n", "200"],
    );
    assert_eq!(stdout(&again), out);

    let o = topoact(
        tmp.path(),
        &[
            "train",
            "--dataset",
            "torus",
            "--activation",
            "smoothsplit",
            "--lr",
            "0",
            "--epochs",
            "5",
            "--out",
            "e.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(tmp.path().join("e.csv")).unwrap();
    let val: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(val.len(), 5);
    assert!(val.iter().all(|v| *v == val[0]));
    let first_epoch = stdout(&o).lines().find(|l| l.starts_with("epoch")).unwrap().to_string();
    let final_line = stdout(&o).lines().last().unwrap().to_string();
    let loss = |l: &str| {
        l.split("val_loss")
            .nth(1)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(loss(&first_epoch), loss(&final_line));
}

#[test]
fn gradcheck_contract() {
    let tmp = TempDir::new().unwrap();
    let o = topoact(tmp.path(), &["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    assert_eq!(code(&topoact(tmp.path(), &["gradcheck", "--trials", "0"])), 1);
    let o = topoact(tmp.path(), &["gradcheck", "--inject-fault"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
#[allow(clippy::approx_constant)]
fn transform_outputs() {
    let tmp = TempDir::new().unwrap();
    let gen = [
        "generate",
        "--dataset",
        "circles",
        "--noise",
        "0",
        "--seed",
        "1",
        "--out",
        "c.csv",
    ];
    assert_eq!(code(&topoact(tmp.path(), &gen)), 0);

    let o = topoact(
        tmp.path(),
        &[
            "transform",
            "--in",
            "c.csv",
            "--activation",
            "parametricsplit",
            "--params",
            "a=2.35619",
            "b=1",
            "--out",
            "d.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("d.csv")).unwrap();
    assert_eq!(text.lines().count(), 1001);
    for line in text.lines().skip(1) {
        for v in line.split(',').take(2) {
            let v: f64 = v.parse().unwrap();
            assert!(!(v > -0.7071 && v < 2.1213), "{v} falls in the gap");
        }
    }

    let o = topoact(
        tmp.path(),
        &[
            "transform",
            "--in",
            "c.csv",
            "--activation",
            "signsplit",
            "--params",
            "c=0.2",
        ],
    );
    assert_eq!(code(&o), 0);
    for line in stdout(&o).lines().skip(1) {
        for v in line.split(',').take(2) {
            let v: f64 = v.parse().unwrap();
            assert!(v.abs() >= 0.2, "{v}");
        }
    }

    fs::write(
        tmp.path().join("tiny.csv"),
        "x0,x1,label\n0.03,-0.02,0\n0.001,-0.03,1\n",
    )
    .unwrap();
    let o = topoact(tmp.path(), &["transform", "--in", "tiny.csv", "--activation", "tanh"]);
    assert_eq!(code(&o), 0);
    let before = fs::read_to_string(tmp.path().join("tiny.csv")).unwrap();
    for (a, b) in before.lines().zip(stdout(&o).lines()).skip(1) {
        for (x, y) in a.split(',').zip(b.split(',')).take(2) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-3);
        }
    }

    let o = topoact(
        tmp.path(),
        &[
            "transform",
            "--in",
            "c.csv",
            "--activation",
            "parametricsplit",
            "--params",
            "a=1",
            "--out",
            "bad.csv",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(!tmp.path().join("bad.csv").exists());
}

#[test]
fn grid_report_round_trip() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("g.toml"), SMALL_GRID).unwrap();
    let o = topoact(
        tmp.path(),
        &[
            "grid",
            "--config",
            "g.toml",
            "--parallelism",
            "2",
            "--out-dir",
            "out",
            "-q",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in ["records.csv", "aggregates.csv", "table.md", "timings.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(out.join("table.md")).unwrap();
    assert_eq!(stdout(&o), table);
    assert_eq!(
        fs::read_to_string(out.join("records.csv")).unwrap().lines().count(),
        1 + 2 * 2 * 2
    );
    assert_eq!(
        fs::read_to_string(out.join("aggregates.csv")).unwrap().lines().count(),
        1 + 2 * 2
    );

    let o = topoact(
        tmp.path(),
        &["report", "--records", "out/records.csv", "--format", "markdown"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), table);
    let o = topoact(
        tmp.path(),
        &[
            "report",
            "--records",
            "out/records.csv",
            "--format",
            "csv",
            "--out",
            "agg.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(tmp.path().join("agg.csv")).unwrap(),
        fs::read_to_string(out.join("aggregates.csv")).unwrap()
    );
}

#[test]
fn grid_output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("g.toml"), SMALL_GRID).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_topoact"))
        .args(["grid", "--config", "g.toml", "-q"])
        .current_dir(tmp.path())
        .env("TOPOACT_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("from-env/records.csv").exists());
}

#[test]
fn grid_validation_and_failures() {
    let tmp = TempDir::new().unwrap();
    let o = topoact(tmp.path(), &["grid", "--config", "missing.toml", "--out-dir", "out"]);
    assert_eq!(code(&o), 1);
    assert!(!tmp.path().join("out").exists());

    fs::write(tmp.path().join("bad.toml"), "runs = 0\n").unwrap();
    assert_eq!(
        code(&topoact(
            tmp.path(),
            &["grid", "--config", "bad.toml", "--out-dir", "out"]
        )),
        1
    );
    fs::write(tmp.path().join("typo.toml"), "epochz = 3\n").unwrap();
    assert_eq!(
        code(&topoact(
            tmp.path(),
            &["grid", "--config", "typo.toml", "--out-dir", "out"]
        )),
        1
    );
    assert!(!tmp.path().join("out").exists());

    let broken = format!("{SMALL_GRID}\n[[datasets]]\nkind = \"breast-cancer\"\npath = \"gone.data\"\nwidths = [30]\n");
    fs::write(tmp.path().join("broken.toml"), broken).unwrap();
    let o = topoact(
        tmp.path(),
        &["grid", "--config", "broken.toml", "--out-dir", "out", "-q"],
    );
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("breast-cancer tanh d1 w30 run 0"), "{err}");
    let records = fs::read_to_string(tmp.path().join("out/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 8);
}

#[test]
fn report_arithmetic_and_empty_input() {
    let tmp = TempDir::new().unwrap();
    let header = "dataset,activation,depth,width,run,seed,final_loss,final_accuracy\n";
    fs::write(
        tmp.path().join("two.csv"),
        format!("{header}circles,relu,1,4,0,1,0.4,0.8\ncircles,relu,1,4,1,2,0.6,0.7\n"),
    )
    .unwrap();
    let o = topoact(tmp.path(), &["report", "--records", "two.csv"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0.500 (±0.141)"), "{}", stdout(&o));

    fs::write(tmp.path().join("empty.csv"), header).unwrap();
    let o = topoact(tmp.path(), &["report", "--records", "empty.csv", "--out", "r.md"]);
    assert_eq!(code(&o), 1);
    assert!(!tmp.path().join("r.md").exists());
    fs::write(tmp.path().join("blank.csv"), "").unwrap();
    assert_eq!(code(&topoact(tmp.path(), &["report", "--records", "blank.csv"])), 1);
}

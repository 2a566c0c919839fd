//! End-to-end tests of the `gbf` binary: flag handling, exit codes, golden
//! help output, and round trips between the CLI and the library.

use gbf::eval::{self, DataSchema};
use gbf::family::Family;
use gbf::forest::ForestParams;
use gbf::model::{self, GbfParams};
use gbf::tree::TreeParams;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gbf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn gbf")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("gbf-cli-test-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// Small Poisson dataset written as CSV, plus its schema.
fn write_fixture(dir: &TempDir) -> (PathBuf, PathBuf) {
    let mut csv = String::from("a,b,y\n");
    for i in 0..60 {
        let a = (i % 10) as f64 / 5.0 - 1.0;
        let b = ((i * 7) % 9) as f64 / 4.0 - 1.0;
        let y = ((a + 1.5) * 2.0).round().max(0.0) + (i % 3) as f64;
        csv.push_str(&format!("{a},{b},{y}\n"));
    }
    let data = dir.path("data.csv");
    std::fs::write(&data, csv).unwrap();
    let schema = dir.path("data.schema");
    std::fs::write(&schema, "response = y\nfeatures = *\n").unwrap();
    (data, schema)
}

#[test]
fn help_output_matches_golden_files() {
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cases = [
        (vec!["--help"], "help.txt"),
        (vec!["fit", "--help"], "help_fit.txt"),
        (vec!["predict", "--help"], "help_predict.txt"),
        (vec!["simulate", "--help"], "help_simulate.txt"),
        (vec!["cv", "--help"], "help_cv.txt"),
        (vec!["range", "--help"], "help_range.txt"),
        (vec!["proximity", "--help"], "help_proximity.txt"),
    ];
    for (args, golden) in cases {
        let out = run(&args);
        assert!(out.status.success());
        let want = std::fs::read_to_string(golden_dir.join(golden)).unwrap();
        assert_eq!(
            stdout(&out).trim_end(),
            want.trim_end(),
            "help mismatch for {args:?}"
        );
    }
}

#[test]
fn invalid_flags_exit_2() {
    let dir = TempDir::new("exit2");
    let (data, schema) = write_fixture(&dir);

    // missing required --family
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--out",
        dir.path("m.gbf").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // unsupported stage count
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--stages",
        "3",
        "--out",
        dir.path("m.gbf").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("unsupported stage count"),
        "stderr: {}",
        stderr(&out)
    );

    // unknown family value
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "weibull",
        "--out",
        dir.path("m.gbf").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_3() {
    let dir = TempDir::new("exit3");
    let (_, schema) = write_fixture(&dir);
    let out = run(&[
        "fit",
        "--data",
        dir.path("missing.csv").to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--out",
        dir.path("m.gbf").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    // degenerate MLE: all-zero Poisson responses
    let data = dir.path("zeros.csv");
    let mut csv = String::from("a,y\n");
    for i in 0..20 {
        csv.push_str(&format!("{i},0\n"));
    }
    std::fs::write(&data, csv).unwrap();
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--trees",
        "10",
        "--out",
        dir.path("m.gbf").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("degenerate MLE"));
}

#[test]
fn fit_predict_round_trip_matches_in_process() {
    let dir = TempDir::new("roundtrip");
    let (data, schema) = write_fixture(&dir);
    let model_path = dir.path("model.gbf");
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--trees",
        "20",
        "--min-node-size",
        "2",
        "--seed",
        "9",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    // the same fit in-process
    let ds = eval::load_csv(&data, &DataSchema::from_kv("response = y\n").unwrap()).unwrap();
    let params = GbfParams::new(
        Family::Poisson,
        ForestParams {
            n_trees: 20,
            sample_fraction: 0.4,
            tree: TreeParams {
                mtry: 1, // p == 2, so max(1, 2/3) == 1 is the CLI default
                min_node_size: 2,
                max_depth: None,
                seed: 0,
            },
            seed: 9,
        },
    );
    let obs = ds.observations(Family::Poisson);
    let in_process = model::fit(&ds.x, &obs, &params).unwrap();

    // predict at the training rows through the binary
    let points_path = dir.path("points.csv");
    let mut points = String::from("a,b\n");
    for i in 0..ds.x.n_rows() {
        let row = ds.x.row(i);
        points.push_str(&format!("{},{}\n", row[0], row[1]));
    }
    std::fs::write(&points_path, points).unwrap();
    let out = run(&[
        "predict",
        "--model",
        model_path.to_str().unwrap(),
        "--points",
        points_path.to_str().unwrap(),
        "--level",
        "0.9",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.trim_end().lines().collect();
    assert_eq!(lines.len(), ds.x.n_rows() + 1, "one output row per point");

    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let pred = in_process.predict(ds.x.row(i));
        let (lo, hi) = pred.confidence_interval(0.9);
        assert_eq!(cols[0].to_bits(), pred.link_estimate.to_bits(), "row {i}");
        assert_eq!(cols[1].to_bits(), pred.link_variance.to_bits());
        assert_eq!(cols[2].to_bits(), pred.response_estimate.to_bits());
        assert_eq!(cols[3].to_bits(), pred.response_variance.to_bits());
        assert_eq!(cols[4].to_bits(), lo.to_bits());
        assert_eq!(cols[5].to_bits(), hi.to_bits());
    }
}

#[test]
fn predict_level_validation() {
    let dir = TempDir::new("level");
    let (data, schema) = write_fixture(&dir);
    let model_path = dir.path("model.gbf");
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--trees",
        "10",
        "--min-node-size",
        "2",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let points = dir.path("p.csv");
    std::fs::write(&points, "0.0,0.0\n").unwrap();
    let out = run(&[
        "predict",
        "--model",
        model_path.to_str().unwrap(),
        "--points",
        points.to_str().unwrap(),
        "--level",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage0_model_predicts_a_constant_column() {
    let dir = TempDir::new("stage0");
    let (data, schema) = write_fixture(&dir);
    let model_path = dir.path("model.gbf");
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--stages",
        "0",
        "--trees",
        "10",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let points = dir.path("p.csv");
    std::fs::write(&points, "0.0,0.0\n1.0,-1.0\n-0.4,0.2\n").unwrap();
    let out = run(&[
        "predict",
        "--model",
        model_path.to_str().unwrap(),
        "--points",
        points.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let estimates: Vec<&str> = text
        .trim_end()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(estimates.len(), 3);
    assert!(estimates.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn simulate_is_deterministic_and_respects_seed() {
    let dir = TempDir::new("simdet");
    let config = dir.path("sim.conf");
    std::fs::write(
        &config,
        "n_train = 60\nreplicates = 2\ntrees = 12\nn_test_random = 8\nmin_node_size = 3\n",
    )
    .unwrap();
    let run_sim = |out_name: &str, seed: &str| {
        let out_path = dir.path(out_name);
        let out = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(&out_path).unwrap()
    };
    let a = run_sim("a.csv", "5");
    let b = run_sim("b.csv", "5");
    assert_eq!(a, b, "same seed must give byte-identical CSV");
    let c = run_sim("c.csv", "6");
    assert_ne!(a, c, "different seed should change the records");
}

#[test]
fn proximity_orders_by_score_then_index() {
    let dir = TempDir::new("prox");
    let (data, schema) = write_fixture(&dir);
    let model_path = dir.path("model.gbf");
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--trees",
        "15",
        "--min-node-size",
        "2",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "proximity",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--point",
        "0.2,0.5",
        "--top-k",
        "60",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<(usize, f64)> = text
        .trim_end()
        .lines()
        .skip(1)
        .map(|l| {
            let mut parts = l.split(',');
            let idx: usize = parts.next().unwrap().parse().unwrap();
            let score: f64 = parts.next().unwrap().parse().unwrap();
            (idx, score)
        })
        .collect();
    assert_eq!(rows.len(), 60);
    for w in rows.windows(2) {
        assert!(
            w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0),
            "ordering violated: {w:?}"
        );
    }

    // tampered data fails the fingerprint check
    let tampered = dir.path("tampered.csv");
    let mut contents = std::fs::read_to_string(&data).unwrap();
    contents.push('\n');
    std::fs::write(&tampered, contents).unwrap();
    let out = run(&[
        "proximity",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        tampered.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--point",
        "0.2,0.5",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("fingerprint"));
}

#[test]
fn range_prints_the_poisson_lower_bound() {
    let dir = TempDir::new("range");
    let (data, schema) = write_fixture(&dir);
    let model_path = dir.path("model.gbf");
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--trees",
        "20",
        "--min-node-size",
        "2",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&["range", "--model", model_path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let field = |prefix: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(prefix))
            .unwrap()
            .split(": ")
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    let eta0 = field("eta0");
    let lower = field("link range lower");
    assert!((lower - (eta0 - 2.0)).abs() < 1e-6, "lower {lower}, eta0 {eta0}");
    assert!(text.contains("link range upper: inf"));
}

#[test]
fn cv_command_prints_three_stage_table() {
    let dir = TempDir::new("cv");
    let (data, schema) = write_fixture(&dir);
    let report_path = dir.path("report.csv");
    let out = run(&[
        "cv",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--family",
        "poisson",
        "--folds",
        "5",
        "--trees",
        "12",
        "--min-node-size",
        "2",
        "--seed",
        "3",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("stage0") && table.contains("stage1") && table.contains("stage2"));
    let csv = std::fs::read_to_string(&report_path).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

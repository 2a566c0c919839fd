//! Acceptance suite, CLI side: determinism of `simulate` and bit-exact
//! model-file round trips (criterion 9).

use gbf_cli::model_file;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gbf"))
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir =
            std::env::temp_dir().join(format!("gbf-acceptance-{tag}-{}", std::process::id()));
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

/// Criterion 9a: running `simulate` twice with the same seed yields
/// byte-identical record and fixed-point CSVs.
#[test]
fn acceptance_09a_simulate_is_byte_deterministic() {
    let dir = TempDir::new("sim");
    let config = dir.path("sim.conf");
    std::fs::write(
        &config,
        "n_train = 150\nreplicates = 3\ntrees = 40\nn_test_random = 20\nscales = 2\n",
    )
    .unwrap();
    let mut outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for run in 0..2 {
        let out_path = dir.path(&format!("records{run}.csv"));
        let fixed_path = dir.path(&format!("fixed{run}.csv"));
        let status = bin()
            .args([
                "simulate",
                "--family",
                "binomial",
                "--config",
                config.to_str().unwrap(),
                "--seed",
                "777",
                "--out",
                out_path.to_str().unwrap(),
                "--fixed-points-out",
                fixed_path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(&out_path).unwrap(),
            std::fs::read(&fixed_path).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "record CSVs differ");
    assert_eq!(outputs[0].1, outputs[1].1, "fixed-point CSVs differ");
    println!(
        "acceptance 9a (simulate determinism): PASS — {} bytes identical across runs",
        outputs[0].0.len() + outputs[0].1.len()
    );
}

/// Criterion 9b: a model saved by `fit` and loaded back reproduces every
/// prediction bit for bit, through the binary and in process.
#[test]
fn acceptance_09b_model_file_round_trip_is_bit_exact() {
    let dir = TempDir::new("roundtrip");
    // small binomial dataset with trial counts, exercising every section
    let data = dir.path("data.csv");
    let mut csv = String::from("a,b,n,y\n");
    for i in 0..80 {
        let a = (i % 9) as f64 / 4.0 - 1.0;
        let b = ((i * 5) % 7) as f64 / 3.0 - 1.0;
        let n = 1 + (i % 4);
        let y = ((a + 1.0) / 2.5 * n as f64).round().clamp(0.0, n as f64);
        csv.push_str(&format!("{a},{b},{n},{y}\n"));
    }
    std::fs::write(&data, csv).unwrap();
    let schema = dir.path("data.schema");
    std::fs::write(&schema, "response = y\ntrials = n\nfeatures = a, b\n").unwrap();

    let model_path = dir.path("model.gbf");
    let status = bin()
        .args([
            "fit",
            "--data",
            data.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--family",
            "binomial",
            "--trees",
            "30",
            "--min-node-size",
            "3",
            "--variance-mode",
            "raw",
            "--seed",
            "5",
            "--out",
            model_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let loaded = model_file::load(&model_path).unwrap();
    // a second encode/decode cycle is the pure round trip
    let bytes = model_file::encode(&loaded.model, loaded.fingerprint);
    let again = model_file::decode(&bytes).unwrap();
    assert_eq!(loaded.model, again.model);
    assert_eq!(loaded.fingerprint, again.fingerprint);

    let mut checked = 0usize;
    for i in 0..9 {
        let probe = [i as f64 / 4.0 - 1.0, ((i * 3) % 7) as f64 / 3.0 - 1.0];
        let a = loaded.model.predict(&probe);
        let b = again.model.predict(&probe);
        assert_eq!(a.link_estimate.to_bits(), b.link_estimate.to_bits());
        assert_eq!(a.link_variance.to_bits(), b.link_variance.to_bits());
        assert_eq!(a.response_estimate.to_bits(), b.response_estimate.to_bits());
        assert_eq!(a.response_variance.to_bits(), b.response_variance.to_bits());
        checked += 1;
    }
    // the binary predicts identically from the two files
    let points = dir.path("points.csv");
    std::fs::write(&points, "0.5,0.5\n-1.0,0.0\n0.0,-0.9\n").unwrap();
    let reload_path = dir.path("model2.gbf");
    model_file::save(&again.model, again.fingerprint, &reload_path).unwrap();
    let out1 = bin()
        .args([
            "predict",
            "--model",
            model_path.to_str().unwrap(),
            "--points",
            points.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let out2 = bin()
        .args([
            "predict",
            "--model",
            reload_path.to_str().unwrap(),
            "--points",
            points.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out1.status.success() && out2.status.success());
    assert_eq!(out1.stdout, out2.stdout);
    println!(
        "acceptance 9b (model round trip): PASS — {checked} predictions bit-identical, \
         CLI outputs byte-identical"
    );
}

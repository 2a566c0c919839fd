//! Direction checks on a real-data subset (the full-size runs live in the
//! acceptance suite).

use gbf::eval::{self, DataSchema, Dataset};
use gbf::family::Family;
use gbf::forest::ForestParams;
use gbf::model::GbfParams;
use gbf::tree::TreeParams;
use std::path::PathBuf;

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn spam_subset(n: usize) -> Dataset {
    let schema = DataSchema::from_kv("response = spam\nfeatures = *\n").unwrap();
    let full = eval::load_csv(&data_path("spambase.csv"), &schema).unwrap();
    // the file is class-sorted, so stride through it to keep both classes
    let stride = full.x.n_rows() / n;
    let rows: Vec<usize> = (0..n).map(|i| i * stride).collect();
    Dataset {
        x: full.x.select_rows(&rows),
        y: rows.iter().map(|&i| full.y[i]).collect(),
        trials: None,
        name: format!("spambase[{n} strided]"),
        feature_names: full.feature_names.clone(),
    }
}

#[test]
fn boost_stage_improves_log_likelihood_on_spam_subset() {
    let d = spam_subset(500);
    let params = GbfParams::new(
        Family::Binomial,
        ForestParams {
            n_trees: 100,
            sample_fraction: 0.4,
            tree: TreeParams {
                mtry: (d.x.n_cols() / 3).max(1),
                min_node_size: 5,
                max_depth: None,
                seed: 0,
            },
            seed: 42,
        },
    );
    let report = eval::cv_evaluate(&d, Family::Binomial, &params, 10, 42).unwrap();
    assert!(
        report.rows[2].ll >= report.rows[1].ll,
        "boost stage did not improve log-likelihood: {} -> {}",
        report.rows[1].ll,
        report.rows[2].ll
    );
    // every point is predicted exactly once per stage
    assert_eq!(report.n, 500);
}

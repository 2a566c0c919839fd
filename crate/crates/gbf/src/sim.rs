//! Simulation harness: data generation, experiment grid execution,
//! replicate aggregation and CSV emission.
//!
//! A run walks a grid of (scale, trials-cap, subsample-fraction) settings.
//! For every grid cell a test set is drawn once -- `n_test_random` uniform
//! points plus five fixed points -- and held fixed across replicates. Each
//! replicate draws fresh training data (and fresh responses at the test
//! points, for the log-likelihood metric), fits a two-stage model and
//! evaluates every stage on the shared test set.
//!
//! Seeds derive as `master -> cell -> replicate -> purpose`, so records are
//! reproducible regardless of how work is scheduled, and re-running with the
//! same master seed emits byte-identical CSV.

use crate::family::{Family, Observation};
use crate::forest::ForestParams;
use crate::kv::parse_kv;
use crate::matrix::Matrix;
use crate::metrics::{self, StageEvaluation};
use crate::model::{self, GbfParams};
use crate::rng::{derive_seed, seeded_rng};
use crate::stats::normal_quantile;
use crate::tree::TreeParams;
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation families are binomial and poisson")]
    InvalidFamily,
}

/// Seed-derivation purposes (`derive_seed(parent, PURPOSE)`).
const PURPOSE_TEST_X: u64 = 1;
const PURPOSE_REPLICATE: u64 = 2;
const PURPOSE_TRAIN_X: u64 = 3;
const PURPOSE_TRAIN_Y: u64 = 4;
const PURPOSE_TEST_Y: u64 = 5;
const PURPOSE_FOREST: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    /// f(x) = x₁ + ... + x₅.
    Linear,
    /// f(x) = ‖x‖₂ - √m / 2.
    Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub family: Family,
    pub signal: SignalKind,
    pub n_train: usize,
    pub n_test_random: usize,
    pub replicates: usize,
    pub scales: Vec<f64>,
    /// Binomial only: trial counts are uniform on {1..M} for each M here.
    pub trials_max: Vec<u64>,
    pub sample_fractions: Vec<f64>,
    /// Trees per forest stage.
    pub n_trees: usize,
    /// Covariate dimension m.
    pub dim: usize,
    /// Master seed; everything else derives from it.
    pub seed: u64,
    pub min_node_size: usize,
    /// Features tried per split; defaults to max(1, dim/3).
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
}

impl SimConfig {
    /// Desk-scale defaults: a single representative grid cell that runs in
    /// minutes on a laptop.
    pub fn desk(family: Family) -> Self {
        Self {
            family,
            signal: SignalKind::Linear,
            n_train: 500,
            n_test_random: 100,
            replicates: 20,
            scales: vec![4.0],
            trials_max: vec![4],
            sample_fractions: vec![0.4],
            n_trees: 300,
            dim: 15,
            seed: 0,
            min_node_size: 5,
            mtry: None,
            max_depth: None,
        }
    }

    /// The full evaluation protocol: 200 replicates of n = 1000 with
    /// B = 1000 trees over every scale, trial cap and subsample fraction.
    pub fn full_protocol(family: Family) -> Self {
        Self {
            n_train: 1000,
            replicates: 200,
            scales: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            trials_max: vec![1, 2, 4, 8, 16],
            sample_fractions: vec![0.2, 0.4, 0.6, 0.8],
            n_trees: 1000,
            ..Self::desk(family)
        }
    }

    /// Override fields from `key = value` text. Unknown keys are an error.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), SimError> {
        let pairs = parse_kv(text).map_err(SimError::Config)?;
        let bad = |key: &str, v: &str| SimError::Config(format!("bad value for {key}: {v}"));
        for (key, value) in pairs {
            match key.as_str() {
                "family" => {
                    self.family = match value.as_str() {
                        "binomial" => Family::Binomial,
                        "poisson" => Family::Poisson,
                        _ => return Err(SimError::InvalidFamily),
                    }
                }
                "signal" => {
                    self.signal = match value.as_str() {
                        "linear" => SignalKind::Linear,
                        "norm" => SignalKind::Norm,
                        _ => return Err(bad("signal", &value)),
                    }
                }
                "n_train" => self.n_train = value.parse().map_err(|_| bad(&key, &value))?,
                "n_test_random" => {
                    self.n_test_random = value.parse().map_err(|_| bad(&key, &value))?
                }
                "replicates" => self.replicates = value.parse().map_err(|_| bad(&key, &value))?,
                "scales" => self.scales = parse_list(&value).map_err(|_| bad(&key, &value))?,
                "trials_max" => {
                    self.trials_max = parse_list(&value).map_err(|_| bad(&key, &value))?
                }
                "sample_fractions" => {
                    self.sample_fractions = parse_list(&value).map_err(|_| bad(&key, &value))?
                }
                "trees" => self.n_trees = value.parse().map_err(|_| bad(&key, &value))?,
                "dim" => self.dim = value.parse().map_err(|_| bad(&key, &value))?,
                "seed" => self.seed = value.parse().map_err(|_| bad(&key, &value))?,
                "min_node_size" => {
                    self.min_node_size = value.parse().map_err(|_| bad(&key, &value))?
                }
                "mtry" => self.mtry = Some(value.parse().map_err(|_| bad(&key, &value))?),
                "max_depth" => self.max_depth = Some(value.parse().map_err(|_| bad(&key, &value))?),
                _ => return Err(SimError::Config(format!("unknown key: {key}"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: &str| Err(SimError::Config(msg.to_string()));
        if self.family == Family::Gaussian {
            return Err(SimError::InvalidFamily);
        }
        if self.n_train < 2 * self.min_node_size {
            return fail("n_train too small for min_node_size");
        }
        if self.n_test_random < 5 {
            return fail("n_test_random must be at least 5");
        }
        if self.replicates == 0 {
            return fail("replicates must be positive");
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return fail("scales must be positive");
        }
        if self.sample_fractions.is_empty()
            || self
                .sample_fractions
                .iter()
                .any(|&f| !(f > 0.0 && f <= 1.0))
        {
            return fail("sample_fractions must lie in (0, 1]");
        }
        if self.family == Family::Binomial
            && (self.trials_max.is_empty() || self.trials_max.contains(&0))
        {
            return fail("trials_max must be positive");
        }
        if self.n_trees < 2 {
            return fail("trees must be at least 2");
        }
        if self.dim == 0 || (self.signal == SignalKind::Linear && self.dim < 5) {
            return fail("dim must be at least 5 for the linear signal");
        }
        Ok(())
    }

    /// Deterministic enumeration of the grid: scale-major, then trial cap,
    /// then subsample fraction. Poisson ignores the trial caps.
    pub fn cells(&self) -> Vec<GridCell> {
        let trial_axis: Vec<u64> = match self.family {
            Family::Binomial => self.trials_max.clone(),
            _ => vec![1],
        };
        let mut cells = Vec::new();
        for &scale in &self.scales {
            for &trials_max in &trial_axis {
                for &fraction in &self.sample_fractions {
                    cells.push(GridCell {
                        index: cells.len(),
                        scale,
                        trials_max,
                        fraction,
                    });
                }
            }
        }
        cells
    }

    fn signal_at(&self, x: &[f64]) -> f64 {
        match self.signal {
            SignalKind::Linear => signal_linear(x),
            SignalKind::Norm => signal_norm(x, self.dim),
        }
    }

    /// True link-space signal at a point for a given scale.
    pub fn truth_link(&self, x: &[f64], scale: f64) -> f64 {
        match self.family {
            Family::Binomial => scale * self.signal_at(x),
            _ => self.signal_at(x) + scale.ln(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, ()> {
    let items: Result<Vec<T>, _> = value
        .split(',')
        .map(|s| s.trim().parse::<T>())
        .collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub scale: f64,
    /// 1 for Poisson (unused).
    pub trials_max: u64,
    pub fraction: f64,
}

/// Per-fixed-point, per-stage evaluation inside one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointEval {
    /// 1-based fixed-point label (p1..p5).
    pub point: usize,
    pub stage: usize,
    pub truth_link: f64,
    pub est_link: f64,
    pub var_link: f64,
    pub est_response: f64,
    pub var_response: f64,
}

/// One (grid cell, replicate) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub cell: GridCell,
    pub replicate: usize,
    /// Stage 0, 1, 2 evaluations over the shared test set; empty on error.
    pub stages: Vec<StageEvaluation>,
    pub fixed_points: Vec<FixedPointEval>,
    pub error: Option<String>,
}

/// n x m matrix of independent Uniform(-1, 1) draws, filled row by row.
pub fn gen_covariates(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_flat(n, m, data).expect("shape is consistent by construction")
}

/// f(x) = sum of the first five coordinates.
pub fn signal_linear(x: &[f64]) -> f64 {
    x[..5].iter().sum()
}

/// f(x) = ‖x‖₂ - √m / 2.
pub fn signal_norm(x: &[f64], m: usize) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    norm - (m as f64).sqrt() / 2.0
}

/// The five fixed evaluation points:
/// p1 = 0, p2 = (1/3, 0, ...), p3 = 1/(3√m)·1, p4 = 2·p3, p5 = 3·p3.
pub fn fixed_points(m: usize) -> Vec<Vec<f64>> {
    let mut p2 = vec![0.0; m];
    p2[0] = 1.0 / 3.0;
    let unit = 1.0 / (3.0 * (m as f64).sqrt());
    vec![
        vec![0.0; m],
        p2,
        vec![unit; m],
        vec![2.0 * unit; m],
        vec![3.0 * unit; m],
    ]
}

/// Draw responses at the given signal values.
///
/// Binomial: trial counts nᵢ uniform on {1..M}, then Yᵢ ~ Binomial(nᵢ, pᵢ)
/// with pᵢ = logistic(s·f(Xᵢ)). Poisson: Yᵢ ~ Poisson(λᵢ) with
/// λᵢ = exp(f(Xᵢ) + ln s).
pub fn gen_response(
    family: Family,
    f_values: &[f64],
    scale: f64,
    trials_max: u64,
    seed: u64,
) -> Result<Vec<Observation>, SimError> {
    let mut rng = seeded_rng(seed);
    match family {
        Family::Binomial => Ok(f_values
            .iter()
            .map(|&f| {
                let n = rng.random_range(1..=trials_max);
                let p = Family::Binomial.inv_link(scale * f);
                let y = rand_distr::Binomial::new(n, p)
                    .expect("p lies in [0,1]")
                    .sample(&mut rng);
                Observation::with_trials(y as f64, n)
            })
            .collect()),
        Family::Poisson => Ok(f_values
            .iter()
            .map(|&f| {
                let lambda = (f + scale.ln()).exp();
                let y: f64 = rand_distr::Poisson::new(lambda)
                    .expect("lambda is positive and finite")
                    .sample(&mut rng);
                Observation::new(y)
            })
            .collect()),
        Family::Gaussian => Err(SimError::InvalidFamily),
    }
}

/// Run the whole grid. Fit failures become flagged records, not crashes.
pub fn run_grid(config: &SimConfig) -> Result<Vec<ExperimentRecord>, SimError> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(GridCell, usize)> = cells
        .iter()
        .flat_map(|&cell| (0..config.replicates).map(move |rep| (cell, rep)))
        .collect();
    let mut records: Vec<ExperimentRecord> = jobs
        .par_iter()
        .map(|&(cell, rep)| run_replicate(config, cell, rep))
        .collect();
    records.sort_by_key(|r| (r.cell.index, r.replicate));
    Ok(records)
}

fn run_replicate(config: &SimConfig, cell: GridCell, replicate: usize) -> ExperimentRecord {
    let cell_seed = derive_seed(config.seed, cell.index as u64);
    let rep_seed = derive_seed(derive_seed(cell_seed, PURPOSE_REPLICATE), replicate as u64);

    // test points are fixed per cell: random block plus p1..p5
    let test_random = gen_covariates(
        config.n_test_random,
        config.dim,
        derive_seed(cell_seed, PURPOSE_TEST_X),
    );
    let mut test_points: Vec<Vec<f64>> = test_random.rows_iter().map(<[f64]>::to_vec).collect();
    test_points.extend(fixed_points(config.dim));
    let truth_link: Vec<f64> = test_points
        .iter()
        .map(|x| config.truth_link(x, cell.scale))
        .collect();
    let truth_response: Vec<f64> = truth_link.iter().map(|&t| config.family.inv_link(t)).collect();

    let fail = |msg: String| ExperimentRecord {
        cell,
        replicate,
        stages: Vec::new(),
        fixed_points: Vec::new(),
        error: Some(msg),
    };

    let train_x = gen_covariates(
        config.n_train,
        config.dim,
        derive_seed(rep_seed, PURPOSE_TRAIN_X),
    );
    // gen_response applies the scale itself, so hand it the raw signal
    let f_train: Vec<f64> = train_x.rows_iter().map(|x| config.signal_at(x)).collect();
    let train_obs = match gen_response(
        config.family,
        &f_train,
        cell.scale,
        cell.trials_max,
        derive_seed(rep_seed, PURPOSE_TRAIN_Y),
    ) {
        Ok(obs) => obs,
        Err(e) => return fail(e.to_string()),
    };
    let f_test: Vec<f64> = test_points.iter().map(|x| config.signal_at(x)).collect();
    let test_obs = match gen_response(
        config.family,
        &f_test,
        cell.scale,
        cell.trials_max,
        derive_seed(rep_seed, PURPOSE_TEST_Y),
    ) {
        Ok(obs) => obs,
        Err(e) => return fail(e.to_string()),
    };

    let params = GbfParams::new(
        config.family,
        ForestParams {
            n_trees: config.n_trees,
            sample_fraction: cell.fraction,
            tree: TreeParams {
                mtry: config.mtry.unwrap_or((config.dim / 3).max(1)),
                min_node_size: config.min_node_size,
                max_depth: config.max_depth,
                seed: 0,
            },
            seed: derive_seed(rep_seed, PURPOSE_FOREST),
        },
    );
    let model = match model::fit(&train_x, &train_obs, &params) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string()),
    };

    // stagewise predictions for every test point
    let n_stages = params.stages + 1;
    let mut link = vec![Vec::with_capacity(test_points.len()); n_stages];
    let mut var = vec![Vec::with_capacity(test_points.len()); n_stages];
    let mut resp = vec![Vec::with_capacity(test_points.len()); n_stages];
    let mut resp_var = vec![Vec::with_capacity(test_points.len()); n_stages];
    for x in &test_points {
        for (j, pred) in model.predict_stagewise(x).into_iter().enumerate() {
            link[j].push(pred.link_estimate);
            var[j].push(pred.link_variance);
            resp[j].push(pred.response_estimate);
            resp_var[j].push(pred.response_variance);
        }
    }

    let z95 = normal_quantile(0.975);
    let stages = (0..n_stages)
        .map(|j| {
            let intervals: Vec<(f64, f64)> = link[j]
                .iter()
                .zip(&var[j])
                .map(|(&e, &v)| {
                    let half = z95 * v.sqrt();
                    (e - half, e + half)
                })
                .collect();
            StageEvaluation {
                stage: j,
                mean_ll: metrics::mean_log_lik(config.family, &link[j], &test_obs)
                    .unwrap_or(f64::NAN),
                mse_link: metrics::mse(&link[j], &truth_link),
                mse_response: metrics::mse(&resp[j], &truth_response),
                avg_var: var[j].iter().sum::<f64>() / var[j].len() as f64,
                coverage: metrics::coverage(&intervals, &truth_link),
                abs_bias: link[j]
                    .iter()
                    .zip(&truth_link)
                    .map(|(&e, &t)| (e - t).abs())
                    .sum::<f64>()
                    / link[j].len() as f64,
                ks: metrics::ks_normality(&link[j], &truth_link, &var[j])
                    .map(|o| o.statistic)
                    .unwrap_or(f64::NAN),
            }
        })
        .collect();

    let first_fixed = test_points.len() - 5;
    let mut fixed = Vec::with_capacity(5 * n_stages);
    for q in 0..5 {
        let idx = first_fixed + q;
        for j in 0..n_stages {
            fixed.push(FixedPointEval {
                point: q + 1,
                stage: j,
                truth_link: truth_link[idx],
                est_link: link[j][idx],
                var_link: var[j][idx],
                est_response: resp[j][idx],
                var_response: resp_var[j][idx],
            });
        }
    }

    ExperimentRecord {
        cell,
        replicate,
        stages,
        fixed_points: fixed,
        error: None,
    }
}

/// Cross-replicate summary for one (cell, fixed point, stage).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSummary {
    pub cell: GridCell,
    pub point: usize,
    pub stage: usize,
    pub n_replicates: usize,
    pub truth_link: f64,
    pub mean_abs_bias_link: f64,
    pub mean_abs_bias_response: f64,
    /// mean(variance estimates) / var(estimates); NaN when undefined.
    pub var_consistency: f64,
    /// KS normality statistic of the standardized estimates; NaN when
    /// undefined.
    pub ks: f64,
    pub ks_dropped: usize,
    /// 95% link-space CI coverage of the true signal.
    pub coverage: f64,
}

/// Aggregate the fixed-point records across replicates.
pub fn aggregate_fixed_points(
    records: &[ExperimentRecord],
    family: Family,
) -> Vec<FixedPointSummary> {
    let mut cells: Vec<GridCell> = records.iter().map(|r| r.cell).collect();
    cells.sort_by_key(|c| c.index);
    cells.dedup_by_key(|c| c.index);

    let z95 = normal_quantile(0.975);
    let mut out = Vec::new();
    for cell in cells {
        for point in 1..=5 {
            for stage in 0..3 {
                let evals: Vec<&FixedPointEval> = records
                    .iter()
                    .filter(|r| r.cell.index == cell.index && r.error.is_none())
                    .flat_map(|r| &r.fixed_points)
                    .filter(|f| f.point == point && f.stage == stage)
                    .collect();
                if evals.is_empty() {
                    continue;
                }
                let n = evals.len();
                let truth = evals[0].truth_link;
                let truth_resp = family.inv_link(truth);
                let ests: Vec<f64> = evals.iter().map(|f| f.est_link).collect();
                let vars: Vec<f64> = evals.iter().map(|f| f.var_link).collect();
                let truths = vec![truth; n];
                let intervals: Vec<(f64, f64)> = ests
                    .iter()
                    .zip(&vars)
                    .map(|(&e, &v)| {
                        let half = z95 * v.sqrt();
                        (e - half, e + half)
                    })
                    .collect();
                let ks = metrics::ks_normality(&ests, &truths, &vars);
                out.push(FixedPointSummary {
                    cell,
                    point,
                    stage,
                    n_replicates: n,
                    truth_link: truth,
                    mean_abs_bias_link: ests.iter().map(|e| (e - truth).abs()).sum::<f64>()
                        / n as f64,
                    mean_abs_bias_response: evals
                        .iter()
                        .map(|f| (f.est_response - truth_resp).abs())
                        .sum::<f64>()
                        / n as f64,
                    var_consistency: metrics::var_consistency_ratio(&vars, &ests)
                        .unwrap_or(f64::NAN),
                    ks: ks.as_ref().map(|o| o.statistic).unwrap_or(f64::NAN),
                    ks_dropped: ks.map(|o| o.dropped).unwrap_or(0),
                    coverage: metrics::coverage(&intervals, &truths),
                });
            }
        }
    }
    out
}

/// 17 significant digits; round-trips exactly.
fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn family_label(family: Family) -> &'static str {
    match family {
        Family::Gaussian => "gaussian",
        Family::Binomial => "binomial",
        Family::Poisson => "poisson",
    }
}

fn signal_label(signal: SignalKind) -> &'static str {
    match signal {
        SignalKind::Linear => "linear",
        SignalKind::Norm => "norm",
    }
}

fn trials_field(config: &SimConfig, cell: &GridCell) -> String {
    match config.family {
        Family::Binomial => cell.trials_max.to_string(),
        _ => String::new(),
    }
}

/// One row per (cell, replicate): stage metrics over the shared test set
/// plus per-fixed-point link-space estimates. Failed fits keep their grid
/// coordinates, carry the error in `status` and leave metrics empty.
pub fn write_records_csv(
    records: &[ExperimentRecord],
    config: &SimConfig,
    w: &mut impl Write,
) -> io::Result<()> {
    let mut header = vec![
        "family".to_string(),
        "signal".to_string(),
        "scale".to_string(),
        "trials_max".to_string(),
        "fraction".to_string(),
        "replicate".to_string(),
        "status".to_string(),
    ];
    for j in 0..3 {
        for metric in [
            "mean_ll", "mse_link", "mse_response", "avg_var", "coverage", "abs_bias", "ks",
        ] {
            header.push(format!("stage{j}_{metric}"));
        }
    }
    for q in 1..=5 {
        header.push(format!("fp{q}_truth_link"));
        for j in 0..3 {
            header.push(format!("fp{q}_stage{j}_est_link"));
            header.push(format!("fp{q}_stage{j}_var_link"));
        }
    }
    writeln!(w, "{}", header.join(","))?;

    for rec in records {
        let mut row = vec![
            family_label(config.family).to_string(),
            signal_label(config.signal).to_string(),
            fmt_f(rec.cell.scale),
            trials_field(config, &rec.cell),
            fmt_f(rec.cell.fraction),
            rec.replicate.to_string(),
            match &rec.error {
                None => "ok".to_string(),
                Some(e) => format!("\"{}\"", e.replace('"', "'")),
            },
        ];
        if rec.error.is_none() {
            for s in &rec.stages {
                row.extend([
                    fmt_f(s.mean_ll),
                    fmt_f(s.mse_link),
                    fmt_f(s.mse_response),
                    fmt_f(s.avg_var),
                    fmt_f(s.coverage),
                    fmt_f(s.abs_bias),
                    fmt_f(s.ks),
                ]);
            }
            for q in 1..=5 {
                let of_point: Vec<&FixedPointEval> = rec
                    .fixed_points
                    .iter()
                    .filter(|f| f.point == q)
                    .collect();
                row.push(fmt_f(of_point[0].truth_link));
                for f in of_point {
                    row.push(fmt_f(f.est_link));
                    row.push(fmt_f(f.var_link));
                }
            }
        } else {
            row.extend(std::iter::repeat_n(String::new(), 21 + 5 * 7));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// One row per (cell, fixed point, stage) with the cross-replicate
/// summaries behind the fixed-point figures.
pub fn write_fixed_point_csv(
    summaries: &[FixedPointSummary],
    config: &SimConfig,
    w: &mut impl Write,
) -> io::Result<()> {
    writeln!(
        w,
        "family,signal,scale,trials_max,fraction,point,stage,n_replicates,truth_link,\
         mean_abs_bias_link,mean_abs_bias_response,var_consistency,ks,ks_dropped,coverage"
    )?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            family_label(config.family),
            signal_label(config.signal),
            fmt_f(s.cell.scale),
            trials_field(config, &s.cell),
            fmt_f(s.cell.fraction),
            s.point,
            s.stage,
            s.n_replicates,
            fmt_f(s.truth_link),
            fmt_f(s.mean_abs_bias_link),
            fmt_f(s.mean_abs_bias_response),
            fmt_f(s.var_consistency),
            fmt_f(s.ks),
            s.ks_dropped,
            fmt_f(s.coverage),
        )?;
    }
    Ok(())
}

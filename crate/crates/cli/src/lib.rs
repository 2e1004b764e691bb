//! Reproducible runs on the circle task: train, certify, sweep and compare.
//!
//! Every command is a plain function returning its artifacts, so the binary in
//! `main.rs` only parses flags and maps [`Failure`] to an exit code.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use deepspline::data::{error_rate, gen_circle, Dataset, Split};
use deepspline::lipschitz::{
    bound_euclidean, bound_general, empirical_lipschitz_p, thm4_balance, unit_box, Balance,
    BoundReport, Exponent,
};
use deepspline::network::{DataTerm, OuterNorm};
use deepspline::optim::{
    build_network, regularization_for, train, HiddenKind, Lambda, OptimizerKind, TrainConfig,
    TrainHistory,
};
use deepspline::rng::{stream, STREAM_INIT, STREAM_PROBE, STREAM_TEST_DATA, STREAM_TRAIN_DATA};
use deepspline::Network;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
/// A sampled difference quotient exceeded a certified bound.
pub const EXIT_DOMINANCE: i32 = 4;

/// Relative slack for comparing an empirical quotient with a bound computed
/// through a different chain of floating-point operations.
const DOMINANCE_SLACK: f64 = 1e-9;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<deepspline::Error> for Failure {
    fn from(e: deepspline::Error) -> Self {
        use deepspline::Error as E;
        let code = match &e {
            E::NonFinite { .. } => EXIT_NUMERICAL,
            E::Io(_) => EXIT_FAILURE,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Everything that defines a run. Read from a single JSON document; missing
/// fields take the defaults below and unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub descriptor: Vec<usize>,
    pub hidden: HiddenKind,
    pub train_size: usize,
    pub test_size: usize,
    /// Pairs sampled for the empirical Lipschitz estimate.
    pub probe_pairs: usize,
    /// Topology exponent of the reported general bound.
    pub p: Exponent,
    /// Certify the network including its output sigmoid (otherwise the logit).
    pub include_sigmoid: bool,

    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mu: f64,
    pub lambda: Lambda,
    pub knots: usize,
    pub knot_span: (f64, f64),
    pub outer_norm: OuterNorm,
    pub seed: u64,
    pub sparsify_budget: f64,
    pub data_term: DataTerm,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            descriptor: vec![2, 2, 1],
            hidden: HiddenKind::Spline,
            train_size: 1000,
            test_size: 10_000,
            probe_pairs: 10_000,
            p: Exponent::TWO,
            include_sigmoid: true,
            optimizer: t.optimizer,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            mu: t.mu,
            lambda: t.lambda,
            knots: t.knots,
            knot_span: t.knot_span,
            outer_norm: t.outer_norm,
            seed: t.seed,
            sparsify_budget: t.sparsify_budget,
            data_term: t.data_term,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Failure::usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            mu: self.mu,
            lambda: self.lambda,
            knots: self.knots,
            knot_span: self.knot_span,
            outer_norm: self.outer_norm,
            seed: self.seed,
            sparsify_budget: self.sparsify_budget,
            data_term: self.data_term,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.descriptor.first() != Some(&2) || self.descriptor.last() != Some(&1) {
            return Err(Failure::usage(format!(
                "the circle task needs a descriptor (2, …, 1), got {:?}",
                self.descriptor
            )));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Failure::usage("train_size and test_size must be positive"));
        }
        if self.probe_pairs == 0 {
            return Err(Failure::usage("probe_pairs must be positive"));
        }
        self.train_config().validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub lambda: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub param_count: usize,
    pub nnz_coeffs: usize,
    pub sparsify_removed: usize,
    pub loss_before_sparsify: f64,
    pub loss_after_sparsify: f64,
    pub bound_general: BoundReport,
    pub bound_euclidean: BoundReport,
    /// Sampled lower bound in the Euclidean norm.
    pub empirical_lipschitz: f64,
    pub balance: Vec<Balance>,
    pub wall_clock_s: f64,
}

pub struct RunOutput {
    pub report: RunReport,
    pub network: Network,
    /// Network at the end of training, before sparsification.
    pub pre_sparsify: Network,
    pub history: TrainHistory,
    pub train_set: Dataset,
    pub test_set: Dataset,
}

/// Training and test sets for a seed.
pub fn circle_data(cfg: &RunConfig) -> (Dataset, Dataset) {
    let train_set = gen_circle(cfg.train_size, &mut stream(cfg.seed, STREAM_TRAIN_DATA));
    let test_set =
        gen_circle(cfg.test_size, &mut stream(cfg.seed, STREAM_TEST_DATA)).with_split(Split::Test);
    (train_set, test_set)
}

/// The network whose Lipschitz constant is certified: with or without the
/// output sigmoid.
pub fn certified_view(net: &Network, include_sigmoid: bool) -> CliResult<Network> {
    if include_sigmoid {
        Ok(net.clone())
    } else {
        Ok(net.without_output_sigmoid()?)
    }
}

/// Generates data, trains, sparsifies and certifies one configuration.
pub fn run(cfg: &RunConfig) -> CliResult<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let tcfg = cfg.train_config();
    let (train_set, test_set) = circle_data(cfg);
    let init = build_network(
        &cfg.descriptor,
        cfg.hidden,
        &tcfg.knot_grid()?,
        &mut stream(cfg.seed, STREAM_INIT),
    )?;
    let reg = regularization_for(&init, &tcfg)?;
    let out = train(&init, &train_set, &tcfg)?;
    let net = out.network;

    let view = certified_view(&net, cfg.include_sigmoid)?;
    let empirical = empirical_lipschitz_p(
        &view,
        cfg.probe_pairs,
        &mut stream(cfg.seed, STREAM_PROBE),
        &unit_box(view.input_dim()),
        Exponent::TWO,
    )?;
    let balance = if net.layers().len() >= 2 {
        thm4_balance(&net, &reg.mu, &reg.lambda)?
    } else {
        Vec::new()
    };
    let report = RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        lambda: out.lambda,
        train_error: error_rate(&net, &train_set)?,
        test_error: error_rate(&net, &test_set)?,
        param_count: net.param_count(),
        nnz_coeffs: net.nonzero_coeffs(),
        sparsify_removed: out.sparsify_removed,
        loss_before_sparsify: out.loss_before_sparsify,
        loss_after_sparsify: out.loss_after_sparsify,
        bound_general: bound_general(&view, cfg.p),
        bound_euclidean: bound_euclidean(&view, cfg.outer_norm),
        empirical_lipschitz: empirical,
        balance,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        report,
        network: net,
        pre_sparsify: out.pre_sparsify,
        history: out.history,
        train_set,
        test_set,
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write_file(path: PathBuf, contents: &str) -> CliResult<()> {
    std::fs::write(&path, contents).map_err(|e| Failure::io(&path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    s.push('\n');
    s
}

/// Trains per the config and writes `model.json`, `history.csv` and
/// `report.json` into `out_dir`.
pub fn cmd_train(config: &Path, out_dir: &Path, seed: Option<u64>) -> CliResult<RunReport> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = run(&cfg)?;
    create_dir(out_dir)?;
    out.network
        .save(out_dir.join("model.json"))
        .map_err(Failure::from)?;
    write_file(out_dir.join("history.csv"), &out.history.to_csv())?;
    write_file(out_dir.join("report.json"), &to_json(&out.report))?;
    Ok(out.report)
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    /// One general-bound report per exponent.
    pub ps: Vec<Exponent>,
    pub outer: OuterNorm,
    pub include_sigmoid: bool,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            ps: vec![Exponent::TWO],
            outer: OuterNorm::L1,
            include_sigmoid: true,
            pairs: 10_000,
            seed: 0,
        }
    }
}

/// Certified bounds for a model file, each paired with a sampled lower bound
/// in the matching norm.
pub fn certify(net: &Network, opts: &CertifyOptions) -> CliResult<Vec<BoundReport>> {
    if opts.pairs == 0 {
        return Err(Failure::usage("need at least one sample pair"));
    }
    let view = certified_view(net, opts.include_sigmoid)?;
    let bbox = unit_box(view.input_dim());
    let probe = |p: Exponent| {
        empirical_lipschitz_p(&view, opts.pairs, &mut stream(opts.seed, STREAM_PROBE), &bbox, p)
    };
    let mut reports = Vec::new();
    for &p in &opts.ps {
        let mut r = bound_general(&view, p);
        r.empirical_lower = Some(probe(p)?);
        reports.push(r);
    }
    let mut r = bound_euclidean(&view, opts.outer);
    r.empirical_lower = Some(probe(Exponent::TWO)?);
    reports.push(r);
    Ok(reports)
}

/// Reports whose empirical quotient exceeds the certified bound.
pub fn dominance_violations(reports: &[BoundReport]) -> Vec<&BoundReport> {
    reports
        .iter()
        .filter(|r| {
            r.empirical_lower
                .is_some_and(|e| e > r.bound * (1.0 + DOMINANCE_SLACK))
        })
        .collect()
}

/// Loads a model, prints its bound reports as JSON, writes `certify.json` when
/// `out_dir` is given, and fails if any sampled quotient beats a bound.
pub fn cmd_certify(
    model: &Path,
    opts: &CertifyOptions,
    out_dir: Option<&Path>,
) -> CliResult<Vec<BoundReport>> {
    let net = Network::load(model)?;
    let reports = certify(&net, opts)?;
    let json = to_json(&reports);
    print!("{json}");
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(dir.join("certify.json"), &json)?;
    }
    let bad = dominance_violations(&reports);
    if !bad.is_empty() {
        return Err(Failure {
            code: EXIT_DOMINANCE,
            message: format!(
                "empirical Lipschitz estimate exceeds {} certified bound(s): {}",
                bad.len(),
                bad.iter().map(|r| r.csv_row()).collect::<Vec<_>>().join(" | ")
            ),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Knots,
}

impl std::str::FromStr for SweepParam {
    type Err = Failure;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "K" | "k" | "knots" => Ok(SweepParam::Knots),
            other => Err(Failure::usage(format!(
                "unknown sweep parameter {other:?} (expected lambda or K)"
            ))),
        }
    }
}

/// Parses a comma-separated value list; at least two values are required.
pub fn parse_values(text: &str) -> CliResult<Vec<f64>> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::usage(format!("bad sweep value {s:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if values.len() < 2 {
        return Err(Failure::usage(format!(
            "a sweep needs at least two values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub test_error: f64,
    pub bound: f64,
    pub nnz_coeffs: usize,
    pub param_count: usize,
}

pub const SWEEP_HEADER: &str = "value,test_error,bound,nnz_coeffs,param_count";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{:?},{:?},{:?},{},{}\n",
            r.value, r.test_error, r.bound, r.nnz_coeffs, r.param_count
        ));
    }
    out
}

/// One training run per value. Every row uses the base seed, so rows differ only
/// in the swept parameter; rows run in parallel.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[f64]) -> CliResult<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(Failure::usage("a sweep needs at least two values"));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match param {
                SweepParam::Lambda => {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Failure::usage(format!("lambda must be nonnegative, got {v}")));
                    }
                    cfg.lambda = Lambda::Fixed(v);
                }
                SweepParam::Knots => {
                    if !(v >= 1.0 && v.fract() == 0.0) {
                        return Err(Failure::usage(format!("K must be a positive integer, got {v}")));
                    }
                    cfg.knots = v as usize;
                }
            }
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<CliResult<Vec<_>>>()?;
    configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, &value)| {
            let r = run(cfg)?.report;
            Ok(SweepRow {
                value,
                test_error: r.test_error,
                bound: r.bound_euclidean.bound,
                nnz_coeffs: r.nnz_coeffs,
                param_count: r.param_count,
            })
        })
        .collect()
}

pub fn cmd_sweep(
    config: &Path,
    param: SweepParam,
    values: &[f64],
    out_dir: &Path,
    seed: Option<u64>,
) -> CliResult<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(Failure::usage("a sweep needs at least two values"));
    }
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows = sweep(&cfg, param, values)?;
    create_dir(out_dir)?;
    write_file(out_dir.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub model: String,
    pub architecture: Vec<usize>,
    pub outer_norm: OuterNorm,
    pub param_count: usize,
    pub nnz_coeffs: usize,
    pub train_error: f64,
    pub test_error: f64,
    /// Held-out accuracy in percent.
    pub performance: f64,
    pub bound: f64,
}

pub const COMPARE_HEADER: &str =
    "table,model,architecture,outer_norm,param_count,nnz_coeffs,train_error,test_error,performance,bound,source";

/// The configurations behind the comparison: baselines on (2,10,1) and the
/// spline network on (2,2,1), then the spline (2,10,1) network under both outer
/// norms.
pub fn compare_configs(base: &RunConfig) -> Vec<(&'static str, &'static str, RunConfig)> {
    let with = |hidden: HiddenKind, descriptor: &[usize], outer: OuterNorm| RunConfig {
        hidden,
        descriptor: descriptor.to_vec(),
        outer_norm: outer,
        ..base.clone()
    };
    vec![
        ("activations", "relu", with(HiddenKind::Relu, &[2, 10, 1], OuterNorm::L1)),
        ("activations", "leaky_relu", with(HiddenKind::LeakyRelu, &[2, 10, 1], OuterNorm::L1)),
        ("activations", "prelu", with(HiddenKind::Prelu, &[2, 10, 1], OuterNorm::L1)),
        ("activations", "deep_spline", with(HiddenKind::Spline, &[2, 2, 1], OuterNorm::L1)),
        ("outer_norm", "deep_spline_l1", with(HiddenKind::Spline, &[2, 10, 1], OuterNorm::L1)),
        ("outer_norm", "deep_spline_l2", with(HiddenKind::Spline, &[2, 10, 1], OuterNorm::L2)),
    ]
}

pub fn compare(base: &RunConfig) -> CliResult<Vec<(&'static str, CompareRow)>> {
    compare_configs(base)
        .into_par_iter()
        .map(|(table, model, cfg)| {
            let r = run(&cfg)?.report;
            Ok((
                table,
                CompareRow {
                    model: model.to_string(),
                    architecture: cfg.descriptor.clone(),
                    outer_norm: cfg.outer_norm,
                    param_count: r.param_count,
                    nnz_coeffs: r.nnz_coeffs,
                    train_error: r.train_error,
                    test_error: r.test_error,
                    performance: 100.0 - r.test_error,
                    bound: r.bound_euclidean.bound,
                },
            ))
        })
        .collect()
}

pub fn compare_csv(rows: &[(&str, CompareRow)]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for (table, r) in rows {
        let arch = r
            .architecture
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-");
        let outer = match r.outer_norm {
            OuterNorm::L1 => "l1",
            OuterNorm::L2 => "l2",
        };
        out.push_str(&format!(
            "{table},{},({arch}),{outer},{},{},{:?},{:?},{:?},{:?},reimplementation\n",
            r.model, r.param_count, r.nnz_coeffs, r.train_error, r.test_error, r.performance, r.bound
        ));
    }
    out
}

/// Runs the comparison and writes `compare.csv`. Without a config file the
/// default hyper-parameters are used.
pub fn cmd_compare(
    config: Option<&Path>,
    out_dir: &Path,
    seed: Option<u64>,
) -> CliResult<Vec<(&'static str, CompareRow)>> {
    let mut base = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        base.seed = s;
    }
    let rows = compare(&base)?;
    create_dir(out_dir)?;
    write_file(out_dir.join("compare.csv"), &compare_csv(&rows))?;
    Ok(rows)
}

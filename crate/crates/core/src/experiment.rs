//! Seeded replication runs over the NoisyObs scenario, result files and summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{mdp_dp, mean_r, tis};
use crate::error::{Error, Result};
use crate::estimators::{estimate_scores, EstimatorSpec, ScoreKind, Z_975};
use crate::oracle::{certify, CertifyOptions, PolicyCertificates};
use crate::pomdp::{build_noisyobs_with_horizon, exact_policy_value, sample_dataset, EvalPolicy, NoisyObs, Trajectory};
use crate::reduction::PciScheme;
use crate::vmm::VmmConfig;

pub const CSV_HEADER: &str = "method,score_kind,n,seed,estimate,sigma2,ci_lo,ci_hi,max_eta,runtime_ms";

pub const SUMMARY_HEADER: &str =
    "method,score_kind,n,reps,excluded,truth,mean,bias,var,sd,se,mse,mse_ci_lo,mse_ci_hi,coverage,coverage_reps";

/// An estimation method selectable in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dr,
    Is,
    Reg,
    Mdp,
    MeanR,
    Tis,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Dr, Method::Is, Method::Reg, Method::Mdp, Method::MeanR, Method::Tis];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dr => "dr",
            Method::Is => "is",
            Method::Reg => "reg",
            Method::Mdp => "mdp",
            Method::MeanR => "mean_r",
            Method::Tis => "tis",
        }
    }

    /// The bridge-function score behind a method, if any.
    pub fn score_kind(self) -> Option<ScoreKind> {
        match self {
            Method::Dr => Some(ScoreKind::DR),
            Method::Is => Some(ScoreKind::IS),
            Method::Reg => Some(ScoreKind::Reg),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config {
                field: "methods".into(),
                reason: format!("unknown method `{s}` (expected dr, is, reg, mdp, mean_r or tis)"),
            })
    }
}

/// Parses a comma-separated method list such as `dr,mdp`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

/// Hand-tuned `(alpha, lambda)` per NoisyObs setting.
pub fn default_penalties(eps_noise: f64, policy: &str) -> (f64, f64) {
    match (eps_noise > 0.0, policy) {
        (false, "hard") => (1e-2, 1e-2),
        (false, "optim") => (1e-4, 1e-2),
        (true, "hard") => (1e-2, 1e-4),
        _ => (1e-4, 1e-4),
    }
}

fn default_scenario() -> String {
    "noisyobs".into()
}
fn default_policy() -> String {
    "easy".into()
}
fn default_gamma() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    crate::pomdp::NOISYOBS_HORIZON
}
fn default_n_grid() -> Vec<usize> {
    vec![200, 500, 1000, 2000, 5000, 10000]
}
fn default_replications() -> usize {
    20
}
fn default_base_seed() -> u64 {
    20240601
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_k_folds() -> usize {
    5
}
fn default_outer_iterations() -> usize {
    2
}
fn default_scheme() -> String {
    "prev_obs".into()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// One experiment, read from a JSON document. Missing fields take defaults;
/// `alpha` and `lambda` default to the tuned values for the chosen setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default)]
    pub eps_noise: f64,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_outer_iterations")]
    pub outer_iterations: usize,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write wall-clock times into the `runtime_ms` column (breaks byte-identical reruns).
    #[serde(default)]
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario != "noisyobs" {
            return Err(config_err("scenario", format!("unknown scenario `{}`", self.scenario)));
        }
        if !(0.0..=1.0).contains(&self.eps_noise) {
            return Err(config_err("eps_noise", "must lie in [0, 1]"));
        }
        if !["easy", "hard", "optim"].contains(&self.policy.as_str()) {
            return Err(config_err("policy", format!("`{}` is not one of easy, hard, optim", self.policy)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(config_err("gamma", "must lie in (0, 1]"));
        }
        if self.horizon == 0 {
            return Err(config_err("horizon", "must be >= 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|n| *n == 0) {
            return Err(config_err("n_grid", "must be a nonempty list of positive sizes"));
        }
        if self.replications == 0 {
            return Err(config_err("replications", "must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("methods", "must name at least one method"));
        }
        if self.k_folds == 0 {
            return Err(config_err("k_folds", "must be >= 1"));
        }
        let bridge_methods = self.methods.iter().any(|m| m.score_kind().is_some());
        if bridge_methods && self.n_grid.iter().any(|n| *n < self.k_folds) {
            return Err(config_err("n_grid", "every n must be at least k_folds"));
        }
        for (field, v) in [("alpha", self.alpha), ("lambda", self.lambda)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(config_err(field, "must be finite and >= 0"));
                }
            }
        }
        if self.outer_iterations == 0 {
            return Err(config_err("outer_iterations", "must be >= 1"));
        }
        self.pci_scheme()?;
        Ok(())
    }

    pub fn pci_scheme(&self) -> Result<PciScheme> {
        let scheme: PciScheme = self.scheme.parse().map_err(|e: Error| config_err("scheme", e.to_string()))?;
        scheme.validate().map_err(|e| config_err("scheme", e.to_string()))?;
        Ok(scheme)
    }

    /// `(alpha, lambda)` after applying the per-setting defaults.
    pub fn penalties(&self) -> (f64, f64) {
        let (a, l) = default_penalties(self.eps_noise, &self.policy);
        (self.alpha.unwrap_or(a), self.lambda.unwrap_or(l))
    }

    pub fn vmm(&self) -> VmmConfig {
        let (alpha, lambda) = self.penalties();
        VmmConfig {
            outer_iterations: self.outer_iterations,
            ..VmmConfig::with_penalties(alpha, lambda)
        }
    }

    pub fn build_scenario(&self) -> Result<NoisyObs> {
        build_noisyobs_with_horizon(self.eps_noise, self.horizon)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Dataset seed of replication `rep` at sample size `n`.
pub fn replication_seed(base_seed: u64, n: usize, rep: usize) -> u64 {
    base_seed ^ splitmix64(splitmix64(n as u64) ^ rep as u64)
}

/// One row of the raw results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub score_kind: Option<ScoreKind>,
    pub n: usize,
    pub seed: u64,
    pub estimate: f64,
    pub sigma2: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub max_eta: f64,
    pub runtime_ms: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl ResultRow {
    fn failed(method: Method, n: usize, seed: u64, error: String) -> Self {
        Self {
            method,
            score_kind: method.score_kind(),
            n,
            seed,
            estimate: f64::NAN,
            sigma2: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            max_eta: f64::NAN,
            runtime_ms: 0.0,
            error: Some(error),
        }
    }

    fn baseline(method: Method, n: usize, seed: u64, value: f64) -> Self {
        Self {
            estimate: value,
            error: None,
            ..Self::failed(method, n, seed, String::new())
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.score_kind.map_or("none", ScoreKind::as_str),
            self.n,
            self.seed,
            fmt_float(self.estimate),
            fmt_float(self.sigma2),
            fmt_float(self.ci_lo),
            fmt_float(self.ci_hi),
            fmt_float(self.max_eta),
            fmt_float(self.runtime_ms),
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = |what: &str| Error::InvalidArgument(format!("malformed result row ({what}): {line}"));
        if f.len() != 10 {
            return Err(bad("field count"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("number"));
        Ok(Self {
            method: f[0].parse()?,
            score_kind: match f[1] {
                "none" => None,
                k => Some(k.parse()?),
            },
            n: f[2].parse().map_err(|_| bad("n"))?,
            seed: f[3].parse().map_err(|_| bad("seed"))?,
            estimate: num(f[4])?,
            sigma2: num(f[5])?,
            ci_lo: num(f[6])?,
            ci_hi: num(f[7])?,
            max_eta: num(f[8])?,
            runtime_ms: num(f[9])?,
            error: None,
        })
    }
}

/// Seventeen significant digits; `NaN` and `inf` spelled out.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Runs every requested method on one dataset.
pub fn run_methods(
    config: &ExperimentConfig,
    eval: &EvalPolicy,
    data: &[Trajectory],
    n_obs: usize,
    n_actions: usize,
    seed: u64,
) -> Vec<ResultRow> {
    let n = data.len();
    let clock = |start: Instant| {
        if config.record_runtime {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let mut rows = Vec::new();
    let kinds: Vec<ScoreKind> = config.methods.iter().filter_map(|m| m.score_kind()).collect();
    if !kinds.is_empty() {
        let start = Instant::now();
        let spec = config.pci_scheme().map(|scheme| EstimatorSpec {
            scheme,
            vmm: config.vmm(),
            gamma: config.gamma,
            k_folds: config.k_folds,
            seed,
            n_obs,
            n_actions,
        });
        let reports = spec.and_then(|spec| estimate_scores(data, eval, &spec, &kinds));
        let elapsed = clock(start);
        for method in config.methods.iter().filter(|m| m.score_kind().is_some()) {
            let kind = method.score_kind().expect("filtered");
            let row = match &reports {
                Ok(reports) => {
                    let r = reports.iter().find(|r| r.score == kind).expect("requested kind");
                    ResultRow {
                        method: *method,
                        score_kind: Some(kind),
                        n,
                        seed,
                        estimate: r.estimate,
                        sigma2: r.sigma2,
                        ci_lo: r.ci95.0,
                        ci_hi: r.ci95.1,
                        max_eta: r.max_eta,
                        runtime_ms: elapsed,
                        error: None,
                    }
                }
                Err(e) => ResultRow::failed(*method, n, seed, e.to_string()),
            };
            rows.push(row);
        }
    }
    for method in config.methods.iter().filter(|m| m.score_kind().is_none()) {
        let start = Instant::now();
        let value = match method {
            Method::MeanR => mean_r(data, config.gamma),
            Method::Mdp => mdp_dp(data, eval, config.gamma, n_obs, n_actions, config.horizon).map(|r| r.value),
            Method::Tis => tis(data, eval, config.gamma, n_obs, n_actions).map(|r| r.value),
            _ => unreachable!("bridge methods handled above"),
        };
        let mut row = match value {
            Ok(v) if v.is_finite() => ResultRow::baseline(*method, n, seed, v),
            Ok(v) => ResultRow::failed(*method, n, seed, format!("non-finite value {v}")),
            Err(e) => ResultRow::failed(*method, n, seed, e.to_string()),
        };
        row.runtime_ms = clock(start);
        rows.push(row);
    }
    rows
}

/// Aggregates for one `(method, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub score_kind: Option<ScoreKind>,
    pub n: usize,
    /// Finite replications used in the statistics.
    pub reps: usize,
    pub excluded: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Variance with divisor `reps`, so `mse = bias^2 + var`.
    pub var: f64,
    /// Standard deviation with divisor `reps - 1`.
    pub sd: f64,
    /// `sd / sqrt(reps)`.
    pub se: f64,
    pub mse: f64,
    pub mse_ci: (f64, f64),
    /// Share of finite confidence intervals containing the truth.
    pub coverage: f64,
    pub coverage_reps: usize,
}

impl SummaryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.score_kind.map_or("none", ScoreKind::as_str),
            self.n,
            self.reps,
            self.excluded,
            fmt_float(self.truth),
            fmt_float(self.mean),
            fmt_float(self.bias),
            fmt_float(self.var),
            fmt_float(self.sd),
            fmt_float(self.se),
            fmt_float(self.mse),
            fmt_float(self.mse_ci.0),
            fmt_float(self.mse_ci.1),
            fmt_float(self.coverage),
            self.coverage_reps,
        )
    }
}

/// Summary statistics recomputed from raw rows alone.
pub fn summarize(rows: &[ResultRow], truth: f64) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(Method, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.method, r.n)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((method, n), group)| {
            let finite: Vec<f64> = group.iter().map(|r| r.estimate).filter(|v| v.is_finite()).collect();
            let m = finite.len();
            let mf = m as f64;
            let mean = finite.iter().sum::<f64>() / mf;
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mf;
            let sd = if m > 1 { (var * mf / (mf - 1.0)).sqrt() } else { f64::NAN };
            let sq: Vec<f64> = finite.iter().map(|v| (v - truth).powi(2)).collect();
            let mse = sq.iter().sum::<f64>() / mf;
            let sq_sd = if m > 1 {
                (sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            let half = Z_975 * sq_sd / mf.sqrt();
            let with_ci: Vec<&&ResultRow> = group
                .iter()
                .filter(|r| r.estimate.is_finite() && r.ci_lo.is_finite() && r.ci_hi.is_finite())
                .collect();
            let covered = with_ci.iter().filter(|r| r.ci_lo <= truth && truth <= r.ci_hi).count();
            SummaryRow {
                method,
                score_kind: method.score_kind(),
                n,
                reps: m,
                excluded: group.len() - m,
                truth,
                mean,
                bias: mean - truth,
                var,
                sd,
                se: sd / mf.sqrt(),
                mse,
                mse_ci: ((mse - half).max(0.0), mse + half),
                coverage: if with_ci.is_empty() { f64::NAN } else { covered as f64 / with_ci.len() as f64 },
                coverage_reps: with_ci.len(),
            }
        })
        .collect()
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub truth: f64,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Total wall-clock milliseconds per method.
    pub timings_ms: BTreeMap<String, f64>,
    pub failures: Vec<String>,
}

/// Runs all `(n, rep)` replications, in parallel, with rows in a fixed order.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let scenario = config.build_scenario()?;
    let eval = scenario.policy(&config.policy).expect("validated policy");
    let pomdp = &scenario.pomdp;
    let truth = exact_policy_value(pomdp, eval, config.gamma)?;
    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |rep| (n, rep)))
        .collect();
    let timed = ExperimentConfig {
        record_runtime: true,
        ..config.clone()
    };
    let per_job: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let seed = replication_seed(config.base_seed, n, rep);
            let data = sample_dataset(pomdp, &scenario.behavior, seed, n, false);
            run_methods(&timed, eval, &data, pomdp.n_obs, pomdp.n_actions, seed)
        })
        .collect();
    let mut rows = Vec::new();
    let mut timings_ms: BTreeMap<String, f64> = BTreeMap::new();
    let mut failures = Vec::new();
    for mut row in per_job.into_iter().flatten() {
        *timings_ms.entry(row.method.to_string()).or_insert(0.0) += row.runtime_ms;
        if !config.record_runtime {
            row.runtime_ms = 0.0;
        }
        if let Some(e) = &row.error {
            failures.push(format!("{} n={} seed={}: {e}", row.method, row.n, row.seed));
        }
        rows.push(row);
    }
    let summary = summarize(&rows, truth);
    Ok(RunSummary {
        truth,
        rows,
        summary,
        timings_ms,
        failures,
    })
}

/// Paths of the files written by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub raw_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest: PathBuf,
}

pub fn write_raw_csv<W: Write>(mut out: W, rows: &[ResultRow]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn read_raw_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidArgument("raw CSV header does not match".into()));
    }
    lines.filter(|l| !l.is_empty()).map(ResultRow::parse_csv_line).collect()
}

pub fn write_summary_csv<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Runs the experiment and writes `raw.csv`, `summary.csv` and `manifest.json`
/// under `output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<(RunSummary, RunArtifacts)> {
    let summary = run_in_memory(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let artifacts = RunArtifacts {
        raw_csv: config.output_dir.join("raw.csv"),
        summary_csv: config.output_dir.join("summary.csv"),
        manifest: config.output_dir.join("manifest.json"),
    };
    let mut raw = Vec::new();
    write_raw_csv(&mut raw, &summary.rows)?;
    fs::write(&artifacts.raw_csv, raw)?;
    let mut sum = Vec::new();
    write_summary_csv(&mut sum, &summary.summary)?;
    fs::write(&artifacts.summary_csv, sum)?;
    let (alpha, lambda) = config.penalties();
    let manifest = serde_json::json!({
        "config": config,
        "resolved": { "alpha": alpha, "lambda": lambda },
        "truth": summary.truth,
        "version": env!("CARGO_PKG_VERSION"),
        "timings_ms": summary.timings_ms,
        "rows": summary.rows.len(),
        "failures": summary.failures,
    });
    fs::write(&artifacts.manifest, serde_json::to_string_pretty(&manifest)?)?;
    Ok((summary, artifacts))
}

/// Certificates for every evaluation policy of the configured scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub eps_noise: f64,
    pub scheme: String,
    pub gamma: f64,
    pub corrupt_q: f64,
    pub policies: Vec<PolicyCertificates>,
    pub passed: bool,
}

pub fn verify(config: &ExperimentConfig, corrupt_q: f64) -> Result<VerifyReport> {
    config.validate()?;
    let scenario = config.build_scenario()?;
    let scheme = config.pci_scheme()?;
    let options = CertifyOptions {
        corrupt_q,
        ..CertifyOptions::default()
    };
    let policies = scenario
        .policies()
        .into_iter()
        .map(|eval| certify(&scenario.pomdp, &scenario.behavior, eval, &scheme, config.gamma, &options))
        .collect::<Result<Vec<_>>>()?;
    let passed = policies.iter().all(PolicyCertificates::passed);
    Ok(VerifyReport {
        scenario: config.scenario.clone(),
        eps_noise: config.eps_noise,
        scheme: config.scheme.clone(),
        gamma: config.gamma,
        corrupt_q,
        policies,
        passed,
    })
}

/// Exact value of the configured policy.
pub fn truth(config: &ExperimentConfig) -> Result<f64> {
    config.validate()?;
    let scenario = config.build_scenario()?;
    exact_policy_value(&scenario.pomdp, scenario.policy(&config.policy).expect("validated policy"), config.gamma)
}

/// `n` logged trajectories of the configured scenario.
pub fn sample(config: &ExperimentConfig, n: usize, seed: u64, with_hidden: bool) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let scenario = config.build_scenario()?;
    Ok(sample_dataset(&scenario.pomdp, &scenario.behavior, seed, n, with_hidden))
}

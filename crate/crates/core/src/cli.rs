//! Command-line front end: `run` writes checkpoint distributions and a
//! summary report, `verify` compares a run against the dense oracle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::engine::{total_error, SparseDistribution, StepRecord};
use crate::error::{Error, Result};
use crate::model::{builtin_model, parse_model, ModelSpec, StateVec};
use crate::oracle::{integrate_forward, verify_underapprox, StateBox, Violation};
use crate::stepper::{run, FindMaxMethod, RunOptions, RunResult, DEFAULT_ELL};

/// Boundary mass above which a verification is inconclusive.
pub const MAX_BOUNDARY_MASS: f64 = 1e-12;
/// Allowed excess of a lower bound over the reference.
pub const VERIFY_SLACK: f64 = 1e-9;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "mpm-transient", version, about = "Guaranteed lower bounds on transient distributions of Markov population models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Transient analysis with checkpoint output.
    Run(RunArgs),
    /// Compare the analysis against a dense reference on a finite box.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FindMaxArg {
    Monotone,
    Moments,
}

impl From<FindMaxArg> for FindMaxMethod {
    fn from(a: FindMaxArg) -> Self {
        match a {
            FindMaxArg::Monotone => FindMaxMethod::Monotone,
            FindMaxArg::Moments => FindMaxMethod::Moments,
        }
    }
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in model name.
    #[arg(long)]
    pub builtin: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Horizon override in seconds.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub r_star: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    /// Pruning threshold.
    #[arg(long, default_value_t = 1e-15)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = FindMaxArg::Monotone)]
    pub findmax: FindMaxArg,
    #[arg(long, default_value_t = DEFAULT_ELL)]
    pub ell: f64,
    /// Comma-separated checkpoint times.
    #[arg(long, value_delimiter = ',', conflicts_with = "every")]
    pub checkpoints: Vec<f64>,
    /// Checkpoint interval.
    #[arg(long)]
    pub every: Option<f64>,
    /// Share of the error budget reserved for pruning.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Abort after this many seconds of wall-clock time.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Comma-separated inclusive upper bounds of the reference box.
    #[arg(long = "box", value_delimiter = ',', required = true)]
    pub bounds: Vec<u32>,
    /// Comparison time.
    #[arg(long)]
    pub t: f64,
    /// Local tolerance of the reference integrator.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 5)]
    pub r_star: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-15)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = FindMaxArg::Monotone)]
    pub findmax: FindMaxArg,
}

/// Where a model comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelRef {
    File(PathBuf),
    Builtin(String),
}

impl ModelRef {
    pub fn load(&self) -> Result<ModelSpec> {
        match self {
            ModelRef::File(path) => parse_model(&fs::read_to_string(path)?),
            ModelRef::Builtin(name) => builtin_model(name),
        }
    }
}

impl From<&ModelSource> for ModelRef {
    fn from(s: &ModelSource) -> Self {
        match (&s.model, &s.builtin) {
            (Some(p), _) => ModelRef::File(p.clone()),
            (None, Some(b)) => ModelRef::Builtin(b.clone()),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheckpointSpec {
    List(Vec<f64>),
    Every(f64),
}

/// Validated configuration of a `run`.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelRef,
    pub t_max: Option<f64>,
    pub r_star: usize,
    pub epsilon: f64,
    pub delta_threshold: f64,
    pub method: FindMaxMethod,
    pub ell: f64,
    pub checkpoints: CheckpointSpec,
    pub out: PathBuf,
    pub rho_budget: Option<f64>,
    pub time_limit: Option<f64>,
}

impl RunConfig {
    pub fn new(model: ModelRef, r_star: usize, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            model,
            t_max: None,
            r_star,
            epsilon: 1e-10,
            delta_threshold: 1e-15,
            method: FindMaxMethod::Monotone,
            ell: DEFAULT_ELL,
            checkpoints: CheckpointSpec::List(Vec::new()),
            out: out.into(),
            rho_budget: None,
            time_limit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_star < 1 {
            return Err(Error::InvalidArgument("r-star must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.delta_threshold >= 0.0 && self.delta_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!("delta {} outside [0, 1)", self.delta_threshold)));
        }
        if !(self.ell > 0.0) {
            return Err(Error::InvalidArgument(format!("ell must be positive, got {}", self.ell)));
        }
        if let Some(l) = self.time_limit {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("time limit must be positive, got {l}")));
            }
        }
        if let CheckpointSpec::Every(s) = self.checkpoints {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!("checkpoint interval must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn checkpoint_times(&self, horizon: f64) -> Vec<f64> {
        match &self.checkpoints {
            CheckpointSpec::List(l) => l.clone(),
            CheckpointSpec::Every(s) => {
                let mut out = Vec::new();
                let mut k = 1u64;
                while (k as f64) * s < horizon {
                    out.push(k as f64 * s);
                    k += 1;
                }
                out
            }
        }
    }

    fn run_options(&self, horizon: f64) -> RunOptions {
        RunOptions {
            r_star: self.r_star,
            epsilon: self.epsilon,
            delta_threshold: self.delta_threshold,
            method: self.method,
            ell: self.ell,
            checkpoints: self.checkpoint_times(horizon),
            rho_budget: self.rho_budget,
            time_limit: self.time_limit.map(std::time::Duration::from_secs_f64),
            ..RunOptions::default()
        }
    }
}

impl TryFrom<&RunArgs> for RunConfig {
    type Error = Error;
    fn try_from(a: &RunArgs) -> Result<Self> {
        let checkpoints = match a.every {
            Some(s) => CheckpointSpec::Every(s),
            None => CheckpointSpec::List(a.checkpoints.clone()),
        };
        let cfg = RunConfig {
            model: (&a.source).into(),
            t_max: a.t_max,
            r_star: a.r_star,
            epsilon: a.epsilon,
            delta_threshold: a.delta,
            method: a.findmax.into(),
            ell: a.ell,
            checkpoints,
            out: a.out.clone(),
            rho_budget: a.rho,
            time_limit: a.time_limit,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LossSplit {
    pub bounding: f64,
    pub poisson: f64,
    pub prune: f64,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub total_error: f64,
    pub max_window_size: usize,
    pub loss_split_percent: LossSplit,
    pub bounding_loss: f64,
    pub poisson_loss: f64,
    pub prune_loss: f64,
    pub windows: usize,
    pub final_support: usize,
    /// Windows redone with a wider moment envelope.
    pub exceed_retries: usize,
    pub fallbacks: usize,
    pub checkpoints: Vec<CheckpointEntry>,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckpointEntry {
    pub t: f64,
    pub file: String,
    pub support: usize,
    pub total_error: f64,
}

impl RunSummary {
    pub fn from_result(res: &RunResult, files: Vec<String>) -> Self {
        let (b, p, r) = res.ledger.split_percent();
        RunSummary {
            total_error: res.total_error(),
            max_window_size: res.max_window_size,
            loss_split_percent: LossSplit {
                bounding: b,
                poisson: p,
                prune: r,
            },
            bounding_loss: res.ledger.bounding_loss,
            poisson_loss: res.ledger.poisson_loss,
            prune_loss: res.ledger.prune_loss,
            windows: res.ledger.steps.len(),
            final_support: res.final_distribution().len(),
            exceed_retries: res.exceed_retries,
            fallbacks: res.fallbacks,
            checkpoints: res
                .checkpoints
                .iter()
                .zip(files)
                .map(|((t, d), file)| CheckpointEntry {
                    t: *t,
                    file,
                    support: d.len(),
                    total_error: total_error(d),
                })
                .collect(),
            steps: res.ledger.steps.clone(),
        }
    }
}

/// CSV with header `x_1,...,x_n,probability`, lexicographic rows.
pub fn distribution_csv(p: &SparseDistribution, n: usize) -> String {
    let mut s = String::new();
    for k in 1..=n {
        let _ = write!(s, "x_{k},");
    }
    s.push_str("probability\n");
    for (x, v) in p.iter() {
        for c in x.iter() {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{v:.17e}");
    }
    s
}

pub fn checkpoint_file_name(t: f64) -> String {
    format!("p_t{t}.csv")
}

/// Runs the analysis and writes one CSV per checkpoint plus `summary.json`
/// into the output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut spec = cfg.model.load()?;
    if let Some(t) = cfg.t_max {
        spec = spec.with_horizon(t)?;
    }
    let res = run(&spec, &cfg.run_options(spec.horizon()))?;
    fs::create_dir_all(&cfg.out)?;
    let mut files = Vec::new();
    for (t, d) in &res.checkpoints {
        let name = checkpoint_file_name(*t);
        fs::write(cfg.out.join(&name), distribution_csv(d, spec.n()))?;
        files.push(name);
    }
    let summary = RunSummary::from_result(&res, files);
    fs::write(cfg.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Configuration of a `verify`.
#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub model: ModelRef,
    pub bounds: Vec<u32>,
    pub t: f64,
    pub tol: f64,
    pub r_star: usize,
    pub epsilon: f64,
    pub delta_threshold: f64,
    pub method: FindMaxMethod,
}

impl From<&VerifyArgs> for VerifyConfig {
    fn from(a: &VerifyArgs) -> Self {
        VerifyConfig {
            model: (&a.source).into(),
            bounds: a.bounds.clone(),
            t: a.t,
            tol: a.tol,
            r_star: a.r_star,
            epsilon: a.epsilon,
            delta_threshold: a.delta,
            method: a.findmax.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl VerifyStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            VerifyStatus::Pass => EXIT_PASS,
            VerifyStatus::Fail => EXIT_FAIL,
            VerifyStatus::Inconclusive => EXIT_INCONCLUSIVE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub status: VerifyStatus,
    pub worst: Option<Violation>,
    pub violations: usize,
    pub max_excess: f64,
    pub boundary_mass: f64,
    pub total_error: f64,
    pub ledger_total: f64,
}

impl VerifyOutcome {
    pub fn report(&self) -> String {
        let status = match self.status {
            VerifyStatus::Pass => "PASS",
            VerifyStatus::Fail => "FAIL",
            VerifyStatus::Inconclusive => "INCONCLUSIVE",
        };
        let mut s = format!(
            "{status}: violations={} max_excess={:.3e} boundary_mass={:.3e} total_error={:.3e} ledger_total={:.3e}",
            self.violations, self.max_excess, self.boundary_mass, self.total_error, self.ledger_total
        );
        if let Some(w) = &self.worst {
            let _ = write!(s, " worst={:?} lower={:.6e} reference={:.6e}", w.state, w.lower, w.reference);
        }
        s
    }
}

/// Runs the analysis up to `t` and the dense reference on the box.
pub fn cmd_verify(cfg: &VerifyConfig) -> Result<VerifyOutcome> {
    let spec = cfg.model.load()?.with_horizon(cfg.t)?;
    if cfg.bounds.len() != spec.n() {
        return Err(Error::InvalidArgument(format!(
            "box has {} bounds, model has {} species",
            cfg.bounds.len(),
            spec.n()
        )));
    }
    let opts = RunOptions {
        r_star: cfg.r_star,
        epsilon: cfg.epsilon,
        delta_threshold: cfg.delta_threshold,
        method: cfg.method,
        ..RunOptions::default()
    };
    let res = run(&spec, &opts)?;
    let p0: SparseDistribution = spec.initial().iter().cloned().collect();
    let reference = integrate_forward(&p0, 0.0, cfg.t, &StateBox::new(cfg.bounds.clone()), &spec, cfg.tol)?;
    let report = verify_underapprox(res.final_distribution(), &reference, VERIFY_SLACK);
    let status = if reference.boundary_mass > MAX_BOUNDARY_MASS {
        VerifyStatus::Inconclusive
    } else if report.passed() {
        VerifyStatus::Pass
    } else {
        VerifyStatus::Fail
    };
    Ok(VerifyOutcome {
        status,
        worst: report.worst().cloned(),
        violations: report.violations.len(),
        max_excess: report.max_excess,
        boundary_mass: report.boundary_mass,
        total_error: res.total_error(),
        ledger_total: res.ledger.total(),
    })
}

/// Parses a CSV written by [`distribution_csv`].
pub fn read_distribution_csv(path: &Path) -> Result<SparseDistribution> {
    let text = fs::read_to_string(path)?;
    let mut out = SparseDistribution::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidArgument(format!("{}:{}: malformed row", path.display(), lineno + 1));
        let (p, x) = fields.split_last().ok_or_else(bad)?;
        let state = x.iter().map(|f| f.parse::<u32>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
        out.insert(StateVec(state), p.parse::<f64>().map_err(|_| bad())?);
    }
    Ok(out)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    match cli.command {
        Command::Run(a) => match RunConfig::try_from(&a).and_then(|c| cmd_run(&c)) {
            Ok(s) => {
                let split = &s.loss_split_percent;
                println!(
                    "total_error={:.6e} max_window_size={} windows={} split(bounding/poisson/prune)={:.1}%/{:.1}%/{:.1}%",
                    s.total_error, s.max_window_size, s.windows, split.bounding, split.poisson, split.prune
                );
                EXIT_PASS
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
        Command::Verify(a) => match cmd_verify(&VerifyConfig::from(&a)) {
            Ok(o) => {
                println!("{}", o.report());
                o.status.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let p: SparseDistribution = [(StateVec(vec![1, 0]), 0.25), (StateVec(vec![0, 2]), 0.75)]
            .into_iter()
            .collect();
        let csv = distribution_csv(&p, 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x_1,x_2,probability");
        assert!(lines[1].starts_with("0,2,7.5"));
        assert!(lines[2].starts_with("1,0,2.5"));
    }

    #[test]
    fn rejects_zero_r_star() {
        let cfg = RunConfig::new(ModelRef::Builtin("gene_expression".into()), 0, "/tmp/x");
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_expands_below_horizon() {
        let mut cfg = RunConfig::new(ModelRef::Builtin("gene_expression".into()), 5, "/tmp/x");
        cfg.checkpoints = CheckpointSpec::Every(1000.0);
        assert_eq!(cfg.checkpoint_times(3600.0), vec![1000.0, 2000.0, 3000.0]);
    }

    #[test]
    fn parses_run_command() {
        let cli = Cli::try_parse_from([
            "mpm-transient", "run", "--builtin", "exclusive_switch", "--r-star", "5", "--checkpoints", "1,2", "--out", "o",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        assert_eq!(a.checkpoints, vec![1.0, 2.0]);
        assert_eq!(a.findmax, FindMaxArg::Monotone);
    }
}

//! Window selection and the complete time-stepping loop.
//!
//! Each window `[t, t + delta]` is as long as possible subject to the
//! Poisson truncation point staying at or below the requested `R*`. The
//! dominating state that fixes the uniformization rate comes either from
//! worst-case growth (every jump increases each population by its largest
//! change) or from a mean plus `ell` standard deviations envelope of the
//! moment equations.

use std::time::{Duration, Instant};

use crate::engine::{ErrorLedger, Explorer, SparseDistribution, StepRecord, UniformizationRate, WindowFailure};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, StateVec};
use crate::poisson::{right_truncation_at_most, step_parameter, PoissonTruncation};

/// Iteration cap of the step-length bisection.
pub const MAX_BISECTIONS: usize = 64;
/// Spread factor of the moment envelope.
pub const DEFAULT_ELL: f64 = 4.0;
/// Beyond this spread the moment envelope gives up for the window.
pub const MAX_ELL: f64 = 16.0;
/// RK4 steps per window for the moment equations.
pub const MOMENT_SUBSTEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FindMaxMethod {
    /// Worst-case growth over `R*` jumps.
    #[default]
    Monotone,
    /// Mean plus `ell` standard deviations of the moment equations.
    Moments,
}

/// One uniformization window.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPlan {
    pub t_start: f64,
    pub delta: f64,
    pub lambda: UniformizationRate,
    pub truncation: PoissonTruncation,
    pub r_star: usize,
}

impl StepPlan {
    pub fn new(
        spec: &ModelSpec,
        x_max: StateVec,
        t_start: f64,
        delta: f64,
        epsilon: f64,
        r_star: usize,
    ) -> Result<Self> {
        let lambda = UniformizationRate::new(spec, x_max);
        let mu = step_parameter(&lambda, t_start, delta)?;
        Ok(StepPlan {
            t_start,
            delta,
            lambda,
            truncation: PoissonTruncation::new(mu, epsilon),
            r_star,
        })
    }

    pub fn x_max(&self) -> &StateVec {
        &self.lambda.x_max
    }

    pub fn mu(&self) -> f64 {
        self.truncation.mu
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.delta
    }
}

// ---------------------------------------------------------------------------
// moment equations

/// Means and covariances (row-major `n x n`) at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    pub t: f64,
    pub means: Vec<f64>,
    pub cov: Vec<f64>,
}

impl MomentState {
    pub fn point(t: f64, x: &[u32]) -> Self {
        let n = x.len();
        MomentState {
            t,
            means: x.iter().map(|&v| v as f64).collect(),
            cov: vec![0.0; n * n],
        }
    }

    pub fn from_distribution(t: f64, p: &SparseDistribution) -> Option<Self> {
        let (means, cov) = p.moments()?;
        Some(MomentState { t, means, cov })
    }

    pub fn std_dev(&self, k: usize) -> f64 {
        let n = self.means.len();
        self.cov[k * n + k].max(0.0).sqrt()
    }
}

/// Time derivatives of a [`MomentState`].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentDerivatives {
    pub means: Vec<f64>,
    pub cov: Vec<f64>,
}

fn check_degrees(spec: &ModelSpec) -> Result<()> {
    for c in spec.classes() {
        let degree = c.state_factor.degree();
        if degree > 2 {
            return Err(Error::UnsupportedDegree {
                class: c.name.clone(),
                degree,
            });
        }
    }
    Ok(())
}

/// Second-order moment equations. The expected rate of a class uses the
/// mean and covariance exactly; the covariance between a rate and a
/// population uses the rate gradient at the mean, which is exact for
/// linear rates and drops third central moments otherwise.
pub fn moment_derivatives(state: &MomentState, t: f64, spec: &ModelSpec) -> Result<MomentDerivatives> {
    check_degrees(spec)?;
    let mut out = MomentDerivatives {
        means: vec![0.0; state.means.len()],
        cov: vec![0.0; state.cov.len()],
    };
    let mut grad = vec![0.0; state.means.len()];
    let mut cov_rate = vec![0.0; state.means.len()];
    accumulate_moment_derivatives(state, t, spec, &mut out, &mut grad, &mut cov_rate);
    Ok(out)
}

fn accumulate_moment_derivatives(
    state: &MomentState,
    t: f64,
    spec: &ModelSpec,
    out: &mut MomentDerivatives,
    grad: &mut [f64],
    cov_rate: &mut [f64],
) {
    let n = state.means.len();
    let (e, c) = (&state.means, &state.cov);
    out.means.fill(0.0);
    out.cov.fill(0.0);
    for class in spec.classes() {
        let lam = class.time_factor.value(t);
        if lam == 0.0 {
            continue;
        }
        let sf = &class.state_factor;
        // expected state factor and its gradient at the mean
        let vars: Vec<usize> = sf
            .exponents
            .iter()
            .enumerate()
            .flat_map(|(k, &p)| std::iter::repeat(k).take(p as usize))
            .collect();
        grad.fill(0.0);
        let expected = match vars.as_slice() {
            [] => sf.constant,
            &[k] => {
                grad[k] = sf.constant;
                sf.constant * e[k]
            }
            &[k, l] => {
                grad[k] += sf.constant * e[l];
                grad[l] += sf.constant * e[k];
                sf.constant * (e[k] * e[l] + c[k * n + l])
            }
            _ => unreachable!("degree checked"),
        };
        let rate = lam * expected;
        // Cov(alpha, x_l) ~ lam * sum_m grad_m C_ml
        for l in 0..n {
            cov_rate[l] = lam * (0..n).map(|m| grad[m] * c[m * n + l]).sum::<f64>();
        }
        let w = &class.change;
        for k in 0..n {
            let wk = w[k] as f64;
            out.means[k] += wk * rate;
            for l in 0..n {
                let wl = w[l] as f64;
                out.cov[k * n + l] += wk * cov_rate[l] + wl * cov_rate[k] + wk * wl * rate;
            }
        }
    }
}

/// Classical RK4 integration of the moment equations over `[t, t + delta]`
/// with `substeps` steps; `visit` sees every grid point including both ends.
pub fn integrate_moments(
    start: &MomentState,
    delta: f64,
    substeps: usize,
    spec: &ModelSpec,
    mut visit: impl FnMut(&MomentState),
) -> Result<MomentState> {
    check_degrees(spec)?;
    let n = start.means.len();
    let dim = n + n * n;
    let h = delta / substeps.max(1) as f64;
    let mut y = start.clone();
    visit(&y);
    let mut grad = vec![0.0; n];
    let mut cov_rate = vec![0.0; n];
    let mut ks: Vec<MomentDerivatives> = (0..4)
        .map(|_| MomentDerivatives {
            means: vec![0.0; n],
            cov: vec![0.0; n * n],
        })
        .collect();
    let mut stage = y.clone();
    let get = |d: &MomentDerivatives, i: usize| if i < n { d.means[i] } else { d.cov[i - n] };
    for s in 0..substeps.max(1) {
        let t0 = start.t + s as f64 * h;
        let nodes = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
        for (stage_idx, &(ct, ca)) in nodes.iter().enumerate() {
            if stage_idx == 0 {
                stage.clone_from(&y);
            } else {
                for i in 0..dim {
                    let v = if i < n { y.means[i] } else { y.cov[i - n] } + ca * h * get(&ks[stage_idx - 1], i);
                    if i < n {
                        stage.means[i] = v;
                    } else {
                        stage.cov[i - n] = v;
                    }
                }
            }
            accumulate_moment_derivatives(&stage, t0 + ct * h, spec, &mut ks[stage_idx], &mut grad, &mut cov_rate);
        }
        for i in 0..dim {
            let incr = h / 6.0
                * (get(&ks[0], i) + 2.0 * get(&ks[1], i) + 2.0 * get(&ks[2], i) + get(&ks[3], i));
            if i < n {
                y.means[i] += incr;
            } else {
                y.cov[i - n] += incr;
            }
        }
        y.t = if s + 1 == substeps.max(1) { start.t + delta } else { t0 + h };
        if y.means.iter().chain(&y.cov).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMoments(y.t));
        }
        visit(&y);
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// dominating states

fn clamp_to_caps(x: &mut [u32], spec: &ModelSpec) {
    for (v, cap) in x.iter_mut().zip(spec.caps()) {
        if let Some(c) = cap {
            *v = (*v).min(*c);
        }
    }
}

/// Largest per-species increase over all classes, at least zero.
fn max_increments(spec: &ModelSpec) -> Vec<u32> {
    (0..spec.n())
        .map(|k| spec.classes().iter().map(|c| c.change[k].max(0) as u32).max().unwrap_or(0))
        .collect()
}

fn monotone_from_support_max(y_max: &[u32], r_star: usize, spec: &ModelSpec) -> StateVec {
    let mut x: Vec<u32> = y_max
        .iter()
        .zip(max_increments(spec))
        .map(|(&y, w)| y.saturating_add(w.saturating_mul(r_star as u32)))
        .collect();
    clamp_to_caps(&mut x, spec);
    // caps are sound bounds on reachable states, so the support already
    // lies below them; keep the support dominated regardless
    for (v, &y) in x.iter_mut().zip(y_max) {
        *v = (*v).max(y);
    }
    StateVec(x)
}

/// `x_k = max_y y_k + R* max(0, max_j w_jk)`, clamped to the population caps.
pub fn find_max_state_monotone(support: &SparseDistribution, r_star: usize, spec: &ModelSpec) -> StateVec {
    let y_max = support.support_max().unwrap_or_else(|| StateVec::zeros(spec.n()));
    monotone_from_support_max(&y_max, r_star, spec)
}

fn moment_envelope(
    y_max: &[u32],
    start: &MomentState,
    delta: f64,
    ell: f64,
    spec: &ModelSpec,
) -> Result<StateVec> {
    let n = spec.n();
    let mut envelope = vec![f64::NEG_INFINITY; n];
    integrate_moments(start, delta, MOMENT_SUBSTEPS, spec, |s| {
        for k in 0..n {
            envelope[k] = envelope[k].max(s.means[k] + ell * s.std_dev(k));
        }
    })?;
    let mut x: Vec<u32> = envelope
        .iter()
        .zip(y_max)
        .map(|(&v, &y)| {
            let up = v.max(0.0).ceil();
            let up = if up >= u32::MAX as f64 { u32::MAX } else { up as u32 };
            up.max(y)
        })
        .collect();
    clamp_to_caps(&mut x, spec);
    for (v, &y) in x.iter_mut().zip(y_max) {
        *v = (*v).max(y);
    }
    Ok(StateVec(x))
}

/// `x_k = ceil(max_s E_k(s) + ell sigma_k(s))` over the RK4 grid on
/// `[t, t + delta]`, starting from the moments of the renormalized `p_hat`.
/// Never below the support maximum, and clamped to the population caps.
pub fn find_max_state_moments(
    p_hat: &SparseDistribution,
    t: f64,
    delta: f64,
    ell: f64,
    spec: &ModelSpec,
) -> Result<StateVec> {
    if !(ell > 0.0) {
        return Err(Error::InvalidArgument(format!("ell must be positive, got {ell}")));
    }
    let start = MomentState::from_distribution(t, p_hat)
        .ok_or(Error::MassExhausted(t))?;
    let y_max = p_hat.support_max().unwrap_or_else(|| StateVec::zeros(spec.n()));
    moment_envelope(&y_max, &start, delta, ell, spec)
}

// ---------------------------------------------------------------------------
// step selection

/// What the step search needs to know about the current distribution.
#[derive(Clone, Debug)]
pub(crate) struct SupportSummary {
    pub y_max: Vec<u32>,
    pub moments: Option<MomentState>,
}

/// Window length search.
pub(crate) fn plan_window(
    summary: &SupportSummary,
    r_star: usize,
    t: f64,
    t_end: f64,
    epsilon: f64,
    spec: &ModelSpec,
    method: FindMaxMethod,
    ell: f64,
) -> Result<StepPlan> {
    let full = t_end - t;
    if !(full > 0.0) {
        return Err(Error::InvalidArgument(format!("empty window at t={t}")));
    }
    let floor_rate = UniformizationRate::new(spec, StateVec(summary.y_max.clone()));

    // Some(plan) when the window length is admissible
    let probe = |delta: f64| -> Result<Option<StepPlan>> {
        let x_max = match method {
            FindMaxMethod::Monotone => monotone_from_support_max(&summary.y_max, r_star, spec),
            FindMaxMethod::Moments => {
                // Lambda at the support maximum is a lower bound on the
                // envelope's Lambda: skip the integration when it already
                // forces too many jumps
                let mu_floor = step_parameter(&floor_rate, t, delta)?;
                if right_truncation_at_most(mu_floor, epsilon, r_star).is_none() {
                    return Ok(None);
                }
                let start = summary.moments.as_ref().ok_or(Error::MassExhausted(t))?;
                moment_envelope(&summary.y_max, start, delta, ell, spec)?
            }
        };
        let lambda = UniformizationRate::new(spec, x_max);
        let mu = step_parameter(&lambda, t, delta)?;
        Ok(right_truncation_at_most(mu, epsilon, r_star).map(|r| StepPlan {
            t_start: t,
            delta,
            lambda,
            truncation: PoissonTruncation::with_right_point(mu, r),
            r_star,
        }))
    };

    if let Some(plan) = probe(full)? {
        return Ok(plan);
    }
    let (mut lo, mut hi) = (0.0f64, full);
    let mut best: Option<StepPlan> = None;
    for _ in 0..MAX_BISECTIONS {
        let delta = 0.5 * (lo + hi);
        if !(delta > lo && delta < hi) {
            break;
        }
        match probe(delta)? {
            Some(plan) => {
                let hit = plan.truncation.right_point == r_star;
                lo = delta;
                best = Some(plan);
                if hit {
                    break;
                }
            }
            None => hi = delta,
        }
    }
    best.ok_or(Error::StepUnderflow(t))
}

/// Longest window from `t` toward `t_max` whose truncation point stays at or
/// below `r_star`.
#[allow(clippy::too_many_arguments)]
pub fn choose_step(
    r_star: usize,
    t: f64,
    t_max: f64,
    epsilon: f64,
    support: &SparseDistribution,
    spec: &ModelSpec,
    method: FindMaxMethod,
    ell: f64,
) -> Result<StepPlan> {
    let summary = SupportSummary {
        y_max: support
            .support_max()
            .ok_or(Error::MassExhausted(t))?
            .into_inner(),
        moments: match method {
            FindMaxMethod::Monotone => None,
            FindMaxMethod::Moments => MomentState::from_distribution(t, support),
        },
    };
    plan_window(&summary, r_star, t, t_max, epsilon, spec, method, ell)
}

/// What to do after a state outside the dominated window showed up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RetryDecision {
    /// The state is dominated after all.
    Keep,
    /// Redo the window with a wider envelope.
    Widen(f64),
    /// Redo the window with worst-case growth.
    FallBack,
}

pub fn retry_on_exceed(plan: &StepPlan, observed: &[u32], ell: f64) -> RetryDecision {
    if observed.iter().zip(plan.x_max().iter()).all(|(a, b)| a <= b) {
        return RetryDecision::Keep;
    }
    let widened = ell + 2.0;
    if widened > MAX_ELL {
        RetryDecision::FallBack
    } else {
        RetryDecision::Widen(widened)
    }
}

// ---------------------------------------------------------------------------
// complete analysis

/// Knobs of a complete run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub r_star: usize,
    pub epsilon: f64,
    pub delta_threshold: f64,
    pub method: FindMaxMethod,
    pub ell: f64,
    /// Emission times; the horizon is always emitted last.
    pub checkpoints: Vec<f64>,
    /// Fraction of the horizon's loss reserved for pruning; a window over
    /// its share is recomputed once with a ten times smaller threshold.
    pub rho_budget: Option<f64>,
    /// Number of leading Poisson terms evaluated exactly.
    pub exact_terms: usize,
    /// Check every plan against the sampled domination conditions.
    pub validate: bool,
    /// Wall-clock budget; exceeding it aborts with [`Error::TimeLimit`].
    pub time_limit: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            r_star: 5,
            epsilon: 1e-10,
            delta_threshold: 1e-15,
            method: FindMaxMethod::Monotone,
            ell: DEFAULT_ELL,
            checkpoints: Vec::new(),
            rho_budget: None,
            exact_terms: 3,
            validate: false,
            time_limit: None,
        }
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunResult {
    pub checkpoints: Vec<(f64, SparseDistribution)>,
    pub ledger: ErrorLedger,
    /// Largest number of states considered in a single window.
    pub max_window_size: usize,
    /// Largest support of the distribution between windows.
    pub max_support: usize,
    /// Windows redone with a wider moment envelope.
    pub exceed_retries: usize,
    /// Windows that fell back to worst-case growth.
    pub fallbacks: usize,
    /// Windows redone with a smaller pruning threshold.
    pub rho_retries: usize,
}

impl RunResult {
    pub fn final_distribution(&self) -> &SparseDistribution {
        &self.checkpoints.last().expect("horizon is always emitted").1
    }

    pub fn total_error(&self) -> f64 {
        crate::engine::total_error(self.final_distribution())
    }
}

fn initial_distribution(spec: &ModelSpec) -> SparseDistribution {
    spec.initial().iter().cloned().collect()
}

/// Complete transient analysis from the model's initial distribution to its
/// horizon.
pub fn run(spec: &ModelSpec, opts: &RunOptions) -> Result<RunResult> {
    let t_max = spec.horizon();
    validate_options(opts, t_max)?;
    if opts.method == FindMaxMethod::Moments {
        check_degrees(spec)?;
    }
    let mut stops: Vec<f64> = opts.checkpoints.iter().copied().filter(|&c| c < t_max).collect();
    stops.push(t_max);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut explorer = Explorer::new(spec);
    explorer.load(&initial_distribution(spec));
    let mut result = RunResult {
        checkpoints: Vec::new(),
        ledger: ErrorLedger::default(),
        max_window_size: explorer.current().len(),
        max_support: explorer.current().len(),
        exceed_retries: 0,
        fallbacks: 0,
        rho_retries: 0,
    };
    let started = Instant::now();
    let mut t = 0.0;
    for &stop in &stops {
        while t < stop {
            if let Some(limit) = opts.time_limit {
                if started.elapsed() > limit {
                    return Err(Error::TimeLimit {
                        reached: t,
                        limit_secs: limit.as_secs_f64(),
                        max_window_size: result.max_window_size,
                        lost_mass: 1.0 - explorer.export().total_mass(),
                    });
                }
            }
            t = advance_one(&mut explorer, &mut result, spec, opts, t, stop, t_max)?;
        }
        result.checkpoints.push((stop, explorer.export()));
    }
    Ok(result)
}

fn validate_options(opts: &RunOptions, t_max: f64) -> Result<()> {
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {} outside (0, 1)", opts.epsilon)));
    }
    if !(opts.delta_threshold >= 0.0 && opts.delta_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "pruning threshold {} outside [0, 1)",
            opts.delta_threshold
        )));
    }
    if !(opts.ell > 0.0) {
        return Err(Error::InvalidArgument(format!("ell must be positive, got {}", opts.ell)));
    }
    if !(1..=crate::engine::MAX_EXACT_TERMS).contains(&opts.exact_terms) {
        return Err(Error::InvalidArgument(format!(
            "exact terms must lie in 1..={}, got {}",
            crate::engine::MAX_EXACT_TERMS,
            opts.exact_terms
        )));
    }
    if let Some(rho) = opts.rho_budget {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
    }
    if let Some(&c) = opts.checkpoints.iter().find(|&&c| !(c >= 0.0 && c <= t_max)) {
        return Err(Error::InvalidArgument(format!("checkpoint {c} outside [0, {t_max}]")));
    }
    Ok(())
}

fn summarize(explorer: &Explorer<'_>, method: FindMaxMethod, t: f64) -> SupportSummary {
    SupportSummary {
        y_max: explorer.support_max(),
        moments: match method {
            FindMaxMethod::Monotone => None,
            FindMaxMethod::Moments => explorer.moments().map(|(means, cov)| MomentState { t, means, cov }),
        },
    }
}

/// Runs one window starting at `t`, including retries; returns the new time.
fn advance_one(
    explorer: &mut Explorer<'_>,
    result: &mut RunResult,
    spec: &ModelSpec,
    opts: &RunOptions,
    t: f64,
    stop: f64,
    t_max: f64,
) -> Result<f64> {
    let mut method = opts.method;
    let mut ell = opts.ell;
    let mut threshold = opts.delta_threshold;
    let mut rho_retried = false;
    let summary = summarize(explorer, method, t);
    loop {
        let plan = plan_window(&summary, opts.r_star, t, stop, opts.epsilon, spec, method, ell)?;
        if opts.validate {
            crate::engine::check_plan_bounds(&plan, spec, &explorer.support_states(), 64)?;
        }
        let report = match explorer.advance(&plan, threshold, opts.exact_terms) {
            Ok(report) => report,
            Err(WindowFailure::Error(e)) => return Err(e),
            Err(WindowFailure::Exceeded(ex)) => {
                if method != FindMaxMethod::Moments {
                    return Err(Error::NotDominated {
                        state: ex.state.into_inner(),
                        x_max: plan.x_max().0.clone(),
                    });
                }
                result.exceed_retries += 1;
                match retry_on_exceed(&plan, &ex.state, ell) {
                    RetryDecision::Keep => unreachable!("exceeding state is outside x_max"),
                    RetryDecision::Widen(l) => ell = l,
                    RetryDecision::FallBack => {
                        result.fallbacks += 1;
                        method = FindMaxMethod::Monotone;
                    }
                }
                continue;
            }
        };
        if let Some(rho) = opts.rho_budget {
            if !rho_retried && threshold > 0.0 && report.prune_loss > rho * plan.delta / t_max {
                rho_retried = true;
                result.rho_retries += 1;
                threshold /= 10.0;
                continue;
            }
        }
        explorer.commit();
        result.max_window_size = result.max_window_size.max(report.window_size);
        result.max_support = result.max_support.max(explorer.current().len());
        result.ledger.record(StepRecord {
            t: plan.t_start,
            delta: plan.delta,
            mu: plan.truncation.mu,
            r: plan.truncation.right_point,
            bounding_loss: report.bounding_loss,
            poisson_loss: report.poisson_loss,
            prune_loss: report.prune_loss,
        });
        // land exactly on the stop when the window reaches it
        let t_next = if plan.delta >= stop - t { stop } else { t + plan.delta };
        return Ok(t_next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, exclusive_switch, gene_expression, GeneExpressionRates};

    fn point(x: &[u32]) -> SparseDistribution {
        SparseDistribution::point(StateVec(x.to_vec()))
    }

    #[test]
    fn monotone_gene_expression() {
        let spec = gene_expression(GeneExpressionRates::default());
        assert_eq!(find_max_state_monotone(&point(&[0, 0]), 5, &spec).0, vec![5, 5]);
        assert_eq!(find_max_state_monotone(&point(&[3, 7]), 0, &spec).0, vec![3, 7]);
    }

    #[test]
    fn monotone_switch_respects_promoter_caps() {
        let spec = exclusive_switch();
        assert_eq!(
            find_max_state_monotone(&point(&[0, 0, 1, 0, 0]), 5, &spec).0,
            vec![5, 5, 1, 1, 1]
        );
    }

    #[test]
    fn transcription_only_at_origin() {
        let spec = gene_expression(GeneExpressionRates::default());
        let d = moment_derivatives(&MomentState::point(0.0, &[0, 0]), 0.0, &spec).unwrap();
        assert!((d.means[0] - 0.05).abs() < 1e-15);
        assert_eq!(d.means[1], 0.0);
    }

    #[test]
    fn pure_death_envelope() {
        let spec = crate::model::parse_model(
            r#"{"species":["A","B"],"horizon":10,
                "initial":[{"state":[10,0],"prob":1}],
                "classes":[{"name":"death","guard":[{"var":"A","min":1}],"change":[-1,0],
                  "rate":{"constant":0.1,"exponents":[1,0],"time":{"kind":"constant","a":1}}}]}"#,
        )
        .unwrap();
        let mut envelope = 0.0f64;
        let end = integrate_moments(&MomentState::point(0.0, &[10, 0]), 1.0, MOMENT_SUBSTEPS, &spec, |s| {
            envelope = envelope.max(s.means[0] + 4.0 * s.std_dev(0));
        })
        .unwrap();
        // E(s) = 10 e^{-s/10}, Var(s) = 10 e^{-s/10}(1 - e^{-s/10})
        let e = 10.0 * (-0.1f64).exp();
        let sd = (e * (1.0 - (-0.1f64).exp())).sqrt();
        assert!((end.means[0] - e).abs() < 1e-10);
        assert!((end.std_dev(0) - sd).abs() < 1e-10);
        assert!((envelope - (e + 4.0 * sd)).abs() < 1e-9);
        // A never grows, so its cap is the initial count
        let x = find_max_state_moments(&point(&[10, 0]), 0.0, 1.0, 4.0, &spec).unwrap();
        assert_eq!(x.0, vec![10, 0]);
    }

    #[test]
    fn plan_respects_r_star() {
        let spec = builtin_model("exclusive_switch").unwrap();
        let plan = choose_step(5, 0.0, 3600.0, 1e-10, &point(&[0, 0, 1, 0, 0]), &spec, FindMaxMethod::Monotone, 4.0)
            .unwrap();
        assert_eq!(plan.truncation.right_point, 5);
        let mu = step_parameter(&plan.lambda, 0.0, plan.delta).unwrap();
        assert_eq!(mu, plan.truncation.mu);
    }

    #[test]
    fn short_horizon_single_window() {
        let spec = gene_expression(GeneExpressionRates::default()).with_horizon(1.0).unwrap();
        let plan = choose_step(10, 0.0, 1.0, 1e-10, &point(&[0, 0]), &spec, FindMaxMethod::Monotone, 4.0).unwrap();
        assert_eq!(plan.delta, 1.0);
    }

    #[test]
    fn zero_horizon_echoes_initial() {
        let spec = exclusive_switch().with_horizon(0.0).unwrap();
        let res = run(&spec, &RunOptions::default()).unwrap();
        assert_eq!(res.checkpoints.len(), 1);
        assert_eq!(res.final_distribution(), &point(&[0, 0, 1, 0, 0]));
        assert_eq!(res.ledger.total(), 0.0);
    }

    #[test]
    fn retry_decisions() {
        let spec = exclusive_switch();
        let plan = StepPlan::new(&spec, StateVec(vec![5, 5, 1, 1, 1]), 0.0, 0.1, 1e-10, 5).unwrap();
        assert_eq!(retry_on_exceed(&plan, &[1, 1, 1, 0, 0], 4.0), RetryDecision::Keep);
        assert_eq!(retry_on_exceed(&plan, &[6, 0, 1, 0, 0], 4.0), RetryDecision::Widen(6.0));
        assert_eq!(retry_on_exceed(&plan, &[6, 0, 1, 0, 0], 16.0), RetryDecision::FallBack);
    }
}

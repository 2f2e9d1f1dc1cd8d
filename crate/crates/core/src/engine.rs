//! Sparse distribution arithmetic for one uniformization window.
//!
//! Within a window `[t, t + delta]` the uniformizing rate is the exit rate
//! `Lambda` of a dominating state `x_max`. The window result is
//!
//! ```text
//! p(t + delta) >= sum_{i <= R} term_i
//! ```
//!
//! where the first few terms are evaluated exactly (ordered integrals over
//! jump times, carried as polynomials in the normalized time of the last
//! jump) and the remaining terms use the lower-bounded DTMC
//! `v(i+1)(y) = sum u_j(x) v(i)(x) + u_0(y) v(i)(y)` weighted by Poisson
//! probabilities. Every approximation loses mass, never adds it, so
//! `1 - sum p` is a bound on the total error.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, StateVec};
use crate::stepper::StepPlan;
use crate::sum::{compensated_sum, CompensatedSum};

/// Finite-support distribution; zero entries are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseDistribution {
    entries: BTreeMap<StateVec, f64>,
}

impl SparseDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn point(x: StateVec) -> Self {
        let mut d = Self::new();
        d.insert(x, 1.0);
        d
    }

    /// Sets `p(x)`; non-positive values remove the entry.
    pub fn insert(&mut self, x: StateVec, p: f64) {
        if p > 0.0 {
            self.entries.insert(x, p);
        } else {
            self.entries.remove(&x);
        }
    }

    pub fn add(&mut self, x: StateVec, p: f64) {
        if p > 0.0 {
            *self.entries.entry(x).or_insert(0.0) += p;
        }
    }

    pub fn get(&self, x: &[u32]) -> f64 {
        self.entries.get(x).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in lexicographic state order.
    pub fn iter(&self) -> impl Iterator<Item = (&StateVec, f64)> {
        self.entries.iter().map(|(x, &p)| (x, p))
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.entries.values().copied())
    }

    /// Componentwise maximum over the support.
    pub fn support_max(&self) -> Option<StateVec> {
        let mut it = self.entries.keys();
        let first = it.next()?.clone();
        Some(it.fold(first, |mut acc, x| {
            for (a, &b) in acc.0.iter_mut().zip(x.iter()) {
                *a = (*a).max(b);
            }
            acc
        }))
    }

    /// Means and covariances (row-major `n x n`) of the renormalized
    /// distribution.
    pub fn moments(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.entries.keys().next()?.len();
        moments_of(n, self.entries.iter().map(|(x, &p)| (x.as_ref(), p)))
    }

    /// Marginal over a subset of species.
    pub fn marginal(&self, dims: &[usize]) -> SparseDistribution {
        let mut out = SparseDistribution::new();
        for (x, p) in self.iter() {
            out.add(StateVec(dims.iter().map(|&k| x[k]).collect()), p);
        }
        out
    }
}

impl FromIterator<(StateVec, f64)> for SparseDistribution {
    fn from_iter<I: IntoIterator<Item = (StateVec, f64)>>(iter: I) -> Self {
        let mut d = SparseDistribution::new();
        for (x, p) in iter {
            d.add(x, p);
        }
        d
    }
}

pub(crate) fn moments_of<'a>(
    n: usize,
    entries: impl Iterator<Item = (&'a [u32], f64)> + Clone,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mass = compensated_sum(entries.clone().map(|(_, p)| p));
    if !(mass > 0.0) {
        return None;
    }
    let mut mean = vec![0.0; n];
    for (x, p) in entries.clone() {
        for k in 0..n {
            mean[k] += p * x[k] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= mass);
    let mut cov = vec![0.0; n * n];
    for (x, p) in entries {
        for k in 0..n {
            let dk = x[k] as f64 - mean[k];
            for l in k..n {
                cov[k * n + l] += p * dk * (x[l] as f64 - mean[l]);
            }
        }
    }
    for k in 0..n {
        for l in k..n {
            let v = cov[k * n + l] / mass;
            cov[k * n + l] = v;
            cov[l * n + k] = v;
        }
    }
    Some((mean, cov))
}

/// `Lambda(t) = intercept + slope t`: the exit rate of `x_max` with every
/// class whose lower guard bounds hold at `x_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformizationRate {
    pub x_max: StateVec,
    intercept: f64,
    slope: f64,
}

impl UniformizationRate {
    pub fn new(spec: &ModelSpec, x_max: StateVec) -> Self {
        let (mut intercept, mut slope) = (0.0, 0.0);
        for c in spec.classes() {
            if c.guard.contains_lower(&x_max) {
                let r = c.state_factor.value(&x_max);
                intercept += r * c.time_factor.a;
                slope += r * c.time_factor.slope();
            }
        }
        UniformizationRate {
            x_max,
            intercept,
            slope,
        }
    }

    /// A rate from explicit coefficients, for callers that build their own
    /// dominating function.
    pub fn from_coefficients(x_max: StateVec, intercept: f64, slope: f64) -> Self {
        UniformizationRate {
            x_max,
            intercept,
            slope,
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }
}

/// Per-window probability loss, split by source.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub delta: f64,
    pub mu: f64,
    #[serde(rename = "R")]
    pub r: usize,
    pub bounding_loss: f64,
    pub poisson_loss: f64,
    pub prune_loss: f64,
}

/// Cumulative loss accounting over a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorLedger {
    pub bounding_loss: f64,
    pub poisson_loss: f64,
    pub prune_loss: f64,
    pub steps: Vec<StepRecord>,
}

impl ErrorLedger {
    pub fn record(&mut self, step: StepRecord) {
        self.bounding_loss += step.bounding_loss;
        self.poisson_loss += step.poisson_loss;
        self.prune_loss += step.prune_loss;
        self.steps.push(step);
    }

    pub fn total(&self) -> f64 {
        self.bounding_loss + self.poisson_loss + self.prune_loss
    }

    /// `(bounding, poisson, prune)` as percentages of the total loss.
    pub fn split_percent(&self) -> (f64, f64, f64) {
        let total = self.total();
        if total <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        (
            100.0 * self.bounding_loss / total,
            100.0 * self.poisson_loss / total,
            100.0 * self.prune_loss / total,
        )
    }
}

/// `1 - sum p`, clamped to `[0, 1]`.
pub fn total_error(p: &SparseDistribution) -> f64 {
    (1.0 - p.total_mass()).clamp(0.0, 1.0)
}

/// `p = sum_i weights[i] v(i)`.
pub fn accumulate(v_sequence: &[SparseDistribution], weights: &[f64]) -> SparseDistribution {
    let mut out = SparseDistribution::new();
    for (v, &w) in v_sequence.iter().zip(weights) {
        for (x, p) in v.iter() {
            out.add(x.clone(), w * p);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// window coefficients

/// Everything about a plan that does not depend on the state.
#[derive(Clone, Debug)]
pub(crate) struct WindowCoeffs {
    inv_lambda_start: f64,
    inv_lambda_end: f64,
    class_start: Vec<f64>,
    class_end: Vec<f64>,
    min_ratio: Vec<f64>,
    // exact terms, in normalized time theta = (s - t) / delta:
    // delta * alpha_j(x, s) = r_j(x) (exact_p0[j] + exact_p1[j] theta)
    exact_p0: Vec<f64>,
    exact_p1: Vec<f64>,
    lambda_p0: f64,
    lambda_p1: f64,
    x_max: Vec<u32>,
}

impl WindowCoeffs {
    pub(crate) fn new(spec: &ModelSpec, plan: &StepPlan) -> Self {
        let t0 = plan.t_start;
        let t1 = plan.t_start + plan.delta;
        let d = plan.delta;
        let (l0, l1) = (plan.lambda.value(t0), plan.lambda.value(t1));
        let inv = |l: f64| if l > 0.0 { 1.0 / l } else { 0.0 };
        let (inv0, inv1) = (inv(l0), inv(l1));
        let class_start: Vec<f64> = spec.classes().iter().map(|c| c.time_factor.value(t0)).collect();
        let class_end: Vec<f64> = spec.classes().iter().map(|c| c.time_factor.value(t1)).collect();
        // lambda_j / Lambda is a ratio of affine functions, hence monotone:
        // its minimum sits at an endpoint
        let min_ratio = class_start
            .iter()
            .zip(&class_end)
            .map(|(a, b)| (a * inv0).min(b * inv1))
            .collect();
        WindowCoeffs {
            inv_lambda_start: inv0,
            inv_lambda_end: inv1,
            exact_p0: class_start.iter().map(|a| a * d).collect(),
            exact_p1: spec
                .classes()
                .iter()
                .map(|c| c.time_factor.slope() * d * d)
                .collect(),
            class_start,
            class_end,
            min_ratio,
            lambda_p0: l0 * d,
            lambda_p1: plan.lambda.slope() * d * d,
            x_max: plan.lambda.x_max.0.clone(),
        }
    }

    #[inline]
    fn jump(&self, j: usize, r: f64) -> f64 {
        r * self.min_ratio[j]
    }

    /// `u_0 = 1 - max_s sum_j r_j lambda_j(s) / Lambda(s)`. The sum shares
    /// the denominator, so the ratio is again monotone and the max sits at
    /// an endpoint.
    #[inline]
    fn self_loop(&self, rate_start: f64, rate_end: f64) -> f64 {
        1.0 - (rate_start * self.inv_lambda_start).max(rate_end * self.inv_lambda_end)
    }
}

/// Lower bound `u_j(x)` on the jump probability of class `j` over the plan.
pub fn jump_bound(j: usize, x: &[u32], plan: &StepPlan, spec: &ModelSpec) -> f64 {
    let coeffs = WindowCoeffs::new(spec, plan);
    coeffs.jump(j, spec.classes()[j].state_rate(x))
}

/// Lower bound `u_0(y)` on the self-loop probability over the plan.
pub fn self_loop_bound(y: &[u32], plan: &StepPlan, spec: &ModelSpec) -> Result<f64> {
    let coeffs = WindowCoeffs::new(spec, plan);
    let (mut s0, mut s1) = (0.0, 0.0);
    for (j, c) in spec.classes().iter().enumerate() {
        let r = c.state_rate(y);
        s0 += r * coeffs.class_start[j];
        s1 += r * coeffs.class_end[j];
    }
    checked_self_loop(coeffs.self_loop(s0, s1), y)
}

#[inline]
fn checked_self_loop(u0: f64, y: &[u32]) -> Result<f64> {
    if u0 < -1e-12 || u0.is_nan() {
        return Err(Error::InvalidBound {
            state: y.to_vec(),
            value: u0,
        });
    }
    Ok(u0.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// state arena and dense work vectors

const UNKNOWN: u32 = u32::MAX;
const DISABLED: u32 = u32::MAX - 1;
/// Marks an edge whose target lies outside the dominated window.
const OUTSIDE: u32 = 1 << 31;
/// Upper limit on exactly evaluated terms (polynomial degree stays below 64).
pub const MAX_EXACT_TERMS: usize = 32;

/// Cached transition of a state; valid while the dominating state is.
#[derive(Clone, Copy, Debug, Default)]
struct Edge {
    /// Target index, with `OUTSIDE` set when not dominated.
    dst: u32,
    class: u32,
    rate: f64,
}

const RECIP_LEN: usize = 2 * MAX_EXACT_TERMS + 2;
/// `RECIP[k] = 1 / k`.
const RECIP: [f64; RECIP_LEN] = {
    let mut a = [0.0; RECIP_LEN];
    let mut k = 1;
    while k < RECIP_LEN {
        a[k] = 1.0 / k as f64;
        k += 1;
    }
    a
};

/// Interned states with cached state factors and successors.
///
/// Edge lists depend on the dominating state only, so they survive across
/// windows until it changes. Self-loop coefficients are rebuilt per window.
pub(crate) struct StateSpace<'a> {
    spec: &'a ModelSpec,
    n: usize,
    m: usize,
    coords: Vec<u32>,
    index: FxHashMap<StateVec, u32>,
    succ: Vec<u32>,
    rates: Vec<f64>,
    // dominance w.r.t. dom_key, valid where the stamp equals dom_epoch
    dom_key: Vec<u32>,
    dom_epoch: u32,
    dom_stamp: Vec<u32>,
    dominated: Vec<bool>,
    // edges[i * m..][..edge_len[i]], valid where edge_stamp equals dom_epoch
    edge_stamp: Vec<u32>,
    edge_len: Vec<u32>,
    edges: Vec<Edge>,
    // per window
    window: u32,
    row_stamp: Vec<u32>,
    self_u: Vec<f64>,
    self_p0: Vec<f64>,
    self_p1: Vec<f64>,
}

impl<'a> StateSpace<'a> {
    pub(crate) fn new(spec: &'a ModelSpec) -> Self {
        StateSpace {
            spec,
            n: spec.n(),
            m: spec.m(),
            coords: Vec::new(),
            index: FxHashMap::default(),
            succ: Vec::new(),
            rates: Vec::new(),
            dom_key: Vec::new(),
            dom_epoch: 0,
            dom_stamp: Vec::new(),
            dominated: Vec::new(),
            edge_stamp: Vec::new(),
            edge_len: Vec::new(),
            edges: Vec::new(),
            window: 0,
            row_stamp: Vec::new(),
            self_u: Vec::new(),
            self_p0: Vec::new(),
            self_p1: Vec::new(),
        }
    }

    pub(crate) fn state(&self, i: u32) -> &[u32] {
        let i = i as usize;
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub(crate) fn intern(&mut self, x: &[u32]) -> u32 {
        if let Some(&i) = self.index.get(x) {
            return i;
        }
        let i = self.dom_stamp.len() as u32;
        assert!(i < OUTSIDE, "state space exhausted");
        self.coords.extend_from_slice(x);
        for c in self.spec.classes() {
            if c.guard.contains(x) {
                self.succ.push(UNKNOWN);
                self.rates.push(c.state_factor.value(x));
            } else {
                self.succ.push(DISABLED);
                self.rates.push(0.0);
            }
        }
        self.dom_stamp.push(0);
        self.dominated.push(false);
        self.edge_stamp.push(0);
        self.edge_len.push(0);
        self.edges.resize(self.edges.len() + self.m, Edge::default());
        self.row_stamp.push(0);
        self.self_u.push(0.0);
        self.self_p0.push(0.0);
        self.self_p1.push(0.0);
        self.index.insert(StateVec(x.to_vec()), i);
        i
    }

    #[inline]
    fn successor(&mut self, i: u32, j: usize) -> u32 {
        let slot = i as usize * self.m + j;
        let s = self.succ[slot];
        if s != UNKNOWN {
            return s;
        }
        let x = self.state(i);
        let change = &self.spec.classes()[j].change;
        let y: Vec<u32> = x
            .iter()
            .zip(change)
            .map(|(&a, &w)| (a as i64 + w as i64) as u32)
            .collect();
        let s = self.intern(&y);
        self.succ[slot] = s;
        s
    }

    fn begin_window(&mut self, x_max: &[u32]) {
        self.window = self.window.wrapping_add(1);
        if self.window == 0 {
            self.row_stamp.fill(0);
            self.window = 1;
        }
        if self.dom_epoch == 0 || self.dom_key != x_max {
            self.dom_key = x_max.to_vec();
            self.dom_epoch = self.dom_epoch.wrapping_add(1);
            if self.dom_epoch == 0 {
                self.dom_stamp.fill(0);
                self.edge_stamp.fill(0);
                self.dom_epoch = 1;
            }
        }
    }

    #[inline]
    fn is_dominated(&mut self, i: u32) -> bool {
        let iu = i as usize;
        if self.dom_stamp[iu] != self.dom_epoch {
            self.dom_stamp[iu] = self.dom_epoch;
            self.dominated[iu] = self.state(i).iter().zip(&self.dom_key).all(|(a, b)| a <= b);
        }
        self.dominated[iu]
    }

    fn ensure_edges(&mut self, i: u32) {
        let iu = i as usize;
        if self.edge_stamp[iu] == self.dom_epoch {
            return;
        }
        let mut len = 0;
        for j in 0..self.m {
            let rate = self.rates[iu * self.m + j];
            if rate == 0.0 {
                continue;
            }
            let y = self.successor(i, j);
            let dst = if self.is_dominated(y) { y } else { y | OUTSIDE };
            self.edges[iu * self.m + len] = Edge {
                dst,
                class: j as u32,
                rate,
            };
            len += 1;
        }
        self.edge_len[iu] = len as u32;
        self.edge_stamp[iu] = self.dom_epoch;
    }

    /// Builds the window row of `i` unless present.
    fn ensure_row(&mut self, i: u32, coeffs: &WindowCoeffs) -> Result<()> {
        let iu = i as usize;
        if self.row_stamp[iu] == self.window {
            return Ok(());
        }
        self.ensure_edges(i);
        let (mut s0, mut s1, mut q0, mut q1) = (0.0, 0.0, 0.0, 0.0);
        for e in self.edges_of(i) {
            let j = e.class as usize;
            s0 += e.rate * coeffs.class_start[j];
            s1 += e.rate * coeffs.class_end[j];
            q0 += e.rate * coeffs.exact_p0[j];
            q1 += e.rate * coeffs.exact_p1[j];
        }
        let u0 = checked_self_loop(coeffs.self_loop(s0, s1), self.state(i))?;
        // self-loop rate Lambda(s) - alpha_0(x, s), non-negative on the window
        let (mut p0, mut p1) = (coeffs.lambda_p0 - q0, coeffs.lambda_p1 - q1);
        let scale = 1e-12 * (coeffs.lambda_p0.abs() + coeffs.lambda_p1.abs());
        if p0 < -scale || p0 + p1 < -scale {
            return Err(Error::NotDominated {
                state: self.state(i).to_vec(),
                x_max: coeffs.x_max.clone(),
            });
        }
        if p0 < 0.0 {
            p0 = 0.0;
        }
        if p0 + p1 < 0.0 {
            p1 = -p0;
        }
        self.row_stamp[iu] = self.window;
        self.self_u[iu] = u0;
        self.self_p0[iu] = p0;
        self.self_p1[iu] = p1;
        Ok(())
    }

    fn ensure_rows(&mut self, states: &[u32], coeffs: &WindowCoeffs) -> Result<()> {
        for &i in states {
            self.ensure_row(i, coeffs)?;
        }
        Ok(())
    }

    #[inline]
    fn edges_of(&self, i: u32) -> &[Edge] {
        let base = i as usize * self.m;
        &self.edges[base..base + self.edge_len[i as usize] as usize]
    }
}

/// Dense vector over arena indices with an explicit active list.
#[derive(Default)]
pub(crate) struct DenseVec {
    vals: Vec<f64>,
    mark: Vec<bool>,
    active: Vec<u32>,
}

impl DenseVec {
    #[cold]
    fn grow(&mut self, iu: usize) {
        let len = (iu + 1).max(2 * self.vals.len());
        self.vals.resize(len, 0.0);
        self.mark.resize(len, false);
    }

    #[inline(always)]
    fn add(&mut self, i: u32, v: f64) {
        let iu = i as usize;
        if iu >= self.vals.len() {
            self.grow(iu);
        }
        if !self.mark[iu] {
            self.mark[iu] = true;
            self.active.push(i);
        }
        self.vals[iu] += v;
    }

    fn clear(&mut self) {
        for &i in &self.active {
            self.vals[i as usize] = 0.0;
            self.mark[i as usize] = false;
        }
        self.active.clear();
    }

    pub(crate) fn len(&self) -> usize {
        self.active.len()
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (u32, f64)> + Clone + '_ {
        self.active.iter().map(move |&i| (i, self.vals[i as usize]))
    }

    fn sum(&self) -> f64 {
        self.iter().map(|(_, v)| v).collect::<CompensatedSum>().value()
    }

    /// Drops entries below `threshold` (and exact zeros) and returns their
    /// sum; every kept entry is added to `acc` with the given weight.
    fn prune_into(&mut self, threshold: f64, weight: f64, mut acc: Option<&mut DenseVec>) -> f64 {
        let mut removed = CompensatedSum::new();
        let (vals, mark) = (&mut self.vals, &mut self.mark);
        self.active.retain(|&i| {
            let v = vals[i as usize];
            if v < threshold || v <= 0.0 {
                removed.add(v);
                vals[i as usize] = 0.0;
                mark[i as usize] = false;
                false
            } else {
                if let Some(acc) = acc.as_deref_mut() {
                    acc.add(i, weight * v);
                }
                true
            }
        });
        removed.value().max(0.0)
    }

    fn prune(&mut self, threshold: f64) -> f64 {
        self.prune_into(threshold, 0.0, None)
    }
}

/// Polynomials in normalized time, one per active state.
#[derive(Default)]
struct PolyVec {
    stride: usize,
    coeffs: Vec<f64>,
    mark: Vec<bool>,
    active: Vec<u32>,
}

impl PolyVec {
    fn with_stride(stride: usize) -> Self {
        PolyVec {
            stride,
            ..Default::default()
        }
    }

    #[inline]
    fn slot(&mut self, i: u32) -> &mut [f64] {
        let iu = i as usize;
        if iu >= self.mark.len() {
            let len = (iu + 1).max(2 * self.mark.len());
            self.mark.resize(len, false);
            self.coeffs.resize(len * self.stride, 0.0);
        }
        if !self.mark[iu] {
            self.mark[iu] = true;
            self.active.push(i);
        }
        &mut self.coeffs[iu * self.stride..(iu + 1) * self.stride]
    }

    #[inline]
    fn get(&self, i: u32) -> &[f64] {
        let iu = i as usize;
        &self.coeffs[iu * self.stride..(iu + 1) * self.stride]
    }

    fn clear(&mut self) {
        for &i in &self.active {
            let iu = i as usize;
            self.coeffs[iu * self.stride..(iu + 1) * self.stride].fill(0.0);
            self.mark[iu] = false;
        }
        self.active.clear();
    }

    /// Drops states whose value at the window end, scaled by `norm`, is
    /// below `threshold`; returns the scaled removed mass. Kept states add
    /// `weight` times their value to `acc`.
    fn prune_into(&mut self, norm: f64, threshold: f64, weight: f64, acc: &mut DenseVec) -> f64 {
        let mut removed = CompensatedSum::new();
        let stride = self.stride;
        let (coeffs, mark) = (&mut self.coeffs, &mut self.mark);
        self.active.retain(|&i| {
            let iu = i as usize;
            let c = &mut coeffs[iu * stride..(iu + 1) * stride];
            let value: f64 = c.iter().sum();
            let scaled = value * norm;
            if scaled < threshold || value <= 0.0 {
                removed.add(scaled);
                c.fill(0.0);
                mark[iu] = false;
                false
            } else {
                acc.add(i, weight * value);
                true
            }
        });
        removed.value().max(0.0)
    }
}

// ---------------------------------------------------------------------------
// window evaluation

/// Mass that reached a state outside the dominated window.
#[derive(Clone, Debug, PartialEq)]
pub struct Exceedance {
    pub state: StateVec,
    pub mass: f64,
}

#[derive(Debug)]
pub(crate) enum WindowFailure {
    Exceeded(Exceedance),
    Error(Error),
}

impl From<Error> for WindowFailure {
    fn from(e: Error) -> Self {
        WindowFailure::Error(e)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct WindowReport {
    pub poisson_loss: f64,
    pub prune_loss: f64,
    pub bounding_loss: f64,
    /// States that carried mass during the window.
    pub window_size: usize,
}

/// Runs windows over a persistent state arena. The current distribution
/// lives in `current`; a window writes into a scratch vector and only
/// replaces `current` on `commit`, so a failed attempt can be redone.
pub(crate) struct Explorer<'a> {
    pub(crate) space: StateSpace<'a>,
    current: DenseVec,
    pending: DenseVec,
    seed: DenseVec,
    buf_a: DenseVec,
    buf_b: DenseVec,
    overflow: DenseVec,
    poly_a: PolyVec,
    poly_b: PolyVec,
}

impl<'a> Explorer<'a> {
    pub(crate) fn new(spec: &'a ModelSpec) -> Self {
        Explorer {
            space: StateSpace::new(spec),
            current: DenseVec::default(),
            pending: DenseVec::default(),
            seed: DenseVec::default(),
            buf_a: DenseVec::default(),
            buf_b: DenseVec::default(),
            overflow: DenseVec::default(),
            poly_a: PolyVec::default(),
            poly_b: PolyVec::default(),
        }
    }

    pub(crate) fn load(&mut self, p: &SparseDistribution) {
        self.current.clear();
        for (x, v) in p.iter() {
            let i = self.space.intern(x);
            self.current.add(i, v);
        }
    }

    pub(crate) fn export(&self) -> SparseDistribution {
        export_vec(&self.space, &self.current)
    }

    pub(crate) fn current(&self) -> &DenseVec {
        &self.current
    }

    /// Componentwise maximum over the current support.
    pub(crate) fn support_max(&self) -> Vec<u32> {
        let mut out = vec![0; self.space.n];
        for (i, _) in self.current.iter() {
            for (a, &b) in out.iter_mut().zip(self.space.state(i)) {
                *a = (*a).max(b);
            }
        }
        out
    }

    pub(crate) fn moments(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let space = &self.space;
        moments_of(
            space.n,
            self.current.iter().map(move |(i, v)| (space.state(i), v)),
        )
    }

    pub(crate) fn support_states(&self) -> Vec<StateVec> {
        self.current
            .iter()
            .map(|(i, _)| StateVec(self.space.state(i).to_vec()))
            .collect()
    }

    pub(crate) fn commit(&mut self) {
        std::mem::swap(&mut self.current, &mut self.pending);
        self.pending.clear();
    }

    /// Evaluates one window into the pending buffer.
    ///
    /// Terms `0..k` (with `k = exact_terms`) are exact; term `k` starts the
    /// bounded chain from the exact `k - 1` jump polynomial, and every later
    /// term applies the min-bound matrix once more.
    pub(crate) fn advance(
        &mut self,
        plan: &StepPlan,
        delta_threshold: f64,
        exact_terms: usize,
    ) -> Result<WindowReport, WindowFailure> {
        let spec = self.space.spec;
        let coeffs = WindowCoeffs::new(spec, plan);
        let weights = &plan.truncation.weights;
        let r = plan.truncation.right_point;
        let mu = plan.truncation.mu;
        let Explorer {
            space,
            current,
            pending,
            seed,
            buf_a,
            buf_b,
            overflow,
            poly_a,
            poly_b,
        } = self;

        space.begin_window(&coeffs.x_max);
        pending.clear();
        for &i in &current.active {
            if !space.is_dominated(i) {
                return Err(Error::NotDominated {
                    state: space.state(i).to_vec(),
                    x_max: coeffs.x_max.clone(),
                }
                .into());
            }
        }
        let mass_in = current.sum();
        for (i, v) in current.iter() {
            pending.add(i, weights[0] * v);
        }

        // tails[i] = weight of every term fed by a jump-count-i vector
        let mut tails = vec![0.0; r + 2];
        for i in (0..=r).rev() {
            tails[i] = tails[i + 1] + weights[i];
        }
        let mut pruned = CompensatedSum::new();

        let k = exact_terms.clamp(1, MAX_EXACT_TERMS).min(r + 1);
        let stride = 2 * (k - 1) + 1;
        if poly_a.stride != stride {
            *poly_a = PolyVec::with_stride(stride);
            *poly_b = PolyVec::with_stride(stride);
        }
        poly_a.clear();
        for (i, v) in current.iter() {
            poly_a.slot(i)[0] = v;
        }
        let e_mu = (-mu).exp();
        // mu^level / level!
        let mut level_scale = 1.0;
        for level in 1..k {
            level_scale *= mu / level as f64;
            space.ensure_rows(&poly_a.active, &coeffs)?;
            poly_b.clear();
            exact_sweep(space, &coeffs, poly_a, poly_b, overflow, 2 * (level - 1));
            let norm = 1.0 / level_scale;
            let lost = settle_overflow(space, overflow, delta_threshold, norm)?;
            std::mem::swap(poly_a, poly_b);
            let removed = poly_a.prune_into(norm, delta_threshold, e_mu, pending);
            pruned.add((lost * norm + removed) * tails[level]);
        }

        if r >= k {
            // v(k) = U (k! / mu^k) int_0^1 Phi_{k-1}(theta) Lambda(theta) dtheta
            space.ensure_rows(&poly_a.active, &coeffs)?;
            let seed_norm = k as f64 / (level_scale * mu);
            let deg = 2 * (k - 1);
            seed.clear();
            for &i in &poly_a.active {
                let g = integral_at_one(&poly_a.get(i)[..=deg], coeffs.lambda_p0, coeffs.lambda_p1);
                seed.add(i, g * seed_norm);
            }
            buf_a.clear();
            bounded_sweep(space, &coeffs, seed, buf_a, overflow);
            for i in k..=r {
                if i > k {
                    space.ensure_rows(&buf_a.active, &coeffs)?;
                    buf_b.clear();
                    bounded_sweep(space, &coeffs, buf_a, buf_b, overflow);
                    std::mem::swap(buf_a, buf_b);
                }
                let lost = settle_overflow(space, overflow, delta_threshold, 1.0)?;
                let removed = buf_a.prune_into(delta_threshold, weights[i], Some(pending));
                pruned.add((lost + removed) * tails[i]);
            }
            seed.clear();
            buf_a.clear();
            buf_b.clear();
        }
        poly_a.clear();
        poly_b.clear();

        let window_size = pending.len();
        pruned.add(pending.prune(delta_threshold));
        let mass_out = pending.sum();
        if !(mass_out > 0.0) {
            return Err(Error::MassExhausted(plan.t_start + plan.delta).into());
        }
        let poisson_loss = mass_in * (1.0 - plan.truncation.captured_mass).max(0.0);
        let prune_loss = pruned.value();
        let bounding_loss = ((mass_in - mass_out) - poisson_loss - prune_loss).max(0.0);
        Ok(WindowReport {
            poisson_loss,
            prune_loss,
            bounding_loss,
            window_size,
        })
    }
}

fn export_vec(space: &StateSpace<'_>, v: &DenseVec) -> SparseDistribution {
    v.iter()
        .map(|(i, p)| (StateVec(space.state(i).to_vec()), p))
        .collect()
}

/// `dst = U src`. Rows of every source must be built.
fn bounded_sweep(
    space: &StateSpace<'_>,
    coeffs: &WindowCoeffs,
    src: &DenseVec,
    dst: &mut DenseVec,
    overflow: &mut DenseVec,
) {
    let ratio = &coeffs.min_ratio[..];
    for (i, v) in src.iter() {
        for e in space.edges_of(i) {
            let p = v * e.rate * ratio[e.class as usize];
            if e.dst & OUTSIDE == 0 {
                dst.add(e.dst, p);
            } else {
                overflow.add(e.dst & !OUTSIDE, p);
            }
        }
        let u0 = space.self_u[i as usize];
        if u0 > 0.0 {
            dst.add(i, v * u0);
        }
    }
}

/// One exact level: `Phi_new(y, theta) = sum_x int_0^theta Phi(x, s) A(x, y, s) ds`
/// with `A` affine in the normalized time. Rows of every source must be built.
fn exact_sweep(
    space: &StateSpace<'_>,
    coeffs: &WindowCoeffs,
    src: &PolyVec,
    dst: &mut PolyVec,
    overflow: &mut DenseVec,
    src_degree: usize,
) {
    let mut c = [0.0f64; 2 * MAX_EXACT_TERMS];
    let c = &mut c[..=src_degree];
    for &i in &src.active {
        c.copy_from_slice(&src.get(i)[..=src_degree]);
        for e in space.edges_of(i) {
            let j = e.class as usize;
            let (p0, p1) = (e.rate * coeffs.exact_p0[j], e.rate * coeffs.exact_p1[j]);
            if e.dst & OUTSIDE == 0 {
                integrate_into(dst.slot(e.dst), c, p0, p1);
            } else {
                overflow.add(e.dst & !OUTSIDE, integral_at_one(c, p0, p1));
            }
        }
        let iu = i as usize;
        integrate_into(dst.slot(i), c, space.self_p0[iu], space.self_p1[iu]);
    }
}

/// `out += int_0^theta c(s) (p0 + p1 s) ds` as polynomial coefficients.
#[inline]
fn integrate_into(out: &mut [f64], c: &[f64], p0: f64, p1: f64) {
    for (k, &ck) in c.iter().enumerate() {
        if ck == 0.0 {
            continue;
        }
        out[k + 1] += ck * p0 * RECIP[k + 1];
        out[k + 2] += ck * p1 * RECIP[k + 2];
    }
}

#[inline]
fn integral_at_one(c: &[f64], p0: f64, p1: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, &ck)| ck * (p0 * RECIP[k + 1] + p1 * RECIP[k + 2]))
        .sum()
}

/// Clears the overflow buffer. Mass at or above the pruning threshold
/// (after scaling by `norm`) means the window was too small; smaller
/// amounts would have been pruned anyway and are returned unscaled.
fn settle_overflow(
    space: &StateSpace<'_>,
    overflow: &mut DenseVec,
    delta_threshold: f64,
    norm: f64,
) -> Result<f64, WindowFailure> {
    if overflow.active.is_empty() {
        return Ok(0.0);
    }
    let mut lost = CompensatedSum::new();
    let mut worst: Option<(u32, f64)> = None;
    for (i, v) in overflow.iter() {
        let equiv = v * norm;
        if equiv > 0.0 && equiv >= delta_threshold && worst.map_or(true, |(_, w)| equiv > w) {
            worst = Some((i, equiv));
        }
        lost.add(v);
    }
    overflow.clear();
    if let Some((i, mass)) = worst {
        return Err(WindowFailure::Exceeded(Exceedance {
            state: StateVec(space.state(i).to_vec()),
            mass,
        }));
    }
    Ok(lost.value())
}

/// Result of a single lower-bounded DTMC step.
#[derive(Clone, Debug)]
pub struct DtmcStep {
    pub next: SparseDistribution,
    pub prune_loss: f64,
    /// Mass lost to the min-bounds, `sum v - sum next - prune_loss`.
    pub step_defect: f64,
}

/// One step `v' = U v` of the lower-bounded DTMC, followed by pruning.
pub fn dtmc_step(
    v: &SparseDistribution,
    plan: &StepPlan,
    spec: &ModelSpec,
    delta_threshold: f64,
) -> Result<DtmcStep> {
    let coeffs = WindowCoeffs::new(spec, plan);
    let mut space = StateSpace::new(spec);
    space.begin_window(&coeffs.x_max);
    let mut src = DenseVec::default();
    for (x, p) in v.iter() {
        let i = space.intern(x);
        src.add(i, p);
    }
    space.ensure_rows(&src.active, &coeffs)?;
    let mut dst = DenseVec::default();
    let mut overflow = DenseVec::default();
    bounded_sweep(&space, &coeffs, &src, &mut dst, &mut overflow);
    let mut prune_loss = match settle_overflow(&space, &mut overflow, delta_threshold, 1.0) {
        Ok(lost) => lost,
        Err(WindowFailure::Error(e)) => return Err(e),
        Err(WindowFailure::Exceeded(ex)) => {
            return Err(Error::NotDominated {
                state: ex.state.0,
                x_max: coeffs.x_max,
            })
        }
    };
    prune_loss += dst.prune(delta_threshold);
    let next = export_vec(&space, &dst);
    let step_defect = (v.total_mass() - next.total_mass() - prune_loss).max(0.0);
    Ok(DtmcStep {
        next,
        prune_loss,
        step_defect,
    })
}

/// Checks at `samples` time points that `Lambda` dominates the exit rate of
/// every given state, and that the bounds of each state are below the
/// instantaneous jump probabilities and sum to at most one.
pub fn check_plan_bounds(
    plan: &StepPlan,
    spec: &ModelSpec,
    states: &[StateVec],
    samples: usize,
) -> Result<()> {
    let coeffs = WindowCoeffs::new(spec, plan);
    let tol = 1e-12;
    for x in states {
        let u: Vec<f64> = (0..spec.m())
            .map(|j| coeffs.jump(j, spec.classes()[j].state_rate(x)))
            .collect();
        let u0 = self_loop_bound(x, plan, spec)?;
        if u0 + u.iter().sum::<f64>() > 1.0 + tol {
            return Err(Error::InvalidBound {
                state: x.0.clone(),
                value: u0 + u.iter().sum::<f64>(),
            });
        }
        for s in 0..samples {
            let frac = if samples > 1 { s as f64 / (samples - 1) as f64 } else { 0.0 };
            let t = plan.t_start + frac * plan.delta;
            let lambda = plan.lambda.value(t);
            let exit = spec.exit_rate(x, t);
            if exit > lambda * (1.0 + tol) + tol {
                return Err(Error::NotDominated {
                    state: x.0.clone(),
                    x_max: plan.lambda.x_max.0.clone(),
                });
            }
            if lambda <= 0.0 {
                continue;
            }
            for (j, c) in spec.classes().iter().enumerate() {
                let p = c.time_factor.value(t) * c.state_rate(x) / lambda;
                if u[j] > p + tol {
                    return Err(Error::InvalidBound {
                        state: x.0.clone(),
                        value: u[j],
                    });
                }
            }
            if u0 > 1.0 - exit / lambda + tol {
                return Err(Error::InvalidBound {
                    state: x.0.clone(),
                    value: u0,
                });
            }
        }
    }
    Ok(())
}

//! Markov population models described by transition classes.
//!
//! A class fires in every state inside its guard, moves the state by a
//! constant change vector and does so at a separable rate
//! `lambda(t) * r(x)`, where `lambda` is affine in time and `r` is a
//! monomial in the populations. Guards are conjunctions of per-species
//! bounds.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A population vector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(pub Vec<u32>);

impl StateVec {
    pub fn new(populations: Vec<u32>) -> Self {
        StateVec(populations)
    }

    pub fn zeros(n: usize) -> Self {
        StateVec(vec![0; n])
    }

    /// `self + change`, or `None` when a component would go negative.
    pub fn apply(&self, change: &[i32]) -> Option<StateVec> {
        let mut out = Vec::with_capacity(self.0.len());
        for (&x, &w) in self.0.iter().zip(change) {
            let y = x as i64 + w as i64;
            if y < 0 || y > u32::MAX as i64 {
                return None;
            }
            out.push(y as u32);
        }
        Some(StateVec(out))
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &[u32]) -> bool {
        self.0.iter().zip(other).all(|(a, b)| a <= b)
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

impl Deref for StateVec {
    type Target = [u32];
    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl Borrow<[u32]> for StateVec {
    fn borrow(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for StateVec {
    fn from(v: Vec<u32>) -> Self {
        StateVec(v)
    }
}

impl fmt::Debug for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeKind {
    Constant,
    Affine,
}

/// Time-dependent part `lambda(t) = a + b t` of a separable rate.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFactor {
    pub kind: TimeKind,
    pub a: f64,
    pub b: f64,
    /// Horizon beyond which the factor is undefined.
    pub valid_until: f64,
}

impl TimeFactor {
    pub fn constant(a: f64) -> Self {
        TimeFactor {
            kind: TimeKind::Constant,
            a,
            b: 0.0,
            valid_until: f64::INFINITY,
        }
    }

    pub fn affine(a: f64, b: f64, valid_until: f64) -> Self {
        TimeFactor {
            kind: TimeKind::Affine,
            a,
            b,
            valid_until,
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.a + self.slope() * t
    }

    #[inline]
    pub fn slope(&self) -> f64 {
        match self.kind {
            TimeKind::Constant => 0.0,
            TimeKind::Affine => self.b,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.slope() == 0.0
    }

    fn validate(&self, class: &str) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() || self.valid_until.is_nan() {
            return Err(Error::InvalidModel(format!(
                "class '{class}': non-finite time factor"
            )));
        }
        if self.valid_until < 0.0 {
            return Err(Error::InvalidModel(format!(
                "class '{class}': negative validity horizon"
            )));
        }
        // positive at t = 0 and at the far end of the validity range
        let end_ok = if self.valid_until.is_finite() {
            self.value(self.valid_until) > 0.0
        } else {
            self.slope() >= 0.0
        };
        if self.a <= 0.0 || !end_ok {
            return Err(Error::InvalidModel(format!(
                "class '{class}': time factor must stay positive on [0, {}]",
                self.valid_until
            )));
        }
        Ok(())
    }
}

/// State-dependent part `r(x) = c * prod_k x_k^e_k` of a separable rate.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFactor {
    pub constant: f64,
    pub exponents: Vec<u32>,
}

impl StateFactor {
    #[inline]
    pub fn value(&self, x: &[u32]) -> f64 {
        let mut r = self.constant;
        for (&xk, &e) in x.iter().zip(&self.exponents) {
            match e {
                0 => {}
                1 => r *= xk as f64,
                2 => r *= (xk as f64) * (xk as f64),
                _ => r *= (xk as f64).powi(e as i32),
            }
        }
        r
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Conjunction of per-species bounds `min_k <= x_k <= max_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Guard {
    pub lower: Vec<u32>,
    pub upper: Vec<Option<u32>>,
}

impl Guard {
    pub fn unrestricted(n: usize) -> Self {
        Guard {
            lower: vec![0; n],
            upper: vec![None; n],
        }
    }

    #[inline]
    pub fn contains(&self, x: &[u32]) -> bool {
        self.contains_lower(x)
            && x
                .iter()
                .zip(&self.upper)
                .all(|(&xk, u)| u.map_or(true, |u| xk <= u))
    }

    /// Only the lower bounds. This part of a guard is upward closed, which
    /// is what the dominating-state construction relies on.
    #[inline]
    pub fn contains_lower(&self, x: &[u32]) -> bool {
        x.iter().zip(&self.lower).all(|(&xk, &l)| xk >= l)
    }
}

/// A transition class `(guard, change, rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionClass {
    pub name: String,
    pub guard: Guard,
    pub change: Vec<i32>,
    pub time_factor: TimeFactor,
    pub state_factor: StateFactor,
}

impl TransitionClass {
    /// `r_j(x)` if `x` is inside the guard, else zero.
    #[inline]
    pub fn state_rate(&self, x: &[u32]) -> f64 {
        if self.guard.contains(x) {
            self.state_factor.value(x)
        } else {
            0.0
        }
    }
}

/// A validated population model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    species: Vec<String>,
    classes: Vec<TransitionClass>,
    initial: Vec<(StateVec, f64)>,
    horizon: f64,
    caps: Vec<Option<u32>>,
}

impl ModelSpec {
    pub fn new(
        species: Vec<String>,
        classes: Vec<TransitionClass>,
        initial: Vec<(StateVec, f64)>,
        horizon: f64,
    ) -> Result<Self> {
        let n = species.len();
        if n == 0 {
            return Err(Error::InvalidModel("no species".into()));
        }
        if classes.is_empty() {
            return Err(Error::InvalidModel("no transition classes".into()));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidModel(format!("bad horizon {horizon}")));
        }
        for c in &classes {
            validate_class(c, &species)?;
            if c.time_factor.valid_until < horizon {
                return Err(Error::InvalidModel(format!(
                    "class '{}' is only valid until {} but the horizon is {horizon}",
                    c.name, c.time_factor.valid_until
                )));
            }
        }
        for (i, a) in classes.iter().enumerate() {
            for b in &classes[i + 1..] {
                // classes sharing a change vector simply add up in the
                // generator; only an exact duplicate (same guard too) is
                // rejected as a malformed model
                if a.change == b.change && a.guard == b.guard {
                    return Err(Error::DuplicateChange {
                        first: a.name.clone(),
                        second: b.name.clone(),
                    });
                }
            }
        }
        if initial.is_empty() {
            return Err(Error::InvalidModel("empty initial distribution".into()));
        }
        let mut total = 0.0;
        for (x, p) in &initial {
            if x.len() != n {
                return Err(Error::InvalidModel(format!(
                    "initial state {x:?} has {} components, expected {n}",
                    x.len()
                )));
            }
            if !(*p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "initial probability {p} of {x:?} is not positive"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(total));
        }
        let caps = dimension_caps(&classes, &initial, n);
        Ok(ModelSpec {
            species,
            classes,
            initial,
            horizon,
            caps,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn classes(&self) -> &[TransitionClass] {
        &self.classes
    }

    pub fn initial(&self) -> &[(StateVec, f64)] {
        &self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of species.
    pub fn n(&self) -> usize {
        self.species.len()
    }

    /// Number of transition classes.
    pub fn m(&self) -> usize {
        self.classes.len()
    }

    /// Sound upper bounds on each population over every reachable state,
    /// derived from conservation laws and guard upper bounds.
    pub fn caps(&self) -> &[Option<u32>] {
        &self.caps
    }

    /// Copy of the model with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        ModelSpec::new(
            self.species.clone(),
            self.classes.clone(),
            self.initial.clone(),
            horizon,
        )
    }

    pub fn enabled_classes(&self, x: &[u32]) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.guard.contains(x))
            .map(|(j, _)| j)
            .collect()
    }

    /// `alpha_j(x, t)`; zero outside the guard.
    pub fn rate(&self, j: usize, x: &[u32], t: f64) -> Result<f64> {
        let c = &self.classes[j];
        if t > c.time_factor.valid_until {
            return Err(Error::TimeOutOfRange {
                class: c.name.clone(),
                t,
                valid_until: c.time_factor.valid_until,
            });
        }
        Ok(c.time_factor.value(t) * c.state_rate(x))
    }

    /// Sum of the rates of all enabled classes. Callers keep `t` within the
    /// horizon, where every time factor is defined.
    pub fn exit_rate(&self, x: &[u32], t: f64) -> f64 {
        self.classes
            .iter()
            .map(|c| c.time_factor.value(t) * c.state_rate(x))
            .sum()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }
}

fn validate_class(c: &TransitionClass, species: &[String]) -> Result<()> {
    let n = species.len();
    let bad_len = c.change.len() != n
        || c.guard.lower.len() != n
        || c.guard.upper.len() != n
        || c.state_factor.exponents.len() != n;
    if bad_len {
        return Err(Error::InvalidModel(format!(
            "class '{}' has vectors of the wrong length",
            c.name
        )));
    }
    if c.change.iter().all(|&w| w == 0) {
        return Err(Error::InvalidModel(format!(
            "class '{}' has a zero change vector",
            c.name
        )));
    }
    for k in 0..n {
        if let Some(u) = c.guard.upper[k] {
            if u < c.guard.lower[k] {
                return Err(Error::InvalidModel(format!(
                    "class '{}' has an empty guard on '{}'",
                    c.name, species[k]
                )));
            }
        }
        if (c.guard.lower[k] as i64) + (c.change[k] as i64) < 0 {
            return Err(Error::ClosureViolation {
                class: c.name.clone(),
                species: species[k].clone(),
            });
        }
    }
    if !(c.state_factor.constant > 0.0) || !c.state_factor.constant.is_finite() {
        return Err(Error::InvalidModel(format!(
            "class '{}' needs a positive rate constant",
            c.name
        )));
    }
    c.time_factor.validate(&c.name)
}

/// Upper bounds per species from (a) non-negative conservation laws of the
/// stoichiometry and (b) guard upper bounds on every class that increases a
/// species.
fn dimension_caps(
    classes: &[TransitionClass],
    initial: &[(StateVec, f64)],
    n: usize,
) -> Vec<Option<u32>> {
    let mut caps: Vec<Option<u64>> = vec![None; n];
    let init_max: Vec<u64> = (0..n)
        .map(|k| initial.iter().map(|(x, _)| x[k] as u64).max().unwrap_or(0))
        .collect();

    let tighten = |caps: &mut Vec<Option<u64>>, k: usize, bound: u64| {
        caps[k] = Some(caps[k].map_or(bound, |c| c.min(bound)));
    };

    for k in 0..n {
        let mut bound = Some(init_max[k]);
        for c in classes.iter().filter(|c| c.change[k] > 0) {
            bound = match (bound, c.guard.upper[k]) {
                (Some(b), Some(u)) => Some(b.max(u as u64 + c.change[k] as u64)),
                _ => None,
            };
        }
        if let Some(b) = bound {
            tighten(&mut caps, k, b);
        }
    }

    if let Some(flows) = semiflows(classes, n) {
        for y in flows {
            let total: u64 = initial
                .iter()
                .map(|(x, _)| x.iter().zip(&y).map(|(&a, &c)| a as u64 * c).sum::<u64>())
                .max()
                .unwrap_or(0);
            for k in 0..n {
                if y[k] > 0 {
                    tighten(&mut caps, k, total / y[k]);
                }
            }
        }
    }
    caps.into_iter()
        .map(|c| c.map(|c| c.min(u32::MAX as u64) as u32))
        .collect()
}

/// Minimal non-negative integer vectors `y` with `y . w_j = 0` for every
/// class (Farkas elimination). `None` if the elimination blows up.
fn semiflows(classes: &[TransitionClass], n: usize) -> Option<Vec<Vec<u64>>> {
    const MAX_ROWS: usize = 4096;
    let m = classes.len();
    // each row: (coefficients against the classes, combination of species)
    let mut rows: Vec<(Vec<i64>, Vec<i64>)> = (0..n)
        .map(|k| {
            let c = classes.iter().map(|cl| cl.change[k] as i64).collect();
            let mut id = vec![0; n];
            id[k] = 1;
            (c, id)
        })
        .collect();
    for j in 0..m {
        let mut next = Vec::new();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for r in rows {
            match r.0[j].signum() {
                0 => next.push(r),
                1 => pos.push(r),
                _ => neg.push(r),
            }
        }
        for p in &pos {
            for q in &neg {
                let a = -q.0[j];
                let b = p.0[j];
                let c: Vec<i64> = p.0.iter().zip(&q.0).map(|(x, y)| a * x + b * y).collect();
                let id: Vec<i64> = p.1.iter().zip(&q.1).map(|(x, y)| a * x + b * y).collect();
                let g = c.iter().chain(&id).fold(0i64, |g, &v| gcd(g, v.abs()));
                let g = g.max(1);
                next.push((
                    c.into_iter().map(|v| v / g).collect(),
                    id.into_iter().map(|v| v / g).collect(),
                ));
                if next.len() > MAX_ROWS {
                    return None;
                }
            }
        }
        next.sort();
        next.dedup();
        rows = next;
    }
    Some(
        rows.into_iter()
            .map(|(_, id)| id.into_iter().map(|v| v as u64).collect())
            .collect(),
    )
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// ---------------------------------------------------------------------------
// model file

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    species: Vec<String>,
    horizon: f64,
    initial: Vec<InitialEntry>,
    classes: Vec<ClassEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialEntry {
    state: Vec<u32>,
    prob: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassEntry {
    name: String,
    #[serde(default)]
    guard: Vec<GuardEntry>,
    change: Vec<i32>,
    rate: RateEntry,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuardEntry {
    var: String,
    #[serde(default)]
    min: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateEntry {
    constant: f64,
    exponents: Vec<u32>,
    time: TimeEntry,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeEntry {
    kind: TimeKind,
    a: f64,
    #[serde(default)]
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid_until: Option<f64>,
}

impl From<&ModelSpec> for ModelFile {
    fn from(spec: &ModelSpec) -> Self {
        let classes = spec
            .classes
            .iter()
            .map(|c| ClassEntry {
                name: c.name.clone(),
                guard: (0..spec.n())
                    .filter(|&k| c.guard.lower[k] > 0 || c.guard.upper[k].is_some())
                    .map(|k| GuardEntry {
                        var: spec.species[k].clone(),
                        min: c.guard.lower[k],
                        max: c.guard.upper[k],
                    })
                    .collect(),
                change: c.change.clone(),
                rate: RateEntry {
                    constant: c.state_factor.constant,
                    exponents: c.state_factor.exponents.clone(),
                    time: TimeEntry {
                        kind: c.time_factor.kind,
                        a: c.time_factor.a,
                        b: c.time_factor.b,
                        valid_until: Some(c.time_factor.valid_until).filter(|v| v.is_finite()),
                    },
                },
            })
            .collect();
        ModelFile {
            species: spec.species.clone(),
            horizon: spec.horizon,
            initial: spec
                .initial
                .iter()
                .map(|(x, p)| InitialEntry {
                    state: x.0.clone(),
                    prob: *p,
                })
                .collect(),
            classes,
        }
    }
}

/// Parse and validate a model document (JSON).
pub fn parse_model(document: &str) -> Result<ModelSpec> {
    let file: ModelFile = serde_json::from_str(document)?;
    let n = file.species.len();
    let index: HashMap<&str, usize> = file
        .species
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if index.len() != n {
        return Err(Error::InvalidModel("duplicate species names".into()));
    }
    let mut classes = Vec::with_capacity(file.classes.len());
    for c in &file.classes {
        let mut guard = Guard::unrestricted(n);
        for g in &c.guard {
            let k = *index.get(g.var.as_str()).ok_or_else(|| {
                Error::InvalidModel(format!("class '{}': unknown species '{}'", c.name, g.var))
            })?;
            guard.lower[k] = guard.lower[k].max(g.min);
            guard.upper[k] = match (guard.upper[k], g.max) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
        let time_factor = match c.rate.time.kind {
            TimeKind::Constant => TimeFactor {
                kind: TimeKind::Constant,
                a: c.rate.time.a,
                b: 0.0,
                valid_until: c.rate.time.valid_until.unwrap_or(f64::INFINITY),
            },
            TimeKind::Affine => TimeFactor::affine(
                c.rate.time.a,
                c.rate.time.b,
                c.rate.time.valid_until.unwrap_or(f64::INFINITY),
            ),
        };
        classes.push(TransitionClass {
            name: c.name.clone(),
            guard,
            change: c.change.clone(),
            time_factor,
            state_factor: StateFactor {
                constant: c.rate.constant,
                exponents: c.rate.exponents.clone(),
            },
        });
    }
    let initial = file
        .initial
        .into_iter()
        .map(|e| (StateVec(e.state), e.prob))
        .collect();
    ModelSpec::new(file.species, classes, initial, file.horizon)
}

// ---------------------------------------------------------------------------
// built-in models

/// Rate constants of the gene-expression model. The transcription constant
/// is scaled by the cell volume `1 + t/3600`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneExpressionRates {
    pub transcription: f64,
    pub translation: f64,
    pub mrna_decay: f64,
    pub protein_decay: f64,
}

impl Default for GeneExpressionRates {
    fn default() -> Self {
        GeneExpressionRates {
            transcription: 0.05,
            translation: 0.05,
            mrna_decay: 0.005,
            protein_decay: 0.0005,
        }
    }
}

/// Cell cycle length; the volume doubles over one cycle.
pub const CELL_CYCLE: f64 = 3600.0;

pub const BUILTIN_MODELS: [&str; 2] = ["gene_expression", "exclusive_switch"];

pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    match name {
        "gene_expression" => Ok(gene_expression(GeneExpressionRates::default())),
        "exclusive_switch" => Ok(exclusive_switch()),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn guard(n: usize, mins: &[(usize, u32)]) -> Guard {
    let mut g = Guard::unrestricted(n);
    for &(k, v) in mins {
        g.lower[k] = v;
    }
    g
}

fn monomial(constant: f64, n: usize, vars: &[usize]) -> StateFactor {
    let mut exponents = vec![0; n];
    for &k in vars {
        exponents[k] += 1;
    }
    StateFactor {
        constant,
        exponents,
    }
}

/// Transcription, translation and decay of mRNA (species 0) and protein
/// (species 1) in a growing cell.
pub fn gene_expression(rates: GeneExpressionRates) -> ModelSpec {
    let n = 2;
    let class = |name: &str, g: Guard, change: [i32; 2], tf: TimeFactor, sf: StateFactor| {
        TransitionClass {
            name: name.into(),
            guard: g,
            change: change.to_vec(),
            time_factor: tf,
            state_factor: sf,
        }
    };
    let k1 = rates.transcription;
    let classes = vec![
        class(
            "transcription",
            Guard::unrestricted(n),
            [1, 0],
            TimeFactor::affine(k1, k1 / CELL_CYCLE, CELL_CYCLE),
            monomial(1.0, n, &[]),
        ),
        class(
            "translation",
            guard(n, &[(0, 1)]),
            [0, 1],
            TimeFactor::constant(1.0),
            monomial(rates.translation, n, &[0]),
        ),
        class(
            "mrna_decay",
            guard(n, &[(0, 1)]),
            [-1, 0],
            TimeFactor::constant(1.0),
            monomial(rates.mrna_decay, n, &[0]),
        ),
        class(
            "protein_decay",
            guard(n, &[(1, 1)]),
            [0, -1],
            TimeFactor::constant(1.0),
            monomial(rates.protein_decay, n, &[1]),
        ),
    ];
    ModelSpec::new(
        vec!["mRNA".into(), "protein".into()],
        classes,
        vec![(StateVec(vec![0, 0]), 1.0)],
        CELL_CYCLE,
    )
    .expect("gene expression model is valid")
}

/// Two genes sharing one promoter. Species: P1, P2, free promoter,
/// promoter bound to P1, promoter bound to P2.
pub fn exclusive_switch() -> ModelSpec {
    let n = 5;
    let (free, bound) = (2usize, [3usize, 4usize]);
    let e = |k: usize| {
        let mut v = vec![0i32; n];
        v[k] = 1;
        v
    };
    let add = |a: &[i32], b: &[i32]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
    let neg = |a: &[i32]| a.iter().map(|x| -x).collect::<Vec<_>>();

    let mut classes = Vec::with_capacity(10);
    for p in 0..2 {
        classes.push(TransitionClass {
            name: format!("production_p{}", p + 1),
            guard: guard(n, &[(free, 1)]),
            change: e(p),
            time_factor: TimeFactor::constant(1.0),
            state_factor: monomial(0.5, n, &[free]),
        });
    }
    for p in 0..2 {
        classes.push(TransitionClass {
            name: format!("degradation_p{}", p + 1),
            guard: guard(n, &[(p, 1)]),
            change: neg(&e(p)),
            time_factor: TimeFactor::constant(1.0),
            state_factor: monomial(0.005, n, &[p]),
        });
    }
    for p in 0..2 {
        classes.push(TransitionClass {
            name: format!("binding_p{}", p + 1),
            guard: guard(n, &[(free, 1), (p, 1)]),
            change: add(&add(&neg(&e(p)), &neg(&e(free))), &e(bound[p])),
            time_factor: TimeFactor::affine(0.1, -0.05 / CELL_CYCLE, CELL_CYCLE),
            state_factor: monomial(1.0, n, &[p, free]),
        });
    }
    for p in 0..2 {
        classes.push(TransitionClass {
            name: format!("unbinding_p{}", p + 1),
            guard: guard(n, &[(bound[p], 1)]),
            change: add(&add(&e(p), &e(free)), &neg(&e(bound[p]))),
            time_factor: TimeFactor::constant(1.0),
            state_factor: monomial(0.005, n, &[bound[p]]),
        });
    }
    for p in 0..2 {
        classes.push(TransitionClass {
            name: format!("bound_production_p{}", p + 1),
            guard: guard(n, &[(bound[p], 1)]),
            change: e(p),
            time_factor: TimeFactor::constant(1.0),
            state_factor: monomial(0.5, n, &[bound[p]]),
        });
    }
    ModelSpec::new(
        ["P1", "P2", "DNA", "DNA_P1", "DNA_P2"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        classes,
        vec![(StateVec(vec![0, 0, 1, 0, 0]), 1.0)],
        CELL_CYCLE,
    )
    .expect("exclusive switch model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[u32]) -> StateVec {
        StateVec(v.to_vec())
    }

    #[test]
    fn gene_expression_enabled_sets() {
        let spec = builtin_model("gene_expression").unwrap();
        assert_eq!(spec.enabled_classes(&[0, 0]), vec![0]);
        assert_eq!(spec.enabled_classes(&[1, 0]), vec![0, 1, 2]);
        assert_eq!(spec.enabled_classes(&[1, 1]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn exclusive_switch_enabled_at_start() {
        let spec = builtin_model("exclusive_switch").unwrap();
        assert_eq!(spec.enabled_classes(&[0, 0, 1, 0, 0]), vec![0, 1]);
        assert!((spec.exit_rate(&[0, 0, 1, 0, 0], 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rates_match_hand_values() {
        let ge = builtin_model("gene_expression").unwrap();
        assert!((ge.rate(0, &[5, 3], 3600.0).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(ge.rate(3, &[5, 0], 10.0).unwrap(), 0.0);
        assert!(matches!(
            ge.rate(0, &[0, 0], 3601.0),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!((ge.exit_rate(&[0, 0], 0.0) - 0.05).abs() < 1e-15);

        let es = builtin_model("exclusive_switch").unwrap();
        assert!((es.rate(4, &[2, 0, 1, 0, 0], 0.0).unwrap() - 0.2).abs() < 1e-15);
        // binding halves over the cell cycle
        assert!((es.rate(4, &[2, 0, 1, 0, 0], 3600.0).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin_model("foo"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn gene_expression_shape() {
        let spec = builtin_model("gene_expression").unwrap();
        assert_eq!((spec.m(), spec.n()), (4, 2));
        for (i, a) in spec.classes().iter().enumerate() {
            for b in &spec.classes()[i + 1..] {
                assert_ne!(a.change, b.change);
            }
        }
        assert_eq!(spec.initial(), &[(sv(&[0, 0]), 1.0)]);
        assert_eq!(spec.horizon(), 3600.0);
    }

    #[test]
    fn switch_caps_come_from_promoter_conservation() {
        let spec = builtin_model("exclusive_switch").unwrap();
        assert_eq!(spec.caps(), &[None, None, Some(1), Some(1), Some(1)]);
        let ge = builtin_model("gene_expression").unwrap();
        assert_eq!(ge.caps(), &[None, None]);
    }

    #[test]
    fn guard_upper_bounds_cap_dimensions() {
        let doc = r#"{
            "species": ["A"], "horizon": 1.0,
            "initial": [{"state": [0], "prob": 1.0}],
            "classes": [
              {"name": "up", "guard": [{"var": "A", "min": 0, "max": 6}], "change": [1],
               "rate": {"constant": 1.0, "exponents": [0], "time": {"kind": "constant", "a": 1.0}}},
              {"name": "down", "guard": [{"var": "A", "min": 1}], "change": [-1],
               "rate": {"constant": 1.0, "exponents": [1], "time": {"kind": "constant", "a": 1.0}}}
            ]}"#;
        let spec = parse_model(doc).unwrap();
        assert_eq!(spec.caps(), &[Some(7)]);
    }

    #[test]
    fn closure_violation_names_class() {
        let doc = r#"{
            "species": ["A", "B"], "horizon": 1.0,
            "initial": [{"state": [0, 0], "prob": 1.0}],
            "classes": [
              {"name": "leak", "guard": [], "change": [-1, 0],
               "rate": {"constant": 1.0, "exponents": [1, 0], "time": {"kind": "constant", "a": 1.0}}}
            ]}"#;
        match parse_model(doc) {
            Err(Error::ClosureViolation { class, species }) => {
                assert_eq!(class, "leak");
                assert_eq!(species, "A");
            }
            other => panic!("expected closure violation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_normalized_initial() {
        let doc = r#"{
            "species": ["A"], "horizon": 1.0,
            "initial": [{"state": [0], "prob": 0.5}, {"state": [1], "prob": 0.4}],
            "classes": [
              {"name": "up", "change": [1],
               "rate": {"constant": 1.0, "exponents": [0], "time": {"kind": "constant", "a": 1.0}}}
            ]}"#;
        assert!(matches!(parse_model(doc), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn rejects_identical_classes() {
        let doc = r#"{
            "species": ["A"], "horizon": 1.0,
            "initial": [{"state": [0], "prob": 1.0}],
            "classes": [
              {"name": "up", "change": [1],
               "rate": {"constant": 1.0, "exponents": [0], "time": {"kind": "constant", "a": 1.0}}},
              {"name": "up2", "change": [1],
               "rate": {"constant": 2.0, "exponents": [0], "time": {"kind": "constant", "a": 1.0}}}
            ]}"#;
        assert!(matches!(
            parse_model(doc),
            Err(Error::DuplicateChange { .. })
        ));
    }

    #[test]
    fn rejects_unknown_fields_and_species() {
        let doc = r#"{"species": ["A"], "horizon": 1.0, "initial": [], "classes": [], "extra": 1}"#;
        assert!(matches!(parse_model(doc), Err(Error::Json(_))));
        let doc = r#"{
            "species": ["A"], "horizon": 1.0,
            "initial": [{"state": [0], "prob": 1.0}],
            "classes": [
              {"name": "up", "guard": [{"var": "Z", "min": 1}], "change": [1],
               "rate": {"constant": 1.0, "exponents": [0], "time": {"kind": "constant", "a": 1.0}}}
            ]}"#;
        assert!(matches!(parse_model(doc), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_rates_that_turn_negative() {
        let doc = r#"{
            "species": ["A"], "horizon": 10.0,
            "initial": [{"state": [0], "prob": 1.0}],
            "classes": [
              {"name": "up", "change": [1],
               "rate": {"constant": 1.0, "exponents": [0],
                        "time": {"kind": "affine", "a": 1.0, "b": -0.2, "valid_until": 10.0}}}
            ]}"#;
        assert!(matches!(parse_model(doc), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn builtins_round_trip_through_json() {
        for name in BUILTIN_MODELS {
            let spec = builtin_model(name).unwrap();
            let back = parse_model(&spec.to_json()).unwrap();
            assert_eq!(back.classes(), spec.classes());
            assert_eq!(back.initial(), spec.initial());
            assert_eq!(back.caps(), spec.caps());
        }
    }
}

//! Poisson jump counts of the uniformizing process over one window.
//!
//! Only the right truncation point is used: every term from zero jumps up
//! carries mass because the window starts from a full distribution.
//! Probabilities are evaluated around the mode in log space, which stays
//! finite for means far beyond where `exp(-mu)` underflows.

use crate::engine::UniformizationRate;
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Poisson mean `mu = integral of Lambda over [t, t + delta]`, exact for
/// affine `Lambda`.
pub fn step_parameter(lambda: &UniformizationRate, t: f64, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative step {delta}")));
    }
    let (l0, l1) = (lambda.value(t), lambda.value(t + delta));
    if l0 < 0.0 || l1 < 0.0 {
        return Err(Error::NegativeRate { t, t_end: t + delta });
    }
    Ok(l0 * delta + 0.5 * lambda.slope() * delta * delta)
}

/// Truncated Poisson distribution for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonTruncation {
    pub mu: f64,
    pub right_point: usize,
    pub weights: Vec<f64>,
    pub captured_mass: f64,
}

impl PoissonTruncation {
    pub fn new(mu: f64, epsilon: f64) -> Self {
        let right_point = right_truncation(mu, epsilon);
        Self::with_right_point(mu, right_point)
    }

    pub fn with_right_point(mu: f64, right_point: usize) -> Self {
        let weights = weights(mu, right_point);
        let captured_mass = weights.iter().copied().collect::<CompensatedSum>().value();
        PoissonTruncation {
            mu,
            right_point,
            weights,
            captured_mass: captured_mass.min(1.0),
        }
    }

    /// `sum_{i >= from} weights[i]`.
    pub fn tail_from(&self, from: usize) -> f64 {
        self.weights
            .get(from..)
            .map(|w| w.iter().rev().copied().collect::<CompensatedSum>().value())
            .unwrap_or(0.0)
    }
}

/// Stirling series remainder `ln k! - (k ln k - k + ln(2 pi k)/2)`.
fn stirling_tail(k: f64) -> f64 {
    let k2 = k * k;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * k2)) / k2) / k2) / k
}

/// Index of the mode and `ln pmf(mode)`, computed without cancellation.
fn log_pmf_at_mode(mu: f64) -> (usize, f64) {
    let m = mu.floor();
    if m < 20.0 {
        let mut fact = 1.0f64;
        for i in 2..=(m as u32) {
            fact *= i as f64;
        }
        let logp = if m == 0.0 {
            -mu
        } else {
            m * mu.ln() - mu - fact.ln()
        };
        return (m as usize, logp);
    }
    // ln pmf(m) = m ln(mu/m) + (m - mu) - ln(2 pi m)/2 - stirling_tail(m)
    let logp = m * ((mu - m) / m).ln_1p() + (m - mu)
        - 0.5 * (2.0 * std::f64::consts::PI * m).ln()
        - stirling_tail(m);
    (m as usize, logp)
}

/// `pmf(i)` for `i` in `lo..=hi`, walking outward from the mode.
fn pmf_range(mu: f64, lo: usize, hi: usize) -> Vec<f64> {
    let mut out = vec![0.0; hi + 1 - lo];
    if mu == 0.0 {
        if lo == 0 {
            out[0] = 1.0;
        }
        return out;
    }
    let (mode, logp) = log_pmf_at_mode(mu);
    let at_mode = logp.exp();
    if mode >= lo && mode <= hi {
        out[mode - lo] = at_mode;
    }
    // upward
    let mut p = at_mode;
    let mut i = mode;
    while i < hi {
        p *= mu / (i + 1) as f64;
        i += 1;
        if i >= lo {
            out[i - lo] = p;
        }
        if p == 0.0 {
            break;
        }
    }
    // downward
    let mut p = at_mode;
    let mut i = mode;
    while i > lo {
        p *= i as f64 / mu;
        i -= 1;
        if i <= hi {
            out[i - lo] = p;
        }
        if p == 0.0 {
            break;
        }
    }
    out
}

/// `weights[i] = exp(-mu) mu^i / i!` for `i = 0..=r`.
pub fn weights(mu: f64, r: usize) -> Vec<f64> {
    pmf_range(mu, 0, r)
}

/// Smallest `R` with `sum_{i<=R} pmf(i) >= 1 - epsilon`.
pub fn right_truncation(mu: f64, epsilon: f64) -> usize {
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    assert!(mu >= 0.0 && mu.is_finite(), "mu must be finite and >= 0");
    if mu == 0.0 {
        return 0;
    }
    let (mode, _) = log_pmf_at_mode(mu);
    // far enough right that the neglected tail is below epsilon * 1e-20
    let sd = mu.sqrt();
    let mut hi = mode + 10 + (12.0 * sd) as usize;
    let mut probs;
    loop {
        probs = pmf_range(mu, 0, hi);
        let last = probs[hi];
        let ratio = mu / (hi + 1) as f64;
        let remainder = if ratio < 1.0 {
            last * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        if remainder <= epsilon * 1e-20 {
            break;
        }
        hi += 10 + (4.0 * sd) as usize;
    }
    // tail(R) = sum_{i > R} pmf(i), summed from the right
    let mut tail = CompensatedSum::new();
    let mut r = hi;
    while r > 0 {
        tail.add(probs[r]);
        if tail.value() > epsilon {
            return r;
        }
        r -= 1;
    }
    0
}

/// `Some(right_truncation(mu, epsilon))` if it does not exceed `max_r`.
/// Cheap for large `mu`: the truncation point is at least the median,
/// which is at least `mu - ln 2`.
pub fn right_truncation_at_most(mu: f64, epsilon: f64, max_r: usize) -> Option<usize> {
    if epsilon < 0.5 && mu - std::f64::consts::LN_2 > max_r as f64 {
        return None;
    }
    let r = right_truncation(mu, epsilon);
    (r <= max_r).then_some(r)
}

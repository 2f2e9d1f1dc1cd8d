//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Poisson terms `mu^i / i!` in fixed point with `2^256` as one, for a
/// rational mean `num / den`, until they round to zero past the mode.
pub struct ExactPoisson {
    pub terms: Vec<BigUint>,
    pub total: BigUint,
}

impl ExactPoisson {
    pub fn new(num: u64, den: u64) -> Self {
        let mut term = BigUint::one() << 256u32;
        let mut terms = vec![term.clone()];
        let mut i = 1u64;
        loop {
            term = term * num / (BigUint::from(den) * i);
            if term.is_zero() && i * den > num {
                break;
            }
            terms.push(term.clone());
            i += 1;
        }
        let total = terms.iter().fold(BigUint::zero(), |a, b| a + b);
        ExactPoisson { terms, total }
    }

    /// `sum_{i > r} terms[i]`.
    pub fn tail(&self, r: usize) -> BigUint {
        self.terms.iter().skip(r + 1).fold(BigUint::zero(), |a, b| a + b)
    }

    /// Smallest `r` whose tail is at most `10^-k` of the total.
    pub fn minimal_right_point(&self, k: u32) -> usize {
        let scale = BigUint::from(10u32).pow(k);
        let mut tail = self.total.clone();
        for (r, t) in self.terms.iter().enumerate() {
            tail -= t;
            if &tail * &scale <= self.total {
                return r;
            }
        }
        self.terms.len()
    }

    /// `terms[i] / total` as a float.
    pub fn pmf(&self, i: usize) -> f64 {
        ratio(&self.terms[i], &self.total)
    }
}

/// `a / b` rounded to a float, for `a <= b`.
pub fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    let shift = (b.bits() - a.bits() + 64) as i32;
    let q = ((a << shift as u32) / b).to_f64().unwrap();
    let mut out = q;
    let mut s = shift;
    while s > 0 {
        let step = s.min(1000);
        out *= 2f64.powi(-step);
        s -= step;
    }
    out
}

/// Transient distribution of a finite homogeneous chain by dense
/// uniformization with a generous truncation point.
pub fn dense_uniformization(generator: &[Vec<f64>], p0: &[f64], t: f64) -> Vec<f64> {
    let n = p0.len();
    let lambda = (0..n).map(|i| -generator[i][i]).fold(0.0, f64::max) * 1.02 + 1e-12;
    let mu = lambda * t;
    // P = I + Q / lambda, applied to row vectors
    let step = |v: &[f64]| -> Vec<f64> {
        let mut out = v.to_vec();
        for i in 0..n {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += v[i] * generator[i][j] / lambda;
            }
        }
        out
    };
    // weights in log space so that e^-mu may underflow
    let mut acc = vec![0.0; n];
    let mut v = p0.to_vec();
    let mut log_w = -mu;
    let r_max = (mu + 40.0 * mu.sqrt() + 100.0) as usize;
    for i in 0..=r_max {
        if i > 0 {
            log_w += mu.ln() - (i as f64).ln();
            v = step(&v);
        }
        let w = log_w.exp();
        for (a, b) in acc.iter_mut().zip(&v) {
            *a += w * b;
        }
    }
    acc
}

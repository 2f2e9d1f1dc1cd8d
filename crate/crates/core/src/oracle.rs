//! Brute-force reference solutions on a finite box.
//!
//! The forward equation `dp/dt = p Q(t)` is integrated densely over the
//! states of the box reachable from the initial support, with an adaptive
//! Dormand-Prince 5(4) pair. Probability flowing out of the box goes to a
//! sink whose final mass is reported as the boundary mass; the dense result
//! is then a pointwise lower bound on the true distribution and falls short
//! of it by at most the boundary mass in total.

use std::collections::{HashMap, VecDeque};

use crate::engine::SparseDistribution;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, StateVec};

/// Inclusive per-species upper bounds; lower bounds are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateBox {
    pub upper: Vec<u32>,
}

impl StateBox {
    pub fn new(upper: Vec<u32>) -> Self {
        StateBox { upper }
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.len() == self.upper.len() && x.iter().zip(&self.upper).all(|(a, b)| a <= b)
    }
}

/// Generator row of a state restricted to a box.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRow {
    /// Off-diagonal rates to states inside the box, then the diagonal entry
    /// `-sum of the off-diagonals`.
    pub entries: Vec<(StateVec, f64)>,
    /// Total rate of transitions leaving the box.
    pub outflow: f64,
}

/// Row of `Q(t)` at `x`, dropping transitions that leave the box. Classes
/// with the same target are merged.
pub fn generator_row(x: &[u32], t: f64, bx: &StateBox, spec: &ModelSpec) -> GeneratorRow {
    let mut entries: Vec<(StateVec, f64)> = Vec::new();
    let mut outflow = 0.0;
    let mut diag = 0.0;
    for c in spec.classes() {
        let rate = c.time_factor.value(t) * c.state_rate(x);
        if rate == 0.0 {
            continue;
        }
        let y = StateVec(x.to_vec()).apply(&c.change).expect("closure holds inside guards");
        if bx.contains(&y) {
            diag -= rate;
            match entries.iter_mut().find(|(s, _)| *s == y) {
                Some(e) => e.1 += rate,
                None => entries.push((y, rate)),
            }
        } else {
            outflow += rate;
        }
    }
    entries.push((StateVec(x.to_vec()), diag));
    GeneratorRow { entries, outflow }
}

/// Dense reference distribution over the reachable part of a box.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub t: f64,
    /// Lexicographically ordered states.
    pub states: Vec<StateVec>,
    pub probs: Vec<f64>,
    /// Mass that left the box.
    pub boundary_mass: f64,
    pub steps: usize,
}

impl OracleSolution {
    pub fn get(&self, x: &[u32]) -> f64 {
        self.states
            .binary_search_by(|s| s.0.as_slice().cmp(x))
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn to_distribution(&self) -> SparseDistribution {
        self.states
            .iter()
            .cloned()
            .zip(self.probs.iter().copied())
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut m = vec![0.0; n];
        for (x, &p) in self.states.iter().zip(&self.probs) {
            for k in 0..n {
                m[k] += p * x[k] as f64;
            }
        }
        let total: f64 = self.probs.iter().sum();
        m.iter().map(|v| v / total).collect()
    }
}

/// Transitions of one class as parallel arrays.
struct ClassEdges {
    src: Vec<u32>,
    dst: Vec<u32>,
    rate: Vec<f64>,
    /// Rates of transitions leaving the box, by source.
    out_src: Vec<u32>,
    out_rate: Vec<f64>,
}

struct DenseSystem<'a> {
    spec: &'a ModelSpec,
    edges: Vec<ClassEdges>,
    len: usize,
}

impl DenseSystem<'_> {
    /// `dp = p Q(t)`, with outflow to the sink in the last slot.
    fn derivative(&self, t: f64, p: &[f64], dp: &mut [f64]) {
        dp.fill(0.0);
        let sink = self.len;
        for (c, e) in self.spec.classes().iter().zip(&self.edges) {
            let lam = c.time_factor.value(t);
            for k in 0..e.src.len() {
                let (s, d) = (e.src[k] as usize, e.dst[k] as usize);
                let f = p[s] * lam * e.rate[k];
                dp[d] += f;
                dp[s] -= f;
            }
            for k in 0..e.out_src.len() {
                let s = e.out_src[k] as usize;
                let f = p[s] * lam * e.out_rate[k];
                dp[sink] += f;
                dp[s] -= f;
            }
        }
    }
}

/// States of the box reachable from `roots`, in lexicographic order.
fn reachable_in_box(roots: &[StateVec], bx: &StateBox, spec: &ModelSpec) -> Vec<StateVec> {
    let mut seen: HashMap<StateVec, ()> = HashMap::new();
    let mut queue: VecDeque<StateVec> = VecDeque::new();
    for r in roots {
        if seen.insert(r.clone(), ()).is_none() {
            queue.push_back(r.clone());
        }
    }
    while let Some(x) = queue.pop_front() {
        for c in spec.classes() {
            if c.state_rate(&x) == 0.0 {
                continue;
            }
            if let Some(y) = x.apply(&c.change) {
                if bx.contains(&y) && seen.insert(y.clone(), ()).is_none() {
                    queue.push_back(y);
                }
            }
        }
    }
    let mut states: Vec<StateVec> = seen.into_keys().collect();
    states.sort();
    states
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights equal the last row of A; these are the differences
// to the embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates the forward equation from `p0` at `t0` to `t1` on the
/// reachable part of `bx`, with local absolute tolerance `tol`.
pub fn integrate_forward(
    p0: &SparseDistribution,
    t0: f64,
    t1: f64,
    bx: &StateBox,
    spec: &ModelSpec,
    tol: f64,
) -> Result<OracleSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let roots: Vec<StateVec> = p0.iter().map(|(x, _)| x.clone()).collect();
    if let Some(x) = roots.iter().find(|x| !bx.contains(x)) {
        return Err(Error::InvalidArgument(format!("initial state {x:?} lies outside the box")));
    }
    let states = reachable_in_box(&roots, bx, spec);
    let index: HashMap<&StateVec, u32> = states.iter().enumerate().map(|(i, s)| (s, i as u32)).collect();
    let mut edges: Vec<ClassEdges> = spec
        .classes()
        .iter()
        .map(|_| ClassEdges {
            src: Vec::new(),
            dst: Vec::new(),
            rate: Vec::new(),
            out_src: Vec::new(),
            out_rate: Vec::new(),
        })
        .collect();
    let mut max_exit = 0.0f64;
    for (i, x) in states.iter().enumerate() {
        let mut exit = 0.0;
        for (c, e) in spec.classes().iter().zip(edges.iter_mut()) {
            let r = c.state_rate(x);
            if r == 0.0 {
                continue;
            }
            exit += r * c.time_factor.value(t0).abs().max(c.time_factor.value(t1).abs());
            let y = x.apply(&c.change).expect("closure holds inside guards");
            match index.get(&y) {
                Some(&d) => {
                    e.src.push(i as u32);
                    e.dst.push(d);
                    e.rate.push(r);
                }
                None => {
                    e.out_src.push(i as u32);
                    e.out_rate.push(r);
                }
            }
        }
        max_exit = max_exit.max(exit);
    }
    let system = DenseSystem {
        spec,
        edges,
        len: states.len(),
    };

    let dim = states.len() + 1;
    let mut p = vec![0.0; dim];
    for (x, v) in p0.iter() {
        p[index[x] as usize] = v;
    }
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut stage = vec![0.0; dim];
    let mut next = vec![0.0; dim];

    let span = t1 - t0;
    let mut t = t0;
    let mut h = if max_exit > 0.0 { (0.1 / max_exit).min(span) } else { span };
    let mut steps = 0usize;
    let mut fsal = false;
    while t < t1 && span > 0.0 {
        if t + h > t1 {
            h = t1 - t;
        }
        if !fsal {
            system.derivative(t, &p, &mut k[0]);
        }
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = p[i];
                for (a, kk) in A[s][..s].iter().zip(&k[..s]) {
                    if *a != 0.0 {
                        acc += h * a * kk[i];
                    }
                }
                stage[i] = acc;
            }
            let (_, tail) = k.split_at_mut(s);
            system.derivative(t + C[s] * h, &stage, &mut tail[0]);
            if s == 6 {
                next.copy_from_slice(&stage);
            }
        }
        let mut err = 0.0f64;
        for i in 0..dim {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
            err = err.max(e.abs());
        }
        let ratio = err / tol;
        if ratio <= 1.0 {
            t = if t1 - (t + h) < 1e-12 * span { t1 } else { t + h };
            std::mem::swap(&mut p, &mut next);
            k.swap(0, 6);
            fsal = true;
            steps += 1;
        } else {
            fsal = false;
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t.abs().max(span) {
            return Err(Error::IntegratorUnderflow(t));
        }
    }
    let boundary_mass = p[dim - 1].max(0.0);
    p.truncate(dim - 1);
    for v in p.iter_mut() {
        // round-off can leave tiny negatives
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(OracleSolution {
        t: t1,
        states,
        probs: p,
        boundary_mass,
        steps,
    })
}

/// A state where the lower bound exceeds the reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub state: StateVec,
    pub lower: f64,
    pub reference: f64,
}

impl Violation {
    pub fn excess(&self) -> f64 {
        self.lower - self.reference
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnderapproxReport {
    pub violations: Vec<Violation>,
    pub max_excess: f64,
    pub boundary_mass: f64,
    pub states_checked: usize,
}

impl UnderapproxReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn worst(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .max_by(|a, b| a.excess().total_cmp(&b.excess()))
    }
}

/// Lists every state with `p_hat(x) > p_ref(x) + slack`. States outside the
/// reference count as reference probability zero.
pub fn verify_underapprox(
    p_hat: &SparseDistribution,
    p_ref: &OracleSolution,
    slack: f64,
) -> UnderapproxReport {
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for (x, p) in p_hat.iter() {
        let r = p_ref.get(x);
        max_excess = max_excess.max(p - r);
        if p > r + slack {
            violations.push(Violation {
                state: x.clone(),
                lower: p,
                reference: r,
            });
        }
    }
    UnderapproxReport {
        violations,
        max_excess,
        boundary_mass: p_ref.boundary_mass,
        states_checked: p_hat.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, parse_model};

    fn two_state(a: f64, b: f64) -> ModelSpec {
        parse_model(&format!(
            r#"{{"species":["on"],"horizon":5,
                "initial":[{{"state":[0],"prob":1}}],
                "classes":[
                  {{"name":"up","guard":[{{"var":"on","max":0}}],"change":[1],
                    "rate":{{"constant":{a},"exponents":[0],"time":{{"kind":"constant","a":1}}}}}},
                  {{"name":"down","guard":[{{"var":"on","min":1}}],"change":[-1],
                    "rate":{{"constant":{b},"exponents":[1],"time":{{"kind":"constant","a":1}}}}}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn gene_row() {
        let spec = builtin_model("gene_expression").unwrap();
        let row = generator_row(&[1, 0], 0.0, &StateBox::new(vec![10, 10]), &spec);
        let get = |x: &[u32]| row.entries.iter().find(|(s, _)| s.0 == x).unwrap().1;
        assert!((get(&[2, 0]) - 0.05).abs() < 1e-15);
        assert!((get(&[1, 1]) - 0.05).abs() < 1e-15);
        assert!((get(&[0, 0]) - 0.005).abs() < 1e-15);
        assert_eq!(row.entries.iter().map(|e| e.1).sum::<f64>(), 0.0);
    }

    #[test]
    fn two_state_closed_form() {
        let (a, b) = (0.7, 0.3);
        let spec = two_state(a, b);
        let sol = integrate_forward(
            &SparseDistribution::point(StateVec(vec![0])),
            0.0,
            2.0,
            &StateBox::new(vec![1]),
            &spec,
            1e-12,
        )
        .unwrap();
        let s = a + b;
        let p1 = a / s * (1.0 - (-s * 2.0).exp());
        assert!((sol.get(&[1]) - p1).abs() < 1e-10);
        assert!((sol.get(&[0]) - (1.0 - p1)).abs() < 1e-10);
        assert_eq!(sol.boundary_mass, 0.0);
    }

    #[test]
    fn small_box_reports_boundary_mass() {
        let spec = builtin_model("gene_expression").unwrap();
        let sol = integrate_forward(
            &SparseDistribution::point(StateVec(vec![0, 0])),
            0.0,
            100.0,
            &StateBox::new(vec![1, 1]),
            &spec,
            1e-10,
        )
        .unwrap();
        let total: f64 = sol.probs.iter().sum();
        assert!(sol.boundary_mass > 1e-3);
        assert!((total + sol.boundary_mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn scaled_copy_fails() {
        let spec = two_state(1.0, 1.0);
        let sol = integrate_forward(
            &SparseDistribution::point(StateVec(vec![0])),
            0.0,
            1.0,
            &StateBox::new(vec![1]),
            &spec,
            1e-12,
        )
        .unwrap();
        let same = sol.to_distribution();
        assert!(verify_underapprox(&same, &sol, 1e-9).passed());
        let scaled: SparseDistribution = same.iter().map(|(x, p)| (x.clone(), 1.01 * p)).collect();
        let report = verify_underapprox(&scaled, &sol, 1e-9);
        assert_eq!(report.violations.len(), 2);
    }
}

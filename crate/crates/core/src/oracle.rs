//! Exact reference laws for small instances.
//!
//! Everything here is deterministic floating-point arithmetic: path
//! enumeration for the walk, negative-binomial algebra for the transition
//! rows of `V`, and forward dynamic programs for regeneration cycles and
//! first-passage events. Truncation is always carried as explicit mass.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::env::CookieEnvironmentSpec;
use crate::error::{Error, Result};

/// Longest walk the path enumerator accepts.
pub const MAX_ENUMERATION_STEPS: usize = 22;
/// Largest state space the dynamic programs accept.
pub const MAX_STATES: u64 = 10_000_000;

/// A finite probability table plus the mass it does not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLaw {
    pub columns: Vec<String>,
    pub support: Vec<Vec<i64>>,
    pub probs: Vec<f64>,
    pub truncation_mass: f64,
}

impl ExactLaw {
    fn from_map(columns: &[&str], map: BTreeMap<Vec<i64>, f64>, truncation_mass: f64) -> Self {
        let (support, probs) = map.into_iter().filter(|(_, p)| *p > 0.0).unzip();
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            support,
            probs,
            truncation_mass,
        }
    }

    fn univariate(column: &str, probs: &[f64], offset: i64, truncation_mass: f64) -> Self {
        let map = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (vec![i as i64 + offset], p))
            .collect();
        Self::from_map(&[column], map, truncation_mass)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn prob(&self, outcome: &[i64]) -> f64 {
        self.support
            .iter()
            .position(|s| s == outcome)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn to_map(&self) -> BTreeMap<Vec<i64>, f64> {
        self.support.iter().cloned().zip(self.probs.iter().copied()).collect()
    }

    /// Outcome columns, then `prob`; the last row holds the truncation mass
    /// with `*` in every outcome column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            out.push_str(c);
            out.push(',');
        }
        out.push_str("prob\n");
        for (s, p) in self.support.iter().zip(&self.probs) {
            for v in s {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{p:e}");
        }
        for _ in &self.columns {
            out.push_str("*,");
        }
        let _ = writeln!(out, "{:e}", self.truncation_mass);
        out
    }
}

/// Exact laws of `X_n` and of the passage times `T_m` restricted to `<= n`.
#[derive(Debug, Clone)]
pub struct PathLaws {
    pub n: usize,
    pub position: ExactLaw,
    /// `T_m` for every `m != 0` with `|m| <= n`; truncation mass is `P(T_m > n)`.
    pub passage: BTreeMap<i64, ExactLaw>,
}

struct Enumerator<'a> {
    n: usize,
    m: usize,
    weights: &'a [f64],
    omega: Vec<Vec<f64>>,
    visits: Vec<u32>,
    post: Vec<Vec<f64>>,
    position: Vec<f64>,
    passage: Vec<Vec<f64>>,
}

impl Enumerator<'_> {
    fn idx(&self, x: i64) -> usize {
        (x + self.n as i64) as usize
    }

    fn right_prob(&self, site: usize, j: usize) -> f64 {
        if j > self.m {
            return 0.5;
        }
        let a = &self.post[site];
        let num: f64 = a.iter().zip(&self.omega).map(|(w, o)| w * o[j - 1]).sum();
        num / a.iter().sum::<f64>()
    }

    fn dfs(&mut self, x: i64, step: usize, prob: f64, max: i64, min: i64) {
        if step == self.n {
            let i = self.idx(x);
            self.position[i] += prob;
            return;
        }
        let here = self.idx(x);
        let j = self.visits[here] as usize;
        let pr = self.right_prob(here, j);
        for (dir, q) in [(1i64, pr), (-1, 1.0 - pr)] {
            if q <= 0.0 {
                continue;
            }
            let saved = self.post[here].clone();
            if j <= self.m && self.weights.len() > 1 {
                for (a, o) in self.post[here].iter_mut().zip(&self.omega) {
                    *a *= if dir == 1 { o[j - 1] } else { 1.0 - o[j - 1] };
                }
            }
            let y = x + dir;
            let there = self.idx(y);
            if self.visits[there] == 0 {
                self.post[there] = self.weights.to_vec();
            }
            self.visits[there] += 1;
            let p = prob * q;
            if y > max || y < min {
                self.passage[there][step + 1] += p;
            }
            self.dfs(y, step + 1, p, max.max(y), min.min(y));
            self.visits[there] -= 1;
            self.post[here] = saved;
        }
    }
}

/// Enumerates all `2^n` paths of length `n` under the averaged law.
///
/// Mixture environments are handled exactly: each visited site carries the
/// unnormalised posterior weight of every component given the decisions
/// already made there, so the next decision's probability is the
/// posterior-averaged cookie.
pub fn enumerate_paths(spec: &CookieEnvironmentSpec, n: usize) -> Result<PathLaws> {
    if n > MAX_ENUMERATION_STEPS {
        return Err(Error::Precondition(format!(
            "path enumeration limited to n <= {MAX_ENUMERATION_STEPS}, got {n}"
        )));
    }
    let width = 2 * n + 1;
    let mut e = Enumerator {
        n,
        m: spec.m(),
        weights: spec.weights(),
        omega: spec.components().iter().map(|v| v.probs().to_vec()).collect(),
        visits: vec![0; width],
        post: vec![Vec::new(); width],
        position: vec![0.0; width],
        passage: vec![vec![0.0; n + 1]; width],
    };
    let origin = e.idx(0);
    e.visits[origin] = 1;
    e.post[origin] = spec.weights().to_vec();
    e.dfs(0, 0, 1.0, 0, 0);

    let position = ExactLaw::univariate("x", &e.position, -(n as i64), 0.0);
    let mut passage = BTreeMap::new();
    for target in -(n as i64)..=(n as i64) {
        if target == 0 {
            continue;
        }
        let row = &e.passage[e.idx(target)];
        let hit: f64 = row.iter().sum();
        passage.insert(target, ExactLaw::univariate("t", row, 0, (1.0 - hit).max(0.0)));
    }
    Ok(PathLaws { n, position, passage })
}

/// `log P(NB(r, 1/2) = k)`: `k` failures before the `r`-th fair success.
fn ln_nb_half(r: u64, k: u64) -> f64 {
    let (r, k) = (r as f64, k as f64);
    ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) - (k + r) * std::f64::consts::LN_2
}

/// `P(NB(r, 1/2) > k)` through the regularised incomplete beta function.
fn nb_half_tail(r: u64, k: u64) -> f64 {
    beta_reg(k as f64 + 1.0, r as f64, 0.5)
}

/// Law of `F_r`, the failures before the `r`-th success at a fresh site,
/// on `0..=j_max`, averaged over the site law.
///
/// The first `M` trials are handled by a dynamic program over
/// (successes, failures); whatever successes remain after the cookies are
/// gone come from fair coins, a negative binomial in closed form.
pub fn failure_row(spec: &CookieEnvironmentSpec, r: u64, j_max: u64) -> ExactLaw {
    let jm = j_max as usize;
    let mut probs = vec![0.0; jm + 1];
    let mut trunc = 0.0;
    if r == 0 {
        probs[0] = 1.0;
        return ExactLaw::univariate("v", &probs, 0, 0.0);
    }
    for (w, cookies) in spec.weights().iter().zip(spec.components()) {
        let m = cookies.len();
        // state[s][f] after t trials, with s < r still running
        let mut state = vec![vec![0.0; m + 1]; m + 1];
        state[0][0] = 1.0;
        for (t, &p) in cookies.probs().iter().enumerate() {
            let mut next = vec![vec![0.0; m + 1]; m + 1];
            for s in 0..=t {
                let f = t - s;
                let mass = state[s][f];
                if mass == 0.0 {
                    continue;
                }
                if (s + 1) as u64 == r {
                    if f <= jm {
                        probs[f] += w * mass * p;
                    } else {
                        trunc += w * mass * p;
                    }
                } else {
                    next[s + 1][f] += mass * p;
                }
                next[s][f + 1] += mass * (1.0 - p);
            }
            state = next;
        }
        for s in 0..=m {
            let f = m - s;
            let mass = state[s][f];
            if mass == 0.0 {
                continue;
            }
            let need = r - s as u64;
            if f > jm {
                trunc += w * mass;
                continue;
            }
            for (k, slot) in probs.iter_mut().enumerate().skip(f) {
                *slot += w * mass * ln_nb_half(need, (k - f) as u64).exp();
            }
            trunc += w * mass * nb_half_tail(need, (jm - f) as u64);
        }
    }
    ExactLaw::univariate("v", &probs, 0, trunc)
}

/// `P(V_{i+1} = j | V_i = k)` for `j <= j_max`.
pub fn transition_row(spec: &CookieEnvironmentSpec, k: u64, j_max: u64) -> ExactLaw {
    failure_row(spec, k + 1, j_max)
}

fn dense(row: &ExactLaw, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (s, p) in row.support.iter().zip(&row.probs) {
        out[s[0] as usize] = *p;
    }
    out
}

/// Truncated joint law of `(sigma_1, W_1)`.
///
/// Forward DP over (current `V`, accumulated `W`) for the excursions still
/// alive; the truncation mass collects every path with `sigma > sigma_max`,
/// `W > w_max` or some `V_i > v_max`.
pub fn sigma_w_law(spec: &CookieEnvironmentSpec, sigma_max: u64, w_max: u64, v_max: u64) -> Result<ExactLaw> {
    let v_max = v_max.min(w_max);
    let states = sigma_max.saturating_mul((v_max + 1).saturating_mul(w_max + 1));
    if states > MAX_STATES {
        return Err(Error::StateSpace(states, MAX_STATES));
    }
    let (vn, wn) = (v_max as usize + 1, w_max as usize + 1);
    let rows: Vec<(Vec<f64>, f64)> = (0..=v_max)
        .map(|k| {
            let r = transition_row(spec, k, v_max);
            let t = r.truncation_mass;
            (dense(&r, vn), t)
        })
        .collect();
    let mut out = BTreeMap::new();
    let mut trunc = 0.0;
    // alive[v][w], v >= 1 after the first generation
    let mut alive = vec![vec![0.0; wn]; vn];
    alive[0][0] = 1.0;
    for sigma in 1..=sigma_max {
        let mut next = vec![vec![0.0; wn]; vn];
        for v in 0..vn {
            for w in 0..wn {
                let mass = alive[v][w];
                if mass == 0.0 {
                    continue;
                }
                let (row, row_trunc) = &rows[v];
                trunc += mass * row_trunc;
                *out.entry(vec![sigma as i64, w as i64]).or_insert(0.0) += mass * row[0];
                for (j, &p) in row.iter().enumerate().skip(1) {
                    if w + j < wn {
                        next[j][w + j] += mass * p;
                    } else {
                        trunc += mass * p;
                    }
                }
            }
        }
        alive = next;
    }
    trunc += alive.iter().flatten().sum::<f64>();
    Ok(ExactLaw::from_map(&["sigma", "w"], out, trunc))
}

/// Certified interval for `Lambda_{W,sigma}(lambda, eta)` from a truncated
/// joint law. `hi` is `+inf` where the neglected tail cannot be bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfBracket {
    pub lo: f64,
    pub hi: f64,
}

/// Smallest `W` any path outside a [`sigma_w_law`] table can have: it either
/// survived `sigma_max` generations (each adding at least one), or pushed
/// `V` or `W` past its bound.
pub fn tail_w_floor(sigma_max: u64, w_max: u64, v_max: u64) -> u64 {
    sigma_max.min(w_max + 1).min(v_max.min(w_max) + 1)
}

/// Brackets `log E[exp(lambda W + eta sigma); sigma < inf]` from a table
/// whose neglected paths all have `W >= w_floor`.
///
/// The table sum is always a lower bound. Since `sigma <= W + 1`, each
/// neglected term is at most `exp(eta + (lambda + eta) W)` for `eta >= 0`
/// and at most `exp(lambda W)` for `eta <= 0`, so with `lambda <= 0` and
/// `lambda + eta <= 0` the tail is bounded by the truncation mass times that
/// factor at `W = w_floor`.
pub fn exact_mgf(law: &ExactLaw, lambda: f64, eta: f64, w_floor: u64) -> MgfBracket {
    let s: f64 = law
        .support
        .iter()
        .zip(&law.probs)
        .map(|(o, p)| p * (lambda * o[1] as f64 + eta * o[0] as f64).exp())
        .sum();
    let wf = w_floor as f64;
    let factor = if lambda > 0.0 {
        f64::INFINITY
    } else if eta <= 0.0 {
        (lambda * wf).exp()
    } else if lambda + eta <= 0.0 {
        (eta + (lambda + eta) * wf).exp()
    } else {
        f64::INFINITY
    };
    let hi = if law.truncation_mass == 0.0 {
        s.ln()
    } else {
        (s + factor * law.truncation_mass).ln()
    };
    MgfBracket { lo: s.ln(), hi }
}

/// Certified interval for `Lambda_V(lambda) = -sup{eta : Lambda_{W,sigma} <= 0}`
/// from a truncated joint law, `lambda < 0`.
pub fn exact_lambda_v(law: &ExactLaw, w_floor: u64, lambda: f64, eta_max: f64) -> (f64, f64) {
    // the largest eta with hi(eta) <= 0 and the smallest with lo(eta) > 0
    // bracket the root of the true, increasing function
    let bisect = |pred: &dyn Fn(f64) -> bool| {
        let (mut a, mut b) = (0.0, eta_max);
        if !pred(a) {
            return a;
        }
        if pred(b) {
            return b;
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if pred(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let eta_safe = bisect(&|e| exact_mgf(law, lambda, e, w_floor).hi <= 0.0);
    let eta_over = bisect(&|e| exact_mgf(law, lambda, e, w_floor).lo <= 0.0);
    (-eta_over, -eta_safe)
}

/// `P(V_n = 0)` for each `n` in `1..=n_max`, via truncated powers of the
/// transition matrix on `0..=v_max`. Returns `(lower, upper)` pairs; the gap
/// is the mass that left the truncated state space.
pub fn prob_v_zero(spec: &CookieEnvironmentSpec, n_max: usize, v_max: u64) -> Result<Vec<(f64, f64)>> {
    let size = v_max + 1;
    if size.saturating_mul(size) > MAX_STATES {
        return Err(Error::StateSpace(size * size, MAX_STATES));
    }
    let vn = size as usize;
    let rows: Vec<(Vec<f64>, f64)> = (0..=v_max)
        .map(|k| {
            let r = transition_row(spec, k, v_max);
            let t = r.truncation_mass;
            (dense(&r, vn), t)
        })
        .collect();
    let mut pi = vec![0.0; vn];
    pi[0] = 1.0;
    let mut lost = 0.0;
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let mut next = vec![0.0; vn];
        for (k, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            lost += mass * rows[k].1;
            for (slot, p) in next.iter_mut().zip(&rows[k].0) {
                *slot += mass * p;
            }
        }
        pi = next;
        out.push((pi[0], (pi[0] + lost).min(1.0)));
    }
    Ok(out)
}

/// Outcome masses of a two-sided first-passage problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassage {
    /// `P(T_high < T_low, T_high <= max_steps)`.
    pub high: f64,
    /// `P(T_low < T_high, T_low <= max_steps)`.
    pub low: f64,
    /// Mass still between the barriers after `max_steps` steps.
    pub unresolved: f64,
}

/// The first-passage DP stops once less than this much mass is unresolved.
pub const RESOLVED_MASS: f64 = 1e-15;
/// States lighter than this are dropped into the unresolved mass.
const PRUNE_MASS: f64 = 1e-22;

/// Exact first-passage masses for the walk started at 0 between absorbing
/// levels `low < 0 < high`, summed over every path of at most `max_steps`
/// steps (fewer once the unresolved mass falls below [`RESOLVED_MASS`]).
///
/// Paths are merged by their sufficient state: the position plus, for each
/// site strictly between the barriers, its arrival count (capped at
/// `M + 1`) and, for mixture laws, the outcomes of its cookie departures.
pub fn first_passage(spec: &CookieEnvironmentSpec, low: i64, high: i64, max_steps: usize) -> Result<FirstPassage> {
    if !(low < 0 && high > 0) {
        return Err(Error::Precondition("need low < 0 < high".into()));
    }
    let m = spec.m();
    if m > 12 {
        return Err(Error::Precondition("first-passage oracle supports M <= 12".into()));
    }
    let width = (high - low - 1) as usize;
    let mixture = spec.weights().len() > 1;
    let shift = if mixture { m } else { 0 };
    // per-site code: arrivals << shift | decision bits
    let encode = |arrivals: usize, bits: u32| ((arrivals << shift) as u32 | bits) as u16;
    let right_prob = |arrivals: usize, bits: u32| -> f64 {
        if arrivals > m {
            return 0.5;
        }
        let j = arrivals;
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, v) in spec.weights().iter().zip(spec.components()) {
            let p = v.probs();
            let mut like = *w;
            if mixture {
                for (i, &pi) in p.iter().enumerate().take(j - 1) {
                    like *= if bits >> i & 1 == 1 { pi } else { 1.0 - pi };
                }
            }
            num += like * p[j - 1];
            den += like;
        }
        num / den
    };
    let origin = (-low - 1) as usize;
    let mut start = vec![0u16; width + 1];
    start[origin] = encode(1, 0);
    start[width] = origin as u16;
    let mut states: HashMap<Vec<u16>, f64> = HashMap::from([(start, 1.0)]);
    let mut out = FirstPassage {
        high: 0.0,
        low: 0.0,
        unresolved: 0.0,
    };
    let mask = (1u32 << shift) - 1;
    let mut pruned = 0.0;
    for _ in 0..max_steps {
        let mut next: HashMap<Vec<u16>, f64> = HashMap::with_capacity(states.len() * 2);
        for (key, mass) in states {
            let pos = key[width] as usize;
            let code = u32::from(key[pos]);
            let arrivals = (code >> shift) as usize;
            let bits = code & mask;
            let pr = right_prob(arrivals, bits);
            for (right, q) in [(true, pr), (false, 1.0 - pr)] {
                if q <= 0.0 {
                    continue;
                }
                let p = mass * q;
                let target = pos as i64 + if right { 1 } else { -1 };
                if target < 0 {
                    out.low += p;
                    continue;
                }
                if target as usize >= width {
                    out.high += p;
                    continue;
                }
                let mut k = key.clone();
                let mut here_bits = bits;
                if mixture && arrivals <= m && right {
                    here_bits |= 1 << (arrivals - 1);
                }
                k[pos] = encode(arrivals, here_bits);
                let t = target as usize;
                let tc = u32::from(k[t]);
                let ta = ((tc >> shift) as usize + 1).min(m + 1);
                k[t] = encode(ta, tc & mask);
                k[width] = t as u16;
                *next.entry(k).or_insert(0.0) += p;
            }
        }
        if next.len() as u64 > MAX_STATES {
            return Err(Error::StateSpace(next.len() as u64, MAX_STATES));
        }
        // negligible states move to the unresolved bucket, keeping the
        // result a certified bracket
        next.retain(|_, p| {
            if *p < PRUNE_MASS {
                pruned += *p;
                false
            } else {
                true
            }
        });
        states = next;
        if states.values().sum::<f64>() < RESOLVED_MASS {
            break;
        }
    }
    out.unresolved = states.values().sum::<f64>() + pruned;
    Ok(out)
}

/// Lower bound on `P(T_n < T_{-1})` from the alternate-then-climb strategy:
/// `(E[prod omega] E[prod (1 - omega)] / 2) (2/n)^(M+1) / 2` for `n >= 2`.
pub fn passage_lower_bound(spec: &CookieEnvironmentSpec, n: u64) -> f64 {
    let k = 0.5 * spec.mean_product() * spec.mean_complement_product();
    let climb: f64 = (2..n).map(|i| i as f64 / (i + 1) as f64).product();
    k * climb.powi(spec.m() as i32 + 1) * 0.5
}

/// Law of `m + 2 sum_{i<=m} V_i + 2 sum_i V^(m)_i` on values `<= t_max`,
/// composed from exact transition rows.
pub fn representation_law(spec: &CookieEnvironmentSpec, m: u64, t_max: u64) -> ExactLaw {
    let budget = if t_max >= m { ((t_max - m) / 2) as usize } else { 0 };
    let bn = budget + 1;
    let rows: Vec<ExactLaw> = (0..=budget as u64 + 1)
        .map(|r| failure_row(spec, r, budget as u64))
        .collect();
    let dense_rows: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (dense(r, bn), r.truncation_mass)).collect();
    let mut trunc = 0.0;
    // mass[v][s]: current population v and partial sum s, both <= budget
    let mut mass = vec![vec![0.0; bn]; bn];
    mass[0][0] = 1.0;
    for _ in 0..m {
        let mut next = vec![vec![0.0; bn]; bn];
        for v in 0..bn {
            for s in 0..bn {
                let p = mass[v][s];
                if p == 0.0 {
                    continue;
                }
                let (row, t) = &dense_rows[v + 1];
                trunc += p * t;
                for (j, q) in row.iter().enumerate() {
                    if s + j < bn {
                        next[j][s + j] += p * q;
                    } else {
                        trunc += p * q;
                    }
                }
            }
        }
        mass = next;
    }
    // absorbed chain: every generation with v > 0 adds at least one unit
    let mut done = vec![0.0; bn];
    for _ in 0..=budget {
        let mut next = vec![vec![0.0; bn]; bn];
        for s in 0..bn {
            done[s] += mass[0][s];
        }
        for v in 1..bn {
            for s in 0..bn {
                let p = mass[v][s];
                if p == 0.0 {
                    continue;
                }
                let (row, t) = &dense_rows[v];
                trunc += p * t;
                for (j, q) in row.iter().enumerate() {
                    if s + j < bn {
                        next[j][s + j] += p * q;
                    } else {
                        trunc += p * q;
                    }
                }
            }
        }
        mass = next;
    }
    trunc += mass.iter().skip(1).flatten().sum::<f64>();
    for s in 0..bn {
        done[s] += mass[0][s];
    }
    let map = done
        .iter()
        .enumerate()
        .map(|(s, &p)| (vec![m as i64 + 2 * s as i64], p))
        .collect();
    ExactLaw::from_map(&["t"], map, trunc)
}

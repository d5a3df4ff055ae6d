//! Tail-index and polynomial-decay estimation.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Pareto};

use crate::branching::{hitting_time_via_representation_with, FreshSites, RegenSample};
use crate::env::{compute_delta, CookieEnvironmentSpec};
use crate::error::{Error, Result};
use crate::parallel::MonteCarlo;
use crate::stats::{weighted_line_fit, Proportion};
use crate::walk::{backtrack_probability, simulate_extremes, EventEstimate, MIN_HITS};

/// Fewest order statistics or regression points a fit may rest on.
pub const MIN_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMethod {
    Hill,
    LogLogRegression,
}

impl fmt::Display for TailMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TailMethod::Hill => "hill",
            TailMethod::LogLogRegression => "loglog",
        })
    }
}

/// A frequency at one grid point of a decay regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub n: u64,
    pub hits: u64,
    pub reps: u64,
    /// Included in the fit (at least [`MIN_HITS`] hits).
    pub used: bool,
}

impl DecayPoint {
    pub fn new(n: u64, hits: u64, reps: u64) -> Self {
        Self {
            n,
            hits,
            reps,
            used: hits >= MIN_HITS,
        }
    }

    pub fn p(&self) -> f64 {
        self.hits as f64 / self.reps as f64
    }

    pub fn se(&self) -> f64 {
        Proportion::new(self.hits, self.reps).se()
    }
}

/// Estimated tail exponent with a 95% interval.
///
/// For [`TailMethod::Hill`] `exponent` is the tail index `kappa` in
/// `P(Z > x) ~ C x^-kappa`; for [`TailMethod::LogLogRegression`] it is the
/// fitted slope of `log p` against `log n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub k_used: usize,
    pub ci: (f64, f64),
    pub method: TailMethod,
    /// Fraction of the input dropped before fitting (censored cycles).
    pub excluded: f64,
    pub points: Vec<DecayPoint>,
}

impl TailFit {
    pub fn contains(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }

    /// Grid-point rows followed by a fit summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,hits,reps,p,se,used\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{}\n",
                p.n,
                p.hits,
                p.reps,
                p.p(),
                p.se(),
                u8::from(p.used)
            ));
        }
        out.push_str(&format!(
            "# {} exponent {:.6} ci [{:.6}, {:.6}] amplitude {:.6e} k {}\n",
            self.method, self.exponent, self.ci.0, self.ci.1, self.amplitude, self.k_used
        ));
        out
    }

    /// `log n  log p` pairs of the points used in the fit.
    pub fn to_plot(&self) -> String {
        let mut out = String::from("# log_n log_p\n");
        for p in self.points.iter().filter(|p| p.used) {
            out.push_str(&format!("{:.12e} {:.12e}\n", (p.n as f64).ln(), p.p().ln()));
        }
        out
    }
}

/// Default number of order statistics, `floor(N^(2/3))`.
pub fn default_k(n: usize) -> usize {
    (n as f64).powf(2.0 / 3.0).floor() as usize
}

/// Hill estimator over the top `k` order statistics.
///
/// With ties at the `(k+1)`-th largest value the estimator uses only the
/// values strictly above it, so `k_used` can be smaller than `k`.
pub fn hill_estimate(samples: &[f64], k: usize) -> Result<TailFit> {
    let n = samples.len();
    if k < MIN_K || 2 * k >= n {
        return Err(Error::Precondition(format!(
            "need {MIN_K} <= k < N/2, got k = {k}, N = {n}"
        )));
    }
    if samples.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Precondition("samples must be finite and nonnegative".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let k_used = sorted[..k].partition_point(|&x| x > threshold);
    if k_used < MIN_K || threshold <= 0.0 {
        return Err(Error::Degenerate(format!(
            "only {k_used} distinct exceedances above {threshold}"
        )));
    }
    let gamma = sorted[..k_used].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k_used as f64;
    let kappa = 1.0 / gamma;
    let half = 1.96 / (k_used as f64).sqrt();
    Ok(TailFit {
        exponent: kappa,
        amplitude: k_used as f64 / n as f64 * threshold.powf(kappa),
        k_used,
        ci: (kappa * (1.0 - half), kappa * (1.0 + half)),
        method: TailMethod::Hill,
        excluded: 0.0,
        points: Vec::new(),
    })
}

/// Hill estimates over a range of `k`, for stability plots.
pub fn hill_stability(samples: &[f64], ks: &[usize]) -> Vec<(usize, Option<f64>)> {
    ks.iter()
        .map(|&k| (k, hill_estimate(samples, k).ok().map(|f| f.exponent)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleField {
    Sigma,
    W,
}

/// Hill estimate on `sigma` or `W` over uncensored cycles; `k = None` uses
/// [`default_k`] of the uncensored count.
pub fn hill_on_cycles(samples: &[RegenSample], field: CycleField, k: Option<usize>) -> Result<TailFit> {
    let xs: Vec<f64> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| match field {
            CycleField::Sigma => s.sigma as f64,
            CycleField::W => s.w as f64,
        })
        .collect();
    let mut fit = hill_estimate(&xs, k.unwrap_or_else(|| default_k(xs.len())))?;
    fit.excluded = 1.0 - xs.len() as f64 / samples.len() as f64;
    Ok(fit)
}

/// Weighted fit of `log p` on `log n` over points with enough hits; weights
/// are the delta-method inverse variances `reps p / (1 - p)`.
pub fn fit_loglog(points: Vec<DecayPoint>) -> Result<TailFit> {
    let used: Vec<&DecayPoint> = points.iter().filter(|p| p.used).collect();
    if used.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} of {} grid points have at least {MIN_HITS} hits",
            used.len(),
            points.len()
        )));
    }
    let x: Vec<f64> = used.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| p.p().ln()).collect();
    let w: Vec<f64> = used
        .iter()
        .map(|p| {
            let q = p.p();
            p.reps as f64 * q / (1.0 - q).max(1.0 / p.reps as f64)
        })
        .collect();
    let fit = weighted_line_fit(&x, &y, &w).ok_or_else(|| Error::Degenerate("grid has a single distinct n".into()))?;
    Ok(TailFit {
        exponent: fit.slope,
        amplitude: fit.intercept.exp(),
        k_used: used.len(),
        ci: (fit.slope - 1.96 * fit.slope_se, fit.slope + 1.96 * fit.slope_se),
        method: TailMethod::LogLogRegression,
        excluded: 0.0,
        points,
    })
}

/// Where the summands of [`heavy_sum_exponent`] come from.
#[derive(Debug, Clone, Copy)]
pub enum SumSource<'a> {
    /// Uniform resampling with replacement from an observed pool.
    Pool(&'a [f64]),
    /// Fresh Pareto draws, `P(Z > z) = (scale / z)^kappa` for `z >= scale`.
    Pareto { kappa: f64, scale: f64 },
}

impl SumSource<'_> {
    pub fn mean(&self) -> f64 {
        match *self {
            SumSource::Pool(xs) => xs.iter().sum::<f64>() / xs.len() as f64,
            SumSource::Pareto { kappa, scale } if kappa > 1.0 => kappa * scale / (kappa - 1.0),
            SumSource::Pareto { .. } => f64::INFINITY,
        }
    }
}

/// Slope of `log P(Z_1 + ... + Z_n > x n)` against `log n`.
pub fn heavy_sum_exponent(
    source: SumSource<'_>,
    x: f64,
    n_grid: &[u64],
    reps: u64,
    mc: &MonteCarlo,
) -> Result<TailFit> {
    let mean = source.mean();
    if !(x > mean) {
        return Err(Error::Precondition(format!("level {x} must exceed the mean {mean}")));
    }
    let pareto = match source {
        SumSource::Pareto { kappa, scale } => {
            Some(Pareto::new(scale, kappa).map_err(|e| Error::Precondition(format!("pareto: {e}")))?)
        }
        SumSource::Pool([]) => return Err(Error::Precondition("empty pool".into())),
        SumSource::Pool(_) => None,
    };
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let level = x * n as f64;
        let hits = mc.count("heavy-sum", n, reps, |_, rng| {
            let mut s = 0.0;
            for _ in 0..n {
                s += match (&source, &pareto) {
                    (_, Some(d)) => d.sample(rng),
                    (SumSource::Pool(xs), None) => xs[rng.random_range(0..xs.len())],
                    _ => unreachable!(),
                };
                if s > level {
                    return true;
                }
            }
            false
        });
        points.push(DecayPoint::new(n, hits, reps));
    }
    fit_loglog(points)
}

/// Generations the absorbed chain may run in a slowdown draw.
pub const ABSORBED_CAP: u64 = 100_000_000;

/// Counts of `{T_n > n t}` for several `t` on common draws of the branching
/// representation, plus the number of draws whose absorbed chain was cut off
/// before the outcome was decided.
pub fn hitting_slowdown_counts(
    spec: &CookieEnvironmentSpec,
    n: u64,
    ts: &[f64],
    reps: u64,
    mc: &MonteCarlo,
) -> (Vec<u64>, u64) {
    let draws = mc.map("slowdown-t", n, reps, |_, rng| {
        hitting_time_via_representation_with(&mut FreshSites::new(spec), n, ABSORBED_CAP, rng)
    });
    let counts = ts
        .iter()
        .map(|&t| {
            let level = n as f64 * t;
            draws.iter().filter(|d| d.value as f64 > level).count() as u64
        })
        .collect();
    let max_level = n as f64 * ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let undecided = draws
        .iter()
        .filter(|d| d.censored && d.value as f64 <= max_level)
        .count() as u64;
    (counts, undecided)
}

fn require_ballistic(spec: &CookieEnvironmentSpec) -> Result<f64> {
    let delta = compute_delta(spec);
    if delta <= 2.0 {
        return Err(Error::Precondition(format!(
            "slowdown exponents need delta > 2, got {delta}"
        )));
    }
    Ok(delta)
}

/// Relative margin kept between slowdown levels and the speed.
pub const LEVEL_MARGIN: f64 = 0.05;

/// Decay exponent of `P(T_n > n t)` from branching-representation draws.
pub fn slowdown_exponent_t(
    spec: &CookieEnvironmentSpec,
    t: f64,
    v0_hat: f64,
    n_grid: &[u64],
    reps: u64,
    mc: &MonteCarlo,
) -> Result<TailFit> {
    require_ballistic(spec)?;
    if !(t * v0_hat > 1.0 + LEVEL_MARGIN) {
        return Err(Error::Precondition(format!(
            "t = {t} is not above 1/v0 = {:.4} by the required margin",
            1.0 / v0_hat
        )));
    }
    let points = n_grid
        .iter()
        .map(|&n| DecayPoint::new(n, hitting_slowdown_counts(spec, n, &[t], reps, mc).0[0], reps))
        .collect();
    fit_loglog(points)
}

/// Walk frequencies of `{X_n < n x}` and of the smaller event
/// `{T_ceil(n x) > n}`, read off the same trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichPoint {
    pub n: u64,
    pub position: EventEstimate,
    pub passage: EventEstimate,
}

impl SandwichPoint {
    /// `freq(X_n < nx) >= freq(T > n) - 3 SE`.
    pub fn holds(&self) -> bool {
        self.position.p() >= self.passage.p() - 3.0 * self.passage.freq.se()
    }
}

/// Walks share streams with [`crate::walk::slowdown_event_probability`], so
/// the position frequencies agree with it exactly.
pub fn walk_slowdown_point(spec: &CookieEnvironmentSpec, n: u64, x: f64, reps: u64, mc: &MonteCarlo) -> SandwichPoint {
    let level = n as f64 * x;
    let passage_level = level.ceil() as i64;
    let flags = mc.map("walk-slowdown", n, reps, |_, rng| {
        let p = simulate_extremes(spec, n, rng);
        ((p.end as f64) < level, p.max < passage_level)
    });
    let a = flags.iter().filter(|f| f.0).count() as u64;
    let b = flags.iter().filter(|f| f.1).count() as u64;
    SandwichPoint {
        n,
        position: EventEstimate::new(a, reps),
        passage: EventEstimate::new(b, reps),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkSlowdown {
    pub fit: TailFit,
    pub sandwich: Vec<SandwichPoint>,
}

/// Decay exponent of `P(X_n < n x)` from direct walk simulation.
pub fn slowdown_exponent_x(
    spec: &CookieEnvironmentSpec,
    x: f64,
    v0_hat: f64,
    n_grid: &[u64],
    reps: u64,
    mc: &MonteCarlo,
) -> Result<WalkSlowdown> {
    require_ballistic(spec)?;
    if !(x > 0.0 && x < v0_hat * (1.0 - LEVEL_MARGIN)) {
        return Err(Error::Precondition(format!(
            "x = {x} must lie in (0, v0) with margin, v0 = {v0_hat:.4}"
        )));
    }
    let sandwich: Vec<SandwichPoint> = n_grid
        .iter()
        .map(|&n| walk_slowdown_point(spec, n, x, reps, mc))
        .collect();
    let points = sandwich
        .iter()
        .map(|s| DecayPoint::new(s.n, s.position.freq.hits, reps))
        .collect();
    Ok(WalkSlowdown {
        fit: fit_loglog(points)?,
        sandwich,
    })
}

/// Terms of `P(X_n < nx) <= P(T_ceil(n(x+eps)) > n) + P(backtrack by n eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperBoundCheck {
    pub n: u64,
    pub position: EventEstimate,
    pub passage: EventEstimate,
    pub backtrack: EventEstimate,
    /// `(n eps)^(1 - delta)`, the decay the backtrack term should follow.
    pub backtrack_scale: f64,
}

impl UpperBoundCheck {
    pub fn slack(&self) -> f64 {
        let se = (self.position.freq.se().powi(2) + self.passage.freq.se().powi(2) + self.backtrack.freq.se().powi(2))
            .sqrt();
        self.passage.p() + self.backtrack.p() + 3.0 * se - self.position.p()
    }

    pub fn holds(&self) -> bool {
        self.slack() >= 0.0
    }
}

/// Estimates each term of the upper-bound decomposition at one `n`. The
/// passage term comes from the walk at level `ceil(n(x+eps))`; the
/// backtrack term is the probability that after reaching that level the
/// walk returns to `ceil(nx) - 1`, observed for `4n` further steps.
pub fn slowdown_upper_bound(
    spec: &CookieEnvironmentSpec,
    n: u64,
    x: f64,
    eps: f64,
    reps: u64,
    mc: &MonteCarlo,
) -> Result<UpperBoundCheck> {
    let delta = require_ballistic(spec)?;
    let position = walk_slowdown_point(spec, n, x, reps, mc).position;
    let passage = walk_slowdown_point(spec, n, x + eps, reps, mc).passage;
    let low = (n as f64 * x).ceil() as i64 - 1;
    let high = (n as f64 * (x + eps)).ceil() as i64;
    let backtrack = backtrack_probability(spec, low.max(0), high - low.max(0), 4 * n, reps, mc)?;
    Ok(UpperBoundCheck {
        n,
        position,
        passage,
        backtrack,
        backtrack_scale: (n as f64 * eps).powf(1.0 - delta),
    })
}

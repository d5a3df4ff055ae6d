//! Direct simulation of the excited random walk under the averaged law.
//!
//! Sites are sampled lazily on first arrival and kept in a two-sided table,
//! so an `n`-step trajectory touches `O(n)` memory regardless of where it
//! wanders. The starting site counts as visited once at time zero, and the
//! departure after the `j`-th arrival at `x` uses `omega_x(j)`.

use rand::RngCore;

use crate::env::{compute_delta, CookieEnvironmentSpec};
use crate::error::{Error, Result};
use crate::parallel::MonteCarlo;
use crate::rng::{bernoulli53, threshold53, FairCoins, ReplicaRng};
use crate::stats::{self, Proportion};

const UNSAMPLED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Site {
    visits: u32,
    component: u32,
}

impl Default for Site {
    fn default() -> Self {
        Self {
            visits: 0,
            component: UNSAMPLED,
        }
    }
}

/// Sites `0, 1, 2, ...` in `right`, sites `-1, -2, ...` in `left`.
#[derive(Debug, Clone, Default)]
struct SiteTable {
    right: Vec<Site>,
    left: Vec<Site>,
}

impl SiteTable {
    #[inline]
    fn get_mut(&mut self, x: i64) -> &mut Site {
        let (side, i) = if x >= 0 {
            (&mut self.right, x as usize)
        } else {
            (&mut self.left, (-x - 1) as usize)
        };
        if i >= side.len() {
            side.resize((i + 1).max(2 * side.len()), Site::default());
        }
        &mut side[i]
    }

    fn get(&self, x: i64) -> Option<&Site> {
        if x >= 0 {
            self.right.get(x as usize)
        } else {
            self.left.get((-x - 1) as usize)
        }
    }
}

/// A single trajectory together with the environment it has revealed.
#[derive(Debug, Clone)]
pub struct WalkState<'a> {
    spec: &'a CookieEnvironmentSpec,
    thresholds: Vec<Vec<u64>>,
    sites: SiteTable,
    position: i64,
    steps: u64,
    coins: FairCoins,
    fair_decisions: u64,
    fair_rights: u64,
}

impl<'a> WalkState<'a> {
    pub fn new<R: RngCore + ?Sized>(spec: &'a CookieEnvironmentSpec, rng: &mut R) -> Self {
        let thresholds = spec
            .components()
            .iter()
            .map(|v| v.probs().iter().map(|&p| threshold53(p)).collect())
            .collect();
        let mut walk = Self {
            spec,
            thresholds,
            sites: SiteTable::default(),
            position: 0,
            steps: 0,
            coins: FairCoins::new(),
            fair_decisions: 0,
            fair_rights: 0,
        };
        walk.arrive(0, rng);
        walk
    }

    #[inline]
    fn arrive<R: RngCore + ?Sized>(&mut self, x: i64, rng: &mut R) {
        let site = self.sites.get_mut(x);
        if site.component == UNSAMPLED {
            site.component = self.spec.sample_component(rng) as u32;
        }
        site.visits += 1;
    }

    /// Takes one step and returns the new position.
    #[inline]
    pub fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> i64 {
        let site = *self.sites.get_mut(self.position);
        let j = site.visits as usize;
        let cookies = &self.thresholds[site.component as usize];
        let right = if j <= cookies.len() {
            bernoulli53(cookies[j - 1], rng)
        } else {
            let b = self.coins.flip(rng);
            self.fair_decisions += 1;
            self.fair_rights += u64::from(b);
            b
        };
        self.position += if right { 1 } else { -1 };
        self.steps += 1;
        self.arrive(self.position, rng);
        self.position
    }

    pub fn position(&self) -> i64 {
        self.position
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    /// Completed arrivals at `x`, counting the start as one arrival at 0.
    pub fn visits(&self, x: i64) -> u32 {
        self.sites.get(x).map_or(0, |s| s.visits)
    }

    /// Mixture component realised at `x`, if the walk has been there.
    pub fn component(&self, x: i64) -> Option<usize> {
        self.sites
            .get(x)
            .filter(|s| s.component != UNSAMPLED)
            .map(|s| s.component as usize)
    }

    /// `(decisions, right steps)` taken from sites with no cookies left.
    pub fn fair_counters(&self) -> (u64, u64) {
        (self.fair_decisions, self.fair_rights)
    }
}

pub fn simulate_position<R: RngCore + ?Sized>(spec: &CookieEnvironmentSpec, n: u64, rng: &mut R) -> i64 {
    let mut w = WalkState::new(spec, rng);
    for _ in 0..n {
        w.step(rng);
    }
    w.position()
}

/// Endpoint and running extremes of an `n`-step trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSummary {
    pub end: i64,
    pub max: i64,
    pub min: i64,
}

pub fn simulate_extremes<R: RngCore + ?Sized>(spec: &CookieEnvironmentSpec, n: u64, rng: &mut R) -> PathSummary {
    let mut w = WalkState::new(spec, rng);
    let (mut max, mut min) = (0, 0);
    for _ in 0..n {
        let x = w.step(rng);
        max = max.max(x);
        min = min.min(x);
    }
    PathSummary {
        end: w.position(),
        max,
        min,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Passage {
    Hit(u64),
    Censored(u64),
}

impl Passage {
    pub fn hit(self) -> Option<u64> {
        match self {
            Passage::Hit(t) => Some(t),
            Passage::Censored(_) => None,
        }
    }

    /// Finite times as-is, censored ones as `+inf`.
    pub fn as_f64(self) -> f64 {
        match self {
            Passage::Hit(t) => t as f64,
            Passage::Censored(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HittingResult {
    pub target: i64,
    pub time: Passage,
    pub path_max: i64,
    pub path_min: i64,
}

pub fn hitting_time<R: RngCore + ?Sized>(
    spec: &CookieEnvironmentSpec,
    target: i64,
    cap: u64,
    rng: &mut R,
) -> Result<HittingResult> {
    if cap < target.unsigned_abs() {
        return Err(Error::Precondition(format!(
            "cap {cap} is below |target| = {}",
            target.unsigned_abs()
        )));
    }
    let mut w = WalkState::new(spec, rng);
    let (mut max, mut min) = (0, 0);
    while w.position() != target && w.step_count() < cap {
        let x = w.step(rng);
        max = max.max(x);
        min = min.min(x);
    }
    let time = if w.position() == target {
        Passage::Hit(w.step_count())
    } else {
        Passage::Censored(cap)
    };
    Ok(HittingResult {
        target,
        time,
        path_max: max,
        path_min: min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEstimate {
    pub mean: f64,
    pub se: f64,
    pub reps: u64,
}

/// Mean of `X_n / n` over independent replicas.
pub fn estimate_speed(spec: &CookieEnvironmentSpec, n: u64, reps: u64, mc: &MonteCarlo) -> SpeedEstimate {
    let xs = mc.map("walk-speed", n, reps, |_, rng: &mut ReplicaRng| {
        simulate_position(spec, n, rng) as f64 / n as f64
    });
    let se = if xs.len() > 1 {
        stats::standard_error(&xs)
    } else {
        f64::NAN
    };
    SpeedEstimate {
        mean: stats::mean(&xs),
        se,
        reps,
    }
}

/// Below this many hits a frequency estimate is flagged unreliable.
pub const MIN_HITS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventEstimate {
    pub freq: Proportion,
    pub wilson: (f64, f64),
    pub reliable: bool,
}

impl EventEstimate {
    pub fn new(hits: u64, trials: u64) -> Self {
        let freq = Proportion::new(hits, trials);
        Self {
            freq,
            wilson: freq.wilson(),
            reliable: hits >= MIN_HITS,
        }
    }

    pub fn p(&self) -> f64 {
        self.freq.p()
    }
}

/// Frequency of `{X_n < n x}`. Replica streams depend only on `n`, so calls
/// with different `x` see identical trajectories.
pub fn slowdown_event_probability(
    spec: &CookieEnvironmentSpec,
    n: u64,
    x: f64,
    reps: u64,
    mc: &MonteCarlo,
) -> Result<EventEstimate> {
    let delta = compute_delta(spec);
    if delta <= 2.0 {
        return Err(Error::Precondition(format!("slowdowns need delta > 2, got {delta}")));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Precondition(format!("x = {x} outside (0, 1)")));
    }
    let level = n as f64 * x;
    let hits = mc.count("walk-slowdown", n, reps, |_, rng| {
        (simulate_position(spec, n, rng) as f64) < level
    });
    Ok(EventEstimate::new(hits, reps))
}

/// Frequency of `{|X_n| <= n^(1/3)}`, the event behind the naive
/// trap-the-walk slowdown strategy.
pub fn small_displacement_probability(
    spec: &CookieEnvironmentSpec,
    n: u64,
    reps: u64,
    mc: &MonteCarlo,
) -> EventEstimate {
    let radius = (n as f64).cbrt();
    let hits = mc.count("walk-small", n, reps, |_, rng| {
        (simulate_position(spec, n, rng).abs() as f64) <= radius
    });
    EventEstimate::new(hits, reps)
}

/// Backtracking frequencies for several `r` on common trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktrackProfile {
    pub n: i64,
    pub cap: u64,
    pub rs: Vec<i64>,
    /// Events observed within `cap` steps after `T_{n + r_max}`.
    pub estimates: Vec<EventEstimate>,
    /// Same events with the window shortened to `cap / 2`.
    pub half_cap: Vec<EventEstimate>,
    /// Fraction of walks that never reached `n + r_max` within `cap` steps.
    pub censor_rate: f64,
}

#[derive(Debug, Clone)]
struct BacktrackRun {
    full: Vec<bool>,
    half: Vec<bool>,
    censored: bool,
}

fn backtrack_run<R: RngCore + ?Sized>(
    spec: &CookieEnvironmentSpec,
    n: i64,
    rs: &[i64],
    cap: u64,
    rng: &mut R,
) -> BacktrackRun {
    let r_max = *rs.iter().max().expect("nonempty");
    let mut w = WalkState::new(spec, rng);
    // passage[i] = T_{n + i}, for 1 <= i <= r_max
    let mut passage = vec![u64::MAX; (r_max + 1) as usize];
    let mut reached = 0i64;
    let mut last_low: Option<u64> = if n >= 0 { Some(0) } else { None };
    let mut censored = false;
    while reached < r_max {
        if w.step_count() >= cap {
            censored = true;
            break;
        }
        let x = w.step(rng);
        if x <= n {
            last_low = Some(w.step_count());
        } else if x - n > reached {
            reached = x - n;
            passage[reached as usize] = w.step_count();
        }
    }
    let mut low_at_half = last_low;
    if !censored {
        for k in 1..=cap {
            let x = w.step(rng);
            if x <= n {
                last_low = Some(w.step_count());
            }
            if k == cap / 2 {
                low_at_half = last_low;
            }
        }
    } else {
        low_at_half = last_low;
    }
    let event = |low: Option<u64>, r: i64| match low {
        Some(t) => passage[r as usize] != u64::MAX && t > passage[r as usize],
        None => false,
    };
    BacktrackRun {
        full: rs.iter().map(|&r| event(last_low, r)).collect(),
        half: rs.iter().map(|&r| event(low_at_half, r)).collect(),
        censored,
    }
}

/// Frequencies of `{inf_{k >= T_{n+r}} X_k <= n}` for each `r` in `rs`.
///
/// The observation window ends `cap` steps after `T_{n + r_max}` for every
/// `r`, so the events are nested in `r` on each trajectory. Walks that do not
/// reach `n + r_max` within `cap` steps are censored and count as non-events
/// for the levels they never reached. All values are lower bounds on the
/// infinite-horizon probabilities.
pub fn backtrack_profile(
    spec: &CookieEnvironmentSpec,
    n: i64,
    rs: &[i64],
    cap: u64,
    reps: u64,
    mc: &MonteCarlo,
) -> Result<BacktrackProfile> {
    let delta = compute_delta(spec);
    if delta <= 1.0 {
        return Err(Error::Precondition(format!(
            "backtracking bounds need delta > 1, got {delta}"
        )));
    }
    if rs.is_empty() || rs.iter().any(|&r| r < 1) {
        return Err(Error::Precondition("every r must be at least 1".into()));
    }
    if n < 0 {
        return Err(Error::Precondition("n must be nonnegative".into()));
    }
    let runs = mc.map("walk-backtrack", n as u64, reps, |_, rng| {
        backtrack_run(spec, n, rs, cap, rng)
    });
    let tally = |pick: fn(&BacktrackRun) -> &Vec<bool>| -> Vec<EventEstimate> {
        (0..rs.len())
            .map(|i| {
                let hits = runs.iter().filter(|r| pick(r)[i]).count() as u64;
                EventEstimate::new(hits, reps)
            })
            .collect()
    };
    let censored = runs.iter().filter(|r| r.censored).count();
    Ok(BacktrackProfile {
        n,
        cap,
        rs: rs.to_vec(),
        estimates: tally(|r| &r.full),
        half_cap: tally(|r| &r.half),
        censor_rate: censored as f64 / reps as f64,
    })
}

pub fn backtrack_probability(
    spec: &CookieEnvironmentSpec,
    n: i64,
    r: i64,
    cap: u64,
    reps: u64,
    mc: &MonteCarlo,
) -> Result<EventEstimate> {
    Ok(backtrack_profile(spec, n, &[r], cap, reps, mc)?.estimates[0])
}

//! The branching process with migration built from per-site coin tosses.
//!
//! Site `i` carries a Bernoulli sequence whose `j`-th trial succeeds with
//! probability `omega_i(j)` for `j <= M` and `1/2` afterwards. With
//! `F^(i)_m` the number of failures before the `m`-th success at site `i`
//! (and `F^(i)_0 = 0`),
//!
//! * `V_0 = 0`, `V_{i+1} = F^(i)_{V_i + 1}`;
//! * `V^(n)_0 = V_n`, `V^(n)_i = F^(n+i-1)_{V^(n)_{i-1}}`, absorbed at 0.
//!
//! `T_n` has the law of `n + 2 sum_{i<=n} V_i + 2 sum_i V^(n)_i`, and the
//! excursions of `V` away from 0 are i.i.d. regeneration cycles `(sigma, W)`.

use rand::RngCore;

use crate::env::{CookieEnvironmentSpec, CookieVector};
use crate::error::{Error, Result};
use crate::rng::{bernoulli, bernoulli53, threshold53, FairCoins};

/// One site's coin sequence, revealed lazily and never redrawn.
#[derive(Debug, Clone)]
pub struct CoinSite {
    cookies: CookieVector,
    outcomes: Vec<bool>,
    coins: FairCoins,
}

impl CoinSite {
    pub fn new(cookies: CookieVector) -> Self {
        Self {
            cookies,
            outcomes: Vec::new(),
            coins: FairCoins::new(),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(spec: &CookieEnvironmentSpec, rng: &mut R) -> Self {
        Self::new(spec.sample_site(rng).clone())
    }

    /// Outcomes drawn so far; `true` is a success.
    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    /// `F_m`: failures before the `m`-th success, extending the sequence as
    /// needed.
    pub fn failures<R: RngCore + ?Sized>(&mut self, m: u64, rng: &mut R) -> u64 {
        if m == 0 {
            return 0;
        }
        let mut successes = 0;
        let mut failures = 0;
        let mut j = 0;
        loop {
            if j == self.outcomes.len() {
                let p = self.cookies.right_prob(j as u64 + 1);
                let b = bernoulli(p, &mut self.coins, rng);
                self.outcomes.push(b);
            }
            if self.outcomes[j] {
                successes += 1;
                if successes == m {
                    return failures;
                }
            } else {
                failures += 1;
            }
            j += 1;
        }
    }
}

/// `V_{i+1}` from `V_i` on the given site.
pub fn step_v<R: RngCore + ?Sized>(current: u64, site: &mut CoinSite, rng: &mut R) -> u64 {
    site.failures(current + 1, rng)
}

/// Fast sampler for `F_m` at a fresh site, without keeping the outcomes.
#[derive(Debug, Clone)]
pub struct FreshSites<'a> {
    spec: &'a CookieEnvironmentSpec,
    thresholds: Vec<Vec<u64>>,
    coins: FairCoins,
}

impl<'a> FreshSites<'a> {
    pub fn new(spec: &'a CookieEnvironmentSpec) -> Self {
        let thresholds = spec
            .components()
            .iter()
            .map(|v| v.probs().iter().map(|&p| threshold53(p)).collect())
            .collect();
        Self {
            spec,
            thresholds,
            coins: FairCoins::new(),
        }
    }

    /// Failures before the `m`-th success at a newly drawn site.
    #[inline]
    pub fn failures<R: RngCore + ?Sized>(&mut self, m: u64, rng: &mut R) -> u64 {
        if m == 0 {
            return 0;
        }
        let c = self.spec.sample_component(rng);
        let mut need = m;
        let mut failures = 0;
        for &t in &self.thresholds[c] {
            if bernoulli53(t, rng) {
                need -= 1;
                if need == 0 {
                    return failures;
                }
            } else {
                failures += 1;
            }
        }
        failures + self.coins.failures_before(need, rng)
    }

    /// `V_{i+1}` given `V_i = current`.
    #[inline]
    pub fn step<R: RngCore + ?Sized>(&mut self, current: u64, rng: &mut R) -> u64 {
        self.failures(current + 1, rng)
    }
}

/// One excursion of `V` away from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegenSample {
    /// Return time to 0, or the number of generations run when censored.
    pub sigma: u64,
    /// `sum_{i <= sigma} V_i`, partial when censored.
    pub w: u64,
    pub censored: bool,
}

impl RegenSample {
    pub fn complete(sigma: u64, w: u64) -> Self {
        Self {
            sigma,
            w,
            censored: false,
        }
    }
}

/// Runs `V` from 0 until it returns to 0 or `cap` generations have passed.
pub fn sample_regeneration_with<R: RngCore + ?Sized>(sites: &mut FreshSites<'_>, cap: u64, rng: &mut R) -> RegenSample {
    let mut v = 0;
    let mut w = 0u64;
    for i in 1..=cap {
        v = sites.step(v, rng);
        w += v;
        if v == 0 {
            return RegenSample::complete(i, w);
        }
    }
    RegenSample {
        sigma: cap,
        w,
        censored: true,
    }
}

pub fn sample_regeneration<R: RngCore + ?Sized>(spec: &CookieEnvironmentSpec, cap: u64, rng: &mut R) -> RegenSample {
    sample_regeneration_with(&mut FreshSites::new(spec), cap.max(1), rng)
}

/// Total progeny `sum_{i >= 1} V^(n)_i` of the immigrant-free chain started
/// from `start`, with a censor flag if it is still alive after `cap`
/// generations.
pub fn sample_absorbed_process<R: RngCore + ?Sized>(
    sites: &mut FreshSites<'_>,
    start: u64,
    cap: u64,
    rng: &mut R,
) -> (u64, bool) {
    let mut v = start;
    let mut total = 0u64;
    for _ in 0..cap {
        if v == 0 {
            return (total, false);
        }
        v = sites.failures(v, rng);
        total += v;
    }
    (total, v != 0)
}

/// Paths of `V_0..V_{n+horizon}` and `V^(n)_0..V^(n)_horizon` driven by the
/// same sites: generation `k` of either chain reads site `k - 1`.
#[derive(Debug, Clone)]
pub struct CoupledPaths {
    pub v: Vec<u64>,
    pub absorbed: Vec<u64>,
}

pub fn coupled_paths<R: RngCore + ?Sized>(
    spec: &CookieEnvironmentSpec,
    n: usize,
    horizon: usize,
    rng: &mut R,
) -> CoupledPaths {
    let mut sites: Vec<CoinSite> = (0..n + horizon).map(|_| CoinSite::sample(spec, rng)).collect();
    let mut v = vec![0u64; n + horizon + 1];
    for k in 1..=n + horizon {
        v[k] = step_v(v[k - 1], &mut sites[k - 1], rng);
    }
    let mut absorbed = vec![v[n]; horizon + 1];
    for i in 1..=horizon {
        absorbed[i] = sites[n + i - 1].failures(absorbed[i - 1], rng);
    }
    CoupledPaths { v, absorbed }
}

/// One draw of `n + 2 sum_{i<=n} V_i + 2 sum_i V^(n)_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepresentationDraw {
    pub value: u64,
    /// `V_n`, the population handed to the absorbed chain.
    pub v_n: u64,
    pub censored: bool,
}

pub fn hitting_time_via_representation_with<R: RngCore + ?Sized>(
    sites: &mut FreshSites<'_>,
    n: u64,
    cap: u64,
    rng: &mut R,
) -> RepresentationDraw {
    let mut v = 0;
    let mut sum = 0u64;
    for _ in 0..n {
        v = sites.step(v, rng);
        sum += v;
    }
    let (tail, censored) = sample_absorbed_process(sites, v, cap, rng);
    RepresentationDraw {
        value: n + 2 * (sum + tail),
        v_n: v,
        censored,
    }
}

pub fn hitting_time_via_representation<R: RngCore + ?Sized>(
    spec: &CookieEnvironmentSpec,
    n: u64,
    cap: u64,
    rng: &mut R,
) -> Result<RepresentationDraw> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    Ok(hitting_time_via_representation_with(
        &mut FreshSites::new(spec),
        n,
        cap,
        rng,
    ))
}

/// Representation draw of `T_n` that gives up with `None` as soon as the
/// value is known to exceed `time_cap`.
pub fn representation_time_capped<R: RngCore + ?Sized>(
    sites: &mut FreshSites<'_>,
    n: u64,
    time_cap: u64,
    rng: &mut R,
) -> Option<u64> {
    let budget = time_cap.checked_sub(n)? / 2;
    let mut v = 0;
    let mut sum = 0u64;
    for _ in 0..n {
        v = sites.step(v, rng);
        sum += v;
        if sum > budget {
            return None;
        }
    }
    while v != 0 {
        v = sites.failures(v, rng);
        sum += v;
        if sum > budget {
            return None;
        }
    }
    Some(n + 2 * sum)
}

/// Largest censor fraction the regeneration speed estimator accepts.
pub const MAX_CENSOR_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub se: f64,
    pub used: u64,
    pub censor_rate: f64,
}

/// `E[sigma] / E[sigma + 2 W]` as a ratio of sample means over the
/// uncensored cycles, with a delta-method standard error.
pub fn estimate_speed_regen(samples: &[RegenSample]) -> Result<RatioEstimate> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no regeneration samples".into()));
    }
    let censored = samples.iter().filter(|s| s.censored).count();
    let censor_rate = censored as f64 / samples.len() as f64;
    if censor_rate > MAX_CENSOR_RATE {
        return Err(Error::Precondition(format!(
            "censor rate {censor_rate:.4} exceeds {MAX_CENSOR_RATE}; raise the cap"
        )));
    }
    let done: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| (s.sigma as f64, s.sigma as f64 + 2.0 * s.w as f64))
        .collect();
    let n = done.len() as f64;
    let ma = done.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = done.iter().map(|p| p.1).sum::<f64>() / n;
    let r = ma / mb;
    let resid_var = done.iter().map(|(a, b)| (a - r * b).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(RatioEstimate {
        value: r,
        se: (resid_var / n).sqrt() / mb,
        used: done.len() as u64,
        censor_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ReplicaRng, StreamFactory};

    fn rng(i: u64) -> ReplicaRng {
        StreamFactory::new(11, "branching-test", 0).replica(i)
    }

    #[test]
    fn coin_site_is_reproducible_and_monotone() {
        let v = CookieVector::new(vec![0.3, 0.9]).unwrap();
        let mut site = CoinSite::new(v);
        let mut r = rng(0);
        let f: Vec<u64> = (0..20).map(|m| site.failures(m, &mut r)).collect();
        assert_eq!(f[0], 0);
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
        let again: Vec<u64> = (0..20).map(|m| site.failures(m, &mut r)).collect();
        assert_eq!(f, again);
        let k = site.outcomes().len();
        site.failures(5, &mut r);
        assert_eq!(site.outcomes().len(), k);
    }

    #[test]
    fn all_right_chain_dies_at_once() {
        let spec = CookieEnvironmentSpec::all_right(3);
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(sample_regeneration(&spec, 10, &mut r), RegenSample::complete(1, 0));
            let d = hitting_time_via_representation(&spec, 9, 10, &mut r).unwrap();
            assert_eq!(d.value, 9);
            // only the first M trials are certain successes
            for current in 0..3 {
                let mut site = CoinSite::sample(&spec, &mut r);
                assert_eq!(step_v(current, &mut site, &mut r), 0);
            }
        }
        let s = vec![RegenSample::complete(1, 0); 10];
        assert_eq!(estimate_speed_regen(&s).unwrap().value, 1.0);
    }

    #[test]
    fn cycle_invariants() {
        let spec = CookieEnvironmentSpec::constant(2, 0.7).unwrap();
        let mut r = rng(2);
        for _ in 0..5000 {
            let s = sample_regeneration(&spec, 10_000, &mut r);
            if !s.censored {
                assert!(s.w + 1 >= s.sigma);
                assert_eq!(s.sigma == 1, s.w == 0);
            }
        }
    }

    #[test]
    fn absorbed_from_zero_is_zero() {
        let spec = CookieEnvironmentSpec::constant(2, 0.7).unwrap();
        let mut sites = FreshSites::new(&spec);
        assert_eq!(sample_absorbed_process(&mut sites, 0, 5, &mut rng(3)), (0, false));
    }

    #[test]
    fn representation_parity() {
        let spec = CookieEnvironmentSpec::constant(1, 0.7).unwrap();
        let mut r = rng(4);
        for n in 1..20 {
            let d = hitting_time_via_representation(&spec, n, 1000, &mut r).unwrap();
            assert_eq!((d.value - n) % 2, 0);
        }
        assert!(hitting_time_via_representation(&spec, 0, 10, &mut r).is_err());
    }

    #[test]
    fn capped_representation_agrees_below_cap() {
        let spec = CookieEnvironmentSpec::constant(1, 0.7).unwrap();
        for i in 0..2000 {
            let full = hitting_time_via_representation(&spec, 5, u64::MAX, &mut rng(100 + i)).unwrap();
            let capped = representation_time_capped(&mut FreshSites::new(&spec), 5, 200, &mut rng(100 + i));
            match capped {
                Some(t) => assert_eq!(t, full.value),
                None => assert!(full.value > 200),
            }
        }
        assert_eq!(
            representation_time_capped(&mut FreshSites::new(&spec), 5, 4, &mut rng(0)),
            None
        );
    }

    #[test]
    fn coupling_dominates() {
        let spec = CookieEnvironmentSpec::mixture(vec![(0.5, vec![0.9, 0.1]), (0.5, vec![0.6, 0.6])]).unwrap();
        for i in 0..500 {
            let p = coupled_paths(&spec, 4, 30, &mut rng(i));
            for (k, a) in p.absorbed.iter().enumerate() {
                assert!(*a <= p.v[4 + k]);
            }
        }
    }

    #[test]
    fn regen_speed_refuses_heavy_censoring() {
        let mut s = vec![RegenSample::complete(1, 0); 98];
        s.extend(
            [RegenSample {
                sigma: 5,
                w: 9,
                censored: true,
            }; 2],
        );
        assert!(estimate_speed_regen(&s).is_err());
    }

    #[test]
    fn regen_speed_hand_example() {
        // sigma = (1, 3), W = (0, 4): ratio of means 4 / 12
        let s = [RegenSample::complete(1, 0), RegenSample::complete(3, 4)];
        let e = estimate_speed_regen(&s).unwrap();
        assert!((e.value - 1.0 / 3.0).abs() < 1e-15);
    }
}

use erw::branching::{estimate_speed_regen, sample_regeneration, RegenSample};
use erw::env::CookieEnvironmentSpec;
use erw::parallel::MonteCarlo;
use erw::rng::StreamFactory;
use erw::stats::{mean, standard_error};
use erw::tails::{
    default_k, heavy_sum_exponent, hill_estimate, hill_on_cycles, hitting_slowdown_counts, slowdown_exponent_t,
    slowdown_upper_bound, walk_slowdown_point, CycleField, SumSource,
};
use rand::Rng;

const SEED: u64 = 161803;

fn e2() -> CookieEnvironmentSpec {
    CookieEnvironmentSpec::constant(5, 0.75).unwrap()
}

fn e2_cycles(n: u64) -> Vec<RegenSample> {
    MonteCarlo::new(SEED, 4).map("t-e2-cycles", 0, n, |_, rng| {
        sample_regeneration(&e2(), 10_000_000, rng)
    })
}

/// Inverse-CDF Pareto draws with unit scale.
fn pareto(kappa: f64, n: usize, sub: u64) -> Vec<f64> {
    let mut rng = StreamFactory::new(SEED, "t-pareto", sub).replica(0);
    (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / kappa)).collect()
}

#[test]
fn hill_on_pareto_two() {
    let xs = pareto(2.0, 1_000_000, 0);
    let fit = hill_estimate(&xs, 10_000).unwrap();
    assert!((1.9..=2.1).contains(&fit.exponent), "{}", fit.exponent);
}

#[test]
fn hill_recovers_known_indices() {
    for (i, kappa) in [1.25, 2.5, 5.0].into_iter().enumerate() {
        let xs = pareto(kappa, 1_000_000, 1 + i as u64);
        let k = default_k(xs.len());
        let fit = hill_estimate(&xs, k).unwrap();
        let tol = 1.96 * kappa / (k as f64).sqrt();
        assert!(
            (fit.exponent - kappa).abs() <= tol,
            "kappa {kappa}: {} (tol {tol})",
            fit.exponent
        );
    }
}

/// The pool must be large: resampling can only produce jumps up to the
/// largest observed cycle, and a small pool cuts the big-jump events off.
#[test]
fn heavy_sums_of_cycle_pools() {
    let cycles = e2_cycles(1_000_000);
    let mc = MonteCarlo::new(SEED, 4);
    let grid = [8u64, 16, 32, 64, 128, 256];
    let done: Vec<&RegenSample> = cycles.iter().filter(|c| !c.censored).collect();

    let sigma: Vec<f64> = done.iter().map(|c| c.sigma as f64).collect();
    let mean = SumSource::Pool(&sigma).mean();
    let fit = heavy_sum_exponent(SumSource::Pool(&sigma), 2.0 * mean, &grid, 1_000_000, &mc).unwrap();
    assert!((fit.exponent + 1.5).abs() <= 0.3, "sigma slope {}", fit.exponent);

    let w: Vec<f64> = done.iter().map(|c| c.w as f64).collect();
    let mean = SumSource::Pool(&w).mean();
    let fit = heavy_sum_exponent(SumSource::Pool(&w), 2.0 * mean, &grid, 1_000_000, &mc).unwrap();
    assert!((fit.exponent + 0.25).abs() <= 0.2, "W slope {}", fit.exponent);
}

#[test]
fn hill_on_e2_cycles_brackets_delta() {
    let cycles = e2_cycles(200_000);
    let s = hill_on_cycles(&cycles, CycleField::Sigma, None).unwrap();
    let w = hill_on_cycles(&cycles, CycleField::W, None).unwrap();
    assert!((2.1..=2.9).contains(&s.exponent), "sigma {}", s.exponent);
    assert!((1.0..=1.5).contains(&w.exponent), "W {}", w.exponent);
    assert!(s.excluded < 1e-3 && w.excluded == s.excluded);
}

#[test]
fn slowdown_refuses_non_ballistic_environments() {
    let mc = MonteCarlo::new(SEED, 1);
    let all_right = CookieEnvironmentSpec::all_right(3);
    assert!(slowdown_exponent_t(&all_right, 2.0, 1.0, &[16, 32], 100, &mc).is_err());
    let e3 = CookieEnvironmentSpec::constant(3, 0.8).unwrap();
    assert!(slowdown_exponent_t(&e3, 10.0, 0.5, &[16, 32], 100, &mc).is_err());
    assert!(slowdown_exponent_t(&e2(), 2.0, 0.4, &[16, 32], 100, &mc).is_err());
}

#[test]
fn slowdown_events_are_nested() {
    let mc = MonteCarlo::new(SEED, 4);
    let ts = [2.6, 3.0, 4.0, 6.0];
    let (counts, undecided) = hitting_slowdown_counts(&e2(), 256, &ts, 20_000, &mc);
    assert!(counts.windows(2).all(|c| c[0] >= c[1]), "{counts:?}");
    assert_eq!(undecided, 0);

    let hits: Vec<u64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&x| walk_slowdown_point(&e2(), 256, x, 20_000, &mc).position.freq.hits)
        .collect();
    assert!(hits.windows(2).all(|h| h[0] <= h[1]), "{hits:?}");
}

#[test]
fn sandwich_holds_on_common_trajectories() {
    let mc = MonteCarlo::new(SEED, 4);
    for n in [128u64, 256, 512, 1024] {
        let s = walk_slowdown_point(&e2(), n, 0.2, 20_000, &mc);
        assert!(s.holds(), "{s:?}");
        assert!(s.position.freq.hits >= s.passage.freq.hits);
    }
}

#[test]
fn upper_bound_decomposition_at_1024() {
    let mc = MonteCarlo::new(SEED, 4);
    let ub = slowdown_upper_bound(&e2(), 1024, 0.2, 0.05, 20_000, &mc).unwrap();
    assert!(ub.holds(), "{ub:?}, slack {}", ub.slack());
    assert!(ub.backtrack.p() <= 1.0);
}

/// The hitting-time slope and the slope of heavy sums of `W` estimate the
/// same exponent. `T_n > n t` is matched to about `n / E[sigma]` cycles
/// whose `W` sum exceeds `n (t - 1) / 2`. Resampled sums depend on the
/// extremes of their pool, so the `W` slope is averaged over independent
/// pools and its uncertainty taken from their spread.
#[test]
fn hitting_slope_agrees_with_w_sum_slope() {
    let grid = [128u64, 256, 512, 1024, 2048];
    let pools = 6u64;
    let mut w_slopes = Vec::new();
    let mut t_fit = None;
    for pool in 0..pools {
        let mc = MonteCarlo::new(SEED + pool, 4);
        let cycles = mc.map("t-pool", pool, 1_000_000, |_, rng| {
            sample_regeneration(&e2(), 10_000_000, rng)
        });
        let done: Vec<&RegenSample> = cycles.iter().filter(|c| !c.censored).collect();
        let sigma: Vec<f64> = done.iter().map(|c| c.sigma as f64).collect();
        let w: Vec<f64> = done.iter().map(|c| c.w as f64).collect();
        let mean_sigma = SumSource::Pool(&sigma).mean();
        let v0 = estimate_speed_regen(&cycles).unwrap().value;
        let t = 1.5 / v0;
        if t_fit.is_none() {
            t_fit = Some(slowdown_exponent_t(&e2(), t, v0, &grid, 100_000, &mc).unwrap());
        }
        let k_grid: Vec<u64> = grid.iter().map(|&n| (n as f64 / mean_sigma).round() as u64).collect();
        let level = mean_sigma * (t - 1.0) / 2.0;
        let fit = heavy_sum_exponent(SumSource::Pool(&w), level, &k_grid, 100_000, &mc).unwrap();
        w_slopes.push(fit.exponent);
    }
    let t_fit = t_fit.unwrap();
    let w_mean = mean(&w_slopes);
    let w_se = standard_error(&w_slopes);
    let t_half = (t_fit.ci.1 - t_fit.ci.0) / 2.0;
    println!("T slope {:.4} +- {t_half:.4}, W slopes {w_slopes:.4?}", t_fit.exponent);
    assert!(
        (t_fit.exponent - w_mean).abs() <= t_half + 1.96 * w_se,
        "T slope {} +- {t_half} vs W slope {w_mean} +- {} over pools {w_slopes:?}",
        t_fit.exponent,
        1.96 * w_se
    );
}

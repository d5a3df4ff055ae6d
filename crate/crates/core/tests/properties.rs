use erw::branching::RegenSample;
use erw::cache::{decode, encode};
use erw::env::CookieEnvironmentSpec;
use erw::rate::{lambda_v, EmpiricalMGF, ROOT_TOL};
use erw::rng::StreamFactory;
use erw::stats::weighted_line_fit;
use erw::walk::simulate_position;
use proptest::prelude::*;

fn cycles() -> impl Strategy<Value = Vec<RegenSample>> {
    prop::collection::vec((1u64..60, 0u64..120, prop::bool::weighted(0.1)), 1..200).prop_map(|v| {
        v.into_iter()
            .map(|(sigma, extra, censored)| RegenSample {
                sigma,
                w: sigma - 1 + extra,
                censored,
            })
            .collect()
    })
}

fn has_complete(samples: &[RegenSample]) -> bool {
    samples.iter().any(|s| !s.censored)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mgf_is_monotone_in_both_arguments(
        samples in cycles(),
        l in -3.0f64..0.0,
        dl in 0.0f64..1.0,
        e in -3.0f64..0.0,
        de in 0.0f64..1.0,
    ) {
        prop_assume!(has_complete(&samples));
        let mgf = EmpiricalMGF::new(&samples);
        let base = mgf.query(l, e).value;
        prop_assert!(mgf.query(l + dl, e).value >= base - 1e-12);
        prop_assert!(mgf.query(l, e + de).value >= base - 1e-12);
    }

    #[test]
    fn mgf_at_origin_is_log_uncensored_fraction(samples in cycles()) {
        prop_assume!(has_complete(&samples));
        let mgf = EmpiricalMGF::new(&samples);
        let done = samples.iter().filter(|s| !s.censored).count() as f64;
        let want = (done / samples.len() as f64).ln();
        prop_assert!((mgf.query(0.0, 0.0).value - want).abs() < 1e-12);
    }

    #[test]
    fn lambda_v_is_nonpositive_and_increasing(samples in cycles(), l in -5.0f64..-0.1, dl in 0.05f64..1.0) {
        prop_assume!(has_complete(&samples));
        let mgf = EmpiricalMGF::new(&samples);
        let a = lambda_v(&mgf, l, ROOT_TOL);
        let b = lambda_v(&mgf, (l + dl).min(0.0), ROOT_TOL);
        prop_assume!(a.value.is_finite() && b.value.is_finite());
        prop_assert!(a.value <= ROOT_TOL && b.value <= ROOT_TOL);
        prop_assert!(a.value <= b.value + 2.0 * ROOT_TOL, "{a:?} {b:?}");
    }

    #[test]
    fn loglog_slope_ignores_common_scale(
        ps in prop::collection::vec(1e-6f64..0.5, 3..10),
        ws in prop::collection::vec(0.1f64..100.0, 10),
        c in 1e-3f64..1e3,
    ) {
        let x: Vec<f64> = (0..ps.len()).map(|i| ((16u64 << i) as f64).ln()).collect();
        let y: Vec<f64> = ps.iter().map(|p| p.ln()).collect();
        let yc: Vec<f64> = ps.iter().map(|p| (c * p).ln()).collect();
        let w = &ws[..ps.len()];
        let a = weighted_line_fit(&x, &y, w).unwrap();
        let b = weighted_line_fit(&x, &yc, w).unwrap();
        prop_assert!((a.slope - b.slope).abs() <= 1e-9 * (1.0 + a.slope.abs()));
        prop_assert!((b.intercept - a.intercept - c.ln()).abs() <= 1e-9 * (1.0 + a.intercept.abs()));
    }

    #[test]
    fn cache_round_trips(samples in cycles(), seed in any::<u64>(), cap in 1u64..1_000_000, hash in any::<[u8; 32]>()) {
        let bytes = encode(hash, seed, cap, &samples);
        let (header, back) = decode(&bytes, Some(hash)).unwrap();
        prop_assert_eq!((header.seed, header.cap, header.count), (seed, cap, samples.len() as u64));
        for (a, b) in samples.iter().zip(&back) {
            prop_assert_eq!(a.censored, b.censored);
            prop_assert_eq!(a.w, b.w);
            if !a.censored {
                prop_assert_eq!(a.sigma, b.sigma);
            }
        }
    }

    #[test]
    fn cache_rejects_any_flipped_byte(samples in cycles(), at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = encode([7; 32], 1, 100, &samples);
        let i = at.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(decode(&bytes, Some([7; 32])).is_err());
    }

    #[test]
    fn walk_position_has_parity_and_bound(m in 1usize..6, p in 0.0f64..=1.0, n in 0u64..300, seed in any::<u64>()) {
        let spec = CookieEnvironmentSpec::constant(m, p).unwrap();
        let mut rng = StreamFactory::new(seed, "prop-walk", 0).replica(0);
        let x = simulate_position(&spec, n, &mut rng);
        prop_assert!(x.unsigned_abs() <= n);
        prop_assert_eq!(x.rem_euclid(2) as u64, n % 2);
    }
}

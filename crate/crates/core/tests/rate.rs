use fas_hrllc::channel::SpectralChannel;
use fas_hrllc::fbl::FrameConfig;
use fas_hrllc::montecarlo::{sample_snr, McConfig};
use fas_hrllc::rate::{
    asymptotic_rate, avg_rate, ergodic_capacity, rate_asymptotes, rate_penalty, tau_threshold_rate,
    RateConfig,
};
use proptest::prelude::*;

fn cfg(gbar: f64) -> RateConfig {
    RateConfig::new(FrameConfig::new(500, 2.0, 256).unwrap(), gbar).unwrap()
}

fn ch(eigs: &[f64]) -> SpectralChannel {
    SpectralChannel::from_eigenvalues(eigs, 1.0).unwrap()
}

fn mc_capacity(c: &SpectralChannel, g: f64, seed: u64, n: usize) -> (f64, f64) {
    let mc = McConfig::new(seed).with_samples(n).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    for x in sample_snr(c, g, &mc).unwrap() {
        let r = x.ln_1p() * std::f64::consts::LOG2_E;
        s += r;
        s2 += r * r;
    }
    let n = n as f64;
    let mean = s / n;
    (mean, ((s2 / n - mean * mean) / n).sqrt())
}

#[test]
fn capacity_matches_monte_carlo() {
    let c = ch(&[2.0, 1.0, 0.5]);
    let (mean, se) = mc_capacity(&c, 100.0, 9, 1_000_000);
    let want = ergodic_capacity(&c, 100.0).unwrap();
    assert!(
        (mean - want).abs() <= 3.0 * se,
        "mc {mean} +- {se}, closed {want}"
    );
}

#[test]
fn appending_a_mode_never_lowers_capacity() {
    let full = [1.6, 1.1, 0.7, 0.4, 0.2];
    let mut last_closed = 0.0;
    let mut last_mc = 0.0;
    for m in 1..=full.len() {
        let c = ch(&full[..m]);
        let closed = ergodic_capacity(&c, 5.0).unwrap();
        assert!(closed >= last_closed);
        last_closed = closed;
        // same seed, so the nested maxima are pathwise ordered
        let (mc, _) = mc_capacity(&c, 5.0, 3, 200_000);
        assert!(mc >= last_mc);
        last_mc = mc;
    }
}

#[test]
fn penalty_examples() {
    let c = cfg(10.0);
    assert!((rate_penalty(&c, 10).unwrap() - 0.280_841_856_612_205).abs() < 1e-12);
    let mut last = 0.0;
    for n in 1..=200 {
        let p = rate_penalty(&c, n).unwrap();
        assert!(p > last);
        last = p;
    }
    let flat = cfg(10.0)
        .with_frame(FrameConfig::new(500, 0.0, 256).unwrap())
        .unwrap();
    let p1 = rate_penalty(&flat, 1).unwrap();
    assert_eq!(p1, rate_penalty(&flat, 400).unwrap());
    assert!((p1 - 4.264_890_793_922_825 * std::f64::consts::LOG2_E / 500f64.sqrt()).abs() < 1e-9);
}

#[test]
fn high_snr_slope_is_one_bit_per_doubling() {
    for eigs in [&[1.0][..], &[1.4, 0.6], &[1.5, 1.0, 0.5, 0.2]] {
        let c = ch(eigs);
        let xs: Vec<f64> = (0..9).map(|i| 40.0 + 2.5 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|db| ergodic_capacity(&c, 10f64.powf(db / 10.0)).unwrap())
            .collect();
        let mx = xs.iter().sum::<f64>() / 9.0;
        let my = ys.iter().sum::<f64>() / 9.0;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let per_3db = sxy / sxx * 10.0 * 2f64.log10();
        assert!((per_3db - 1.0).abs() <= 0.02, "M={}: {per_3db}", eigs.len());
    }
}

#[test]
fn asymptote_tracks_exact_rate() {
    for eigs in [
        &[1.0][..],
        &[1.2, 0.8],
        &[1.5, 1.0, 0.5],
        &[1.3, 1.1, 0.9, 0.7],
    ] {
        let c = ch(eigs);
        let exact = avg_rate(&c, &cfg(1e4), 10).unwrap().total;
        let (_, asym) = asymptotic_rate(&c, &cfg(1e4), 10).unwrap();
        assert!((asym - exact).abs() <= 0.05, "M={}", eigs.len());
        let (s1, a1) = asymptotic_rate(&c, &cfg(1e5), 10).unwrap();
        let (s0, _) = asymptotic_rate(&c, &cfg(1e4), 10).unwrap();
        assert_eq!(s0, s1);
        assert!((a1 - asym - 10f64.log2()).abs() < 1e-12);
    }
}

#[test]
fn rate_threshold_is_snr_independent() {
    let c = ch(&[1.5, 1.0, 0.5]);
    let t1 = tau_threshold_rate(&c, &cfg(1.0), 10).unwrap();
    let t2 = tau_threshold_rate(&c, &cfg(1e4), 10).unwrap();
    assert_eq!(t1, t2);
    let single = tau_threshold_rate(&ch(&[1.0]), &cfg(10.0), 1).unwrap();
    assert!(single.no_gain && single.tau_eq == 0.0);
}

#[test]
fn rate_threshold_is_the_asymptote_crossing() {
    for eigs in [&[1.4, 0.6][..], &[1.5, 1.0, 0.5], &[2.0, 1.5, 1.0, 0.5]] {
        let c = ch(eigs);
        let cf = cfg(100.0);
        for n in [4, 10, 30] {
            let t = tau_threshold_rate(&c, &cf, n).unwrap().tau_eq;
            let (fas, fpa) = rate_asymptotes(&c, &cf, n, 0.9 * t).unwrap();
            assert!(fas >= fpa);
            let over = 1.1 * t;
            if 500.0 - n as f64 * over > 50.0 {
                let (fas, fpa) = rate_asymptotes(&c, &cf, n, over).unwrap();
                assert!(fas < fpa);
            }
            // bisection on the crossing
            let gap = |tau: f64| {
                let (a, b) = rate_asymptotes(&c, &cf, n, tau).unwrap();
                a - b
            };
            let (mut lo, mut hi) = (0.0, (500.0 - 50.0) / n as f64 * 0.999_999);
            if gap(hi) > 0.0 {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!(
                (lo - t).abs() <= 1e-9 * t.max(1.0),
                "n={n}: bisect {lo} formula {t}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn finite_blocklength_rate_below_capacity(
        eigs in prop::collection::vec(0.05f64..3.0, 1..=6),
        lg in -2.0f64..4.0,
        eps in 1e-9f64..0.49,
        n in 1usize..200,
    ) {
        let c = ch(&eigs);
        let cf = cfg(10f64.powf(lg)).with_target_eps(eps).unwrap();
        let r = avg_rate(&c, &cf, n).unwrap();
        prop_assert!(r.penalty_term > 0.0);
        prop_assert!(r.total < ergodic_capacity(&c, cf.gbar).unwrap());
    }
}

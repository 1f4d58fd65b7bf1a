use fas_hrllc::channel::{
    build_covariance, spectral_channel, spectral_decompose, CorrelationSpec, SpectralChannel,
};
use fas_hrllc::montecarlo::{sample_snr, McConfig};
use fas_hrllc::quadrature::Integrator;
use fas_hrllc::specfun::bessel_j0;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Cyclic Jacobi rotations; eigenvalues only, descending.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn truncated_rank(ev: &[f64], frac: f64, cap: usize, trace: f64) -> usize {
    let target = frac * trace * (1.0 - 1e-12);
    let (mut acc, mut m) = (0.0, 0);
    for &v in ev.iter().filter(|v| **v > 0.0) {
        if acc >= target || m == cap {
            break;
        }
        acc += v;
        m += 1;
    }
    m
}

#[test]
fn covariance_examples() {
    let j = build_covariance(&CorrelationSpec::new(5, 0.5).unwrap()).unwrap();
    assert!((j[(0, 2)] - 0.4720).abs() < 5e-5);
    assert!((j[(0, 2)] - bessel_j0(std::f64::consts::FRAC_PI_2).unwrap()).abs() < 1e-15);
    let one = build_covariance(
        &CorrelationSpec::new(1, 3.0)
            .unwrap()
            .with_sigma2(2.5)
            .unwrap(),
    )
    .unwrap();
    assert_eq!(one.shape(), (1, 1));
    assert_eq!(one[(0, 0)], 2.5);
}

#[test]
fn eigen_spectrum_matches_jacobi_oracle() {
    for (n, w) in [(50, 5.0), (20, 1.0), (12, 3.0), (30, 0.3)] {
        let spec = CorrelationSpec::new(n, w).unwrap();
        let j = build_covariance(&spec).unwrap();
        let oracle = jacobi_eigenvalues(j.clone());
        let (ch, phys) = spectral_decompose(&j, &spec).unwrap();
        for (a, b) in phys.eigenvalues.iter().zip(&oracle) {
            assert!((a - b.max(0.0)).abs() < 1e-9, "N={n} W={w}: {a} vs {b}");
        }
        assert_eq!(
            ch.rank(),
            truncated_rank(&oracle, 0.99, 20, n as f64),
            "N={n} W={w}"
        );
        let trace: f64 = phys.eigenvalues.iter().sum();
        assert!((trace / n as f64 - 1.0).abs() < 1e-8);
    }
}

#[test]
fn physical_channel_reconstructs_covariance() {
    let spec = CorrelationSpec::new(16, 2.0)
        .unwrap()
        .with_sigma2(1.7)
        .unwrap();
    let j = build_covariance(&spec).unwrap();
    let (_, phys) = spectral_decompose(&j, &spec).unwrap();
    let u = phys.eigenvectors.unwrap();
    let gram = u.transpose() * &u;
    assert!((gram - DMatrix::<f64>::identity(16, 16)).amax() < 1e-8);
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(phys.eigenvalues.clone()));
    assert!((&u * lambda * u.transpose() - j).amax() < 1e-8 * 1.7);
}

#[test]
fn raising_energy_fraction_never_lowers_rank() {
    for w in [0.5, 2.0, 5.0] {
        let mut last = 0;
        for ef in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999, 1.0] {
            let spec = CorrelationSpec::new(40, w)
                .unwrap()
                .with_energy_fraction(ef)
                .unwrap();
            let m = spectral_channel(&spec).unwrap().rank();
            assert!(m >= last, "W={w} ef={ef}");
            last = m;
        }
    }
}

#[test]
fn pdf_integrates_to_one() {
    let integ = Integrator::new(1e-13, 1e-12);
    for eigs in [&[1.0][..], &[2.0, 1.0, 0.5], &[1.3, 1.2, 0.9, 0.4, 0.1]] {
        let ch = SpectralChannel::from_eigenvalues(eigs, 1.0).unwrap();
        let g = 3.0;
        let upper = g * eigs[0] * 60.0;
        let v = integ
            .integrate(|x| ch.pdf(g, x).unwrap(), &[0.0, upper])
            .unwrap()
            .value;
        assert!((v - 1.0).abs() < 1e-8, "{eigs:?}: {v}");
    }
}

#[test]
fn cdf_and_mean_match_monte_carlo() {
    let ch = SpectralChannel::from_eigenvalues(&[1.0, 0.5, 0.25], 1.0).unwrap();
    let mc = McConfig::new(41).with_samples(10_000_000).unwrap();
    let n = mc.n_samples as f64;
    let hits = sample_snr(&ch, 2.0, &mc)
        .unwrap()
        .filter(|g| *g <= 1.0)
        .count() as f64;
    let p = ch.cdf(2.0, 1.0).unwrap();
    assert!((hits / n - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt());

    let ch = SpectralChannel::from_eigenvalues(&[2.0, 1.0, 0.5], 1.0).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    for g in sample_snr(&ch, 1.0, &mc).unwrap() {
        s += g;
        s2 += g * g;
    }
    let mean = s / n;
    let se = ((s2 / n - mean * mean) / n).sqrt();
    assert!((mean - ch.mean(1.0).unwrap()).abs() <= 3.0 * se);
}

#[test]
fn cdf_is_stochastically_ordered_in_snr() {
    let ch = SpectralChannel::from_eigenvalues(&[1.4, 0.6], 1.0).unwrap();
    for x in [0.1, 1.0, 5.0] {
        assert!(ch.cdf(2.0, x).unwrap() < ch.cdf(1.0, x).unwrap());
    }
    assert!(ch.cdf(1.0, -1.0).is_err());
    assert!(ch.pdf(1.0, -1.0).is_err());
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..4.0, 1..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn expansion_equals_product(eigs in spectrum(), x in 0.0f64..20.0, g in 0.1f64..30.0) {
        let ch = SpectralChannel::from_eigenvalues(&eigs, 1.0).unwrap();
        prop_assert!((ch.cdf(g, x).unwrap() - ch.cdf_expansion(g, x).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn pdf_is_derivative_of_cdf(eigs in spectrum(), u in 0.05f64..0.95, g in 0.5f64..10.0) {
        let ch = SpectralChannel::from_eigenvalues(&eigs, 1.0).unwrap();
        // interior point between the 5% and 95% quantile scale
        let x = u * g * eigs.iter().cloned().fold(0.0, f64::max) * 3.0;
        let h = 1e-4 * x.max(1e-3);
        let num = (ch.cdf(g, x + h).unwrap() - ch.cdf(g, x - h).unwrap()) / (2.0 * h);
        let pdf = ch.pdf(g, x).unwrap();
        prop_assume!(pdf > 1e-8);
        prop_assert!((num - pdf).abs() <= 1e-5 * pdf, "num {} pdf {}", num, pdf);
    }

    #[test]
    fn cdf_nondecreasing(eigs in spectrum(), x in 0.0f64..10.0, dx in 0.0f64..5.0) {
        let ch = SpectralChannel::from_eigenvalues(&eigs, 1.0).unwrap();
        let a = ch.cdf(1.0, x).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(ch.cdf(1.0, x + dx).unwrap() >= a);
    }

    #[test]
    fn expansion_pdf_matches_product_rule(eigs in prop::collection::vec(0.2f64..2.0, 1..=5), x in 0.01f64..5.0) {
        let ch = SpectralChannel::from_eigenvalues(&eigs, 1.0).unwrap();
        let a = ch.pdf(1.0, x).unwrap();
        let b = ch.pdf_expansion(1.0, x).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }
}

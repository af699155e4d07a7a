use num_complex::Complex64;
use poroade::permeability::{fit_series, logspace, FitOptions, FrequencySample, PermeabilitySeries, Term};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn series(terms: &[(f64, f64)]) -> PermeabilitySeries {
    PermeabilitySeries::new(
        2.0e-3,
        3.0,
        terms.iter().map(|&(c, d)| Term { c, d }).collect(),
    )
    .unwrap()
}

fn options(s: &PermeabilitySeries) -> FitOptions {
    FitOptions {
        eta_k: s.eta_k(),
        formation_factor: s.formation_factor(),
        ..FitOptions::default()
    }
}

fn check_recovery(truth: &[(f64, f64)]) {
    let s = series(truth);
    let cmin = truth.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    let cmax = truth.iter().map(|t| t.0).fold(0.0, f64::max);
    let omegas = logspace(1e-2 / cmax, 1e2 / cmin, 80);
    let samples = s.sample(&omegas);
    let fit = fit_series(&samples, truth.len(), &options(&s)).unwrap();
    for (got, want) in fit.series.terms().iter().zip(s.terms()) {
        assert!((got.c - want.c).abs() <= 1e-6 * want.c, "{got:?} vs {want:?}");
        assert!((got.d - want.d).abs() <= 1e-6 * want.d, "{got:?} vs {want:?}");
    }
}

#[test]
fn recovers_one_term() {
    check_recovery(&[(0.3, 1.7)]);
}

#[test]
fn recovers_two_terms() {
    check_recovery(&[(0.05, 0.4), (2.0, 1.1)]);
}

#[test]
fn recovers_four_terms() {
    check_recovery(&[(1e-3, 0.2), (1e-2, 0.5), (1e-1, 0.3), (1.0, 0.8)]);
}

#[test]
fn noisy_samples_fit_within_tolerance() {
    let truth = [(1e-3, 0.2), (1e-2, 0.5), (1e-1, 0.3), (1.0, 0.8)];
    let s = series(&truth);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<_> = s
        .sample(&logspace(1e-2, 1e5, 80))
        .into_iter()
        .map(|x| {
            let noise = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            FrequencySample::new(x.omega, x.value * (1.0 + 1e-3 * noise / 2f64.sqrt())).unwrap()
        })
        .collect();
    for n in [1, 2, 4] {
        let fit = fit_series(&samples, n, &options(&s));
        if n == 4 {
            let fit = fit.unwrap();
            assert!(fit.residual <= 5e-3, "residual {}", fit.residual);
        }
    }
}

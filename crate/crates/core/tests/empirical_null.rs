use ebinfer::distributions::GaussianParams;
use ebinfer::empirical_null::{fit_empirical_null, null_expected_exceedances, CentralFitConfig, EmpiricalNullFit};
use ebinfer::fdr::{NullModel, Side};
use ebinfer::simlab::SimRng;
use ebinfer::ZVector;

fn sample(seed: u64, n: usize, null: GaussianParams, p0: f64, alt: GaussianParams) -> ZVector {
    let mut rng = SimRng::new(seed, 0);
    let z = (0..n)
        .map(|_| {
            if rng.uniform() < p0 {
                rng.normal(&null)
            } else {
                rng.normal(&alt)
            }
        })
        .collect();
    ZVector::new(z).unwrap()
}

const LEUKEMIA_NULL: GaussianParams = GaussianParams { mean: 0.09, sd: 1.68 };
const LEFT_ALT: GaussianParams = GaussianParams { mean: -4.0, sd: 1.0 };

#[test]
fn standard_normal_samples() {
    for seed in 0..5 {
        let z = sample(6_100 + seed, 10_000, GaussianParams::standard(), 1.0, LEFT_ALT);
        let f = fit_empirical_null(&z, &CentralFitConfig::default()).unwrap();
        assert!(f.delta0.abs() <= 0.05, "seed {seed}: {f:?}");
        assert!((f.sigma0 - 1.0).abs() <= 0.05, "seed {seed}: {f:?}");
        assert!(f.p0 >= 0.95, "seed {seed}: {f:?}");
    }
}

#[test]
fn affine_equivariance() {
    let z = sample(6_200, 7128, LEUKEMIA_NULL, 0.93, LEFT_ALT);
    let cfg = CentralFitConfig::default();
    let f = fit_empirical_null(&z, &cfg).unwrap();
    for (a, b) in [(2.0, 1.0), (0.5, -3.0), (1.0, 10.0)] {
        let moved = ZVector::new(z.values().iter().map(|v| a * v + b).collect()).unwrap();
        let g = fit_empirical_null(&moved, &cfg).unwrap();
        assert!((g.delta0 - (a * f.delta0 + b)).abs() <= 1e-6 * a, "{a} {b}: {g:?}");
        assert!((g.sigma0 - a * f.sigma0).abs() <= 1e-6 * a, "{a} {b}: {g:?}");
        assert!((g.p0 - f.p0).abs() <= 1e-6, "{a} {b}: {g:?}");
    }
}

#[test]
fn wide_null_predicts_more_tail_counts_than_theory() {
    let z = sample(6_300, 7128, LEUKEMIA_NULL, 0.93, LEFT_ALT);
    let f = fit_empirical_null(&z, &CentralFitConfig::default()).unwrap();
    let empirical = null_expected_exceedances(&f, z.len(), 3.0, Side::Right);
    let theoretical = NullModel::theoretical(1.0).unwrap().expected_exceedances(z.len(), 3.0, Side::Right);
    assert!(empirical > theoretical, "{empirical} vs {theoretical}");
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

#[test]
fn fitted_exceedances_match_quadrature() {
    let fit = EmpiricalNullFit {
        delta0: 0.09,
        sigma0: 1.68,
        p0: 0.93,
        p0_raw: 0.93,
        p0_clipped: false,
        interval: (-1.0, 1.0),
        n_in_interval: 0,
        n_total: 7128,
        converged: true,
        iterations: 0,
        recenter_steps: 0,
        recenter_cycled: false,
        log_likelihood: 0.0,
        trace: vec![],
    };
    let dens = |x: f64| {
        let u = (x - 0.09) / 1.68;
        (-0.5 * u * u).exp() / (1.68 * (2.0 * std::f64::consts::PI).sqrt())
    };
    let oracle = 7128.0 * 0.93 * simpson(dens, 3.0, 3.0 + 40.0 * 1.68, 200_000);
    let got = null_expected_exceedances(&fit, 7128, 3.0, Side::Right);
    assert!((got - oracle).abs() <= 1e-6, "{got} vs {oracle}");
    assert_eq!(null_expected_exceedances(&fit, 7128, f64::INFINITY, Side::Right), 0.0);
}

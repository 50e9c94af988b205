//! Effect-size estimation through Tweedie's formula.
//!
//! The marginal density of the z-values is fitted by Lindsey's method: the
//! histogram counts are treated as Poisson observations whose log mean is a
//! natural cubic spline in the bin midpoint, fitted by IRLS. The posterior
//! mean of the effect is then `E{mu | z} = z + d/dz log f(z)`, with the log
//! derivative taken analytically from the spline basis.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::distributions::GaussianParams;
use crate::error::{Error, Result};
use crate::spline::NaturalSplineBasis;
use crate::zvector::ZVector;

pub const DEFAULT_DF: usize = 7;
pub const DEFAULT_BINS: usize = 90;
pub const MIN_CASES: usize = 100;
const RANGE_PAD: f64 = 0.1;
const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;

/// Anything that can report `d/dz log f(z)` for a marginal density `f`.
pub trait MarginalDensity {
    fn log_density_derivative(&self, z: f64) -> f64;
}

/// `N(mean, prior_var + 1)`: the marginal under a Gaussian prior and unit noise.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMarginal {
    pub prior: GaussianParams,
}

impl MarginalDensity for GaussianMarginal {
    fn log_density_derivative(&self, z: f64) -> f64 {
        -(z - self.prior.mean) / (self.prior.variance() + 1.0)
    }
}

/// `z + f'(z)/f(z)`.
pub fn posterior_mean<D: MarginalDensity + ?Sized>(density: &D, z: f64) -> f64 {
    z + density.log_density_derivative(z)
}

/// Log-linear spline fit to a z-value histogram.
#[derive(Debug, Clone, Serialize)]
pub struct DensityFit {
    pub basis: NaturalSplineBasis,
    /// Intercept first, then one coefficient per basis function.
    pub coefficients: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub n: usize,
    pub bin_width: f64,
    /// `n · bin_width`; fitted Poisson means divided by this give the density.
    pub normalizer: f64,
    pub fit_deviance: f64,
    pub iterations: usize,
}

impl DensityFit {
    pub fn df(&self) -> usize {
        self.basis.dim()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1])
    }

    pub fn in_range(&self, z: f64) -> bool {
        let (lo, hi) = self.range();
        z >= lo && z <= hi
    }

    /// Fitted log Poisson intensity at `z`.
    pub fn log_intensity(&self, z: f64) -> f64 {
        let b = self.basis.eval(z);
        self.coefficients[0]
            + b.iter()
                .zip(&self.coefficients[1..])
                .map(|(x, c)| x * c)
                .sum::<f64>()
    }

    pub fn log_density(&self, z: f64) -> f64 {
        self.log_intensity(z) - self.normalizer.ln()
    }

    pub fn density(&self, z: f64) -> f64 {
        self.log_density(z).exp()
    }

    /// Simpson integral of the density across the histogram range.
    pub fn integral(&self) -> f64 {
        let (lo, hi) = self.range();
        let k = 4000;
        let h = (hi - lo) / k as f64;
        let mut s = self.density(lo) + self.density(hi);
        for i in 1..k {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.density(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

impl MarginalDensity for DensityFit {
    fn log_density_derivative(&self, z: f64) -> f64 {
        let d = self.basis.derivative(z);
        d.iter()
            .zip(&self.coefficients[1..])
            .map(|(x, c)| x * c)
            .sum()
    }
}

/// Equal-width histogram over `[min - 0.1, max + 0.1]`, then Poisson IRLS on
/// the spline basis evaluated at the bin midpoints.
pub fn fit_marginal_density(z: &ZVector, df: usize, bins: usize) -> Result<DensityFit> {
    let n = z.len();
    if n < MIN_CASES {
        return Err(Error::TooFew {
            what: "z-values for a density fit",
            needed: MIN_CASES,
            got: n,
        });
    }
    if df < 3 {
        return Err(Error::domain(format!("df must be >= 3, got {df}")));
    }
    if bins < 20 {
        return Err(Error::domain(format!("bins must be >= 20, got {bins}")));
    }
    let (zmin, zmax) = z
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if zmax == zmin {
        return Err(Error::Degenerate("all z-values are identical".into()));
    }
    let lo = zmin - RANGE_PAD;
    let hi = zmax + RANGE_PAD;
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0.0; bins];
    for &v in z.values() {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1.0;
    }

    // Knots at quantiles of the regression variable, the bin midpoints.
    let mids: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    let basis = NaturalSplineBasis::from_quantiles(&mids, df, lo, hi)?;
    let p = basis.dim() + 1;
    let mut design = DMatrix::<f64>::zeros(bins, p);
    let mut row = vec![0.0; basis.dim()];
    for k in 0..bins {
        let mid = 0.5 * (bin_edges[k] + bin_edges[k + 1]);
        basis.eval_into(mid, &mut row);
        design[(k, 0)] = 1.0;
        for j in 0..basis.dim() {
            design[(k, j + 1)] = row[j];
        }
    }
    let y = DVector::from_vec(counts.clone());
    let (beta, deviance, iterations) = poisson_irls(&design, &y)?;

    Ok(DensityFit {
        basis,
        coefficients: beta.iter().copied().collect(),
        bin_edges,
        counts,
        n,
        bin_width: width,
        normalizer: n as f64 * width,
        fit_deviance: deviance,
        iterations,
    })
}

fn poisson_deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    2.0 * y
        .iter()
        .zip(mu.iter())
        .map(|(&yi, &mi)| {
            let t = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
            t - (yi - mi)
        })
        .sum::<f64>()
}

/// Log-link Poisson regression; returns coefficients, deviance, iterations.
pub(crate) fn poisson_irls(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64, usize)> {
    let (m, p) = x.shape();
    let mut mu = y.map(|v| v + 0.5);
    let mut eta = mu.map(f64::ln);
    let mut beta: Option<DVector<f64>> = None;
    let mut deviance = poisson_deviance(y, &mu);
    let mut trace = Vec::new();

    for iter in 1..=IRLS_MAX_ITER {
        let mut xw = DMatrix::<f64>::zeros(m, p);
        let mut zw = DVector::<f64>::zeros(m);
        for i in 0..m {
            let sw = mu[i].sqrt();
            for j in 0..p {
                xw[(i, j)] = x[(i, j)] * sw;
            }
            zw[i] = (eta[i] + (y[i] - mu[i]) / mu[i]) * sw;
        }
        let qr = xw.qr();
        let rhs = qr.q().transpose() * zw;
        let mut candidate = qr
            .r()
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Degenerate("spline design matrix is rank deficient".into()))?;

        let mut new_eta = x * &candidate;
        let mut new_mu = new_eta.map(f64::exp);
        let mut new_dev = poisson_deviance(y, &new_mu);
        if let Some(old) = &beta {
            let mut halvings = 0;
            while !(new_dev.is_finite() && new_dev <= deviance * (1.0 + 1e-12) + 1e-12) {
                halvings += 1;
                if halvings > 30 {
                    trace.push(new_dev);
                    return Err(Error::IrlsDiverged { trace });
                }
                candidate = (&candidate + old) * 0.5;
                new_eta = x * &candidate;
                new_mu = new_eta.map(f64::exp);
                new_dev = poisson_deviance(y, &new_mu);
            }
        } else if !new_dev.is_finite() {
            trace.push(new_dev);
            return Err(Error::IrlsDiverged { trace });
        }
        trace.push(new_dev);

        let change = match &beta {
            Some(old) => (&candidate - old).amax(),
            None => f64::INFINITY,
        };
        beta = Some(candidate);
        eta = new_eta;
        mu = new_mu;
        deviance = new_dev;
        if change <= IRLS_TOL {
            return Ok((beta.unwrap(), deviance, iter));
        }
    }
    Err(Error::IrlsDiverged { trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TweedieEstimate {
    pub mu_hat: f64,
    /// `z` fell outside the histogram range of the fit.
    pub extrapolated: bool,
}

pub fn tweedie_estimate(fit: &DensityFit, z: f64) -> TweedieEstimate {
    TweedieEstimate {
        mu_hat: posterior_mean(fit, z),
        extrapolated: !fit.in_range(z),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseEffect {
    pub index: usize,
    pub label: String,
    pub z: f64,
    pub mu_hat: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectSizeReport {
    /// One entry per case, in input order.
    pub cases: Vec<CaseEffect>,
    /// Case indices by decreasing |z|; ties by label.
    pub ranking: Vec<usize>,
    pub top_k: usize,
    /// Top-k cases whose estimate was not pulled toward zero.
    pub shrinkage_violations: Vec<usize>,
    pub df: usize,
    pub bins: usize,
    pub fit_deviance: f64,
    pub iterations: usize,
}

impl EffectSizeReport {
    pub fn top(&self) -> impl Iterator<Item = &CaseEffect> {
        self.ranking.iter().take(self.top_k).map(|&i| &self.cases[i])
    }
}

pub fn effect_size_report(z: &ZVector, df: usize, bins: usize, top_k: usize) -> Result<EffectSizeReport> {
    let fit = fit_marginal_density(z, df, bins)?;
    Ok(report_from_fit(z, &fit, top_k))
}

pub fn report_from_fit(z: &ZVector, fit: &DensityFit, top_k: usize) -> EffectSizeReport {
    let cases: Vec<CaseEffect> = z
        .values()
        .iter()
        .enumerate()
        .map(|(i, &zi)| {
            let est = tweedie_estimate(fit, zi);
            CaseEffect {
                index: i,
                label: z.label(i),
                z: zi,
                mu_hat: est.mu_hat,
                extrapolated: est.extrapolated,
            }
        })
        .collect();

    let mut ranking: Vec<usize> = (0..cases.len()).collect();
    let by_label = z.labels().is_some();
    ranking.sort_by(|&a, &b| {
        let (ca, cb) = (&cases[a], &cases[b]);
        cb.z.abs()
            .total_cmp(&ca.z.abs())
            .then_with(|| if by_label { ca.label.cmp(&cb.label) } else { a.cmp(&b) })
    });

    let top_k = top_k.min(cases.len());
    let shrinkage_violations = ranking[..top_k]
        .iter()
        .copied()
        .filter(|&i| cases[i].mu_hat.abs() >= cases[i].z.abs())
        .collect();

    EffectSizeReport {
        cases,
        ranking,
        top_k,
        shrinkage_violations,
        df: fit.df(),
        bins: fit.counts.len(),
        fit_deviance: fit.fit_deviance,
        iterations: fit.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal_quantile;

    fn normal_scores(n: usize) -> ZVector {
        ZVector::new(
            (1..=n)
                .map(|i| normal_quantile((i as f64 - 0.5) / n as f64).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_marginal_reproduces_linear_bayes_rule() {
        for (m, a) in [(0.0, 1.0), (0.265, 0.3), (-2.0, 4.0)] {
            let g = GaussianMarginal {
                prior: GaussianParams::new(m, f64::sqrt(a)).unwrap(),
            };
            for z in [-3.0, -0.5, 0.0, 1.7, 5.29] {
                let want = m + a / (a + 1.0) * (z - m);
                assert!((posterior_mean(&g, z) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_is_positive_and_normalised() {
        let fit = fit_marginal_density(&normal_scores(5000), 7, 60).unwrap();
        let int = fit.integral();
        assert!((0.99..=1.01).contains(&int), "integral {int}");
        for m in fit.midpoints() {
            assert!(fit.density(m) > 0.0);
        }
        // Intercept score equation: fitted means sum to the count total.
        let total: f64 = fit.midpoints().iter().map(|&m| fit.log_intensity(m).exp()).sum();
        assert!((total - 5000.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_data_gives_zero_at_origin() {
        let fit = fit_marginal_density(&normal_scores(4000), 7, 90).unwrap();
        assert!(tweedie_estimate(&fit, 0.0).mu_hat.abs() < 1e-3);
    }

    #[test]
    fn analytic_log_derivative_matches_finite_differences() {
        let fit = fit_marginal_density(&normal_scores(3000), 7, 50).unwrap();
        let (lo, hi) = fit.range();
        let h = 1e-5;
        let mut x = lo + 0.05;
        while x < hi - 0.05 {
            let fd = (fit.log_density(x + h) - fit.log_density(x - h)) / (2.0 * h);
            assert!((fit.log_density_derivative(x) - fd).abs() < 1e-5, "x={x}");
            x += 0.05;
        }
    }

    #[test]
    fn extrapolation_is_flagged() {
        let fit = fit_marginal_density(&normal_scores(1000), 5, 30).unwrap();
        assert!(!tweedie_estimate(&fit, 0.5).extrapolated);
        assert!(tweedie_estimate(&fit, 50.0).extrapolated);
    }

    #[test]
    fn preconditions() {
        let z = normal_scores(99);
        assert!(matches!(fit_marginal_density(&z, 7, 90), Err(Error::TooFew { .. })));
        let z = normal_scores(500);
        assert!(fit_marginal_density(&z, 2, 90).is_err());
        assert!(fit_marginal_density(&z, 7, 19).is_err());
        let same = ZVector::new(vec![1.5; 500]).unwrap();
        assert!(matches!(effect_size_report(&same, 7, 90, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ranking_uses_abs_z_then_label() {
        let mut v: Vec<f64> = normal_scores(200).values().to_vec();
        v[10] = 4.0;
        v[20] = -4.0;
        v[30] = 3.5;
        let labels: Vec<String> = (0..200).map(|i| format!("g{i:03}")).collect();
        let z = ZVector::new(v).unwrap().with_labels(labels).unwrap();
        let r = effect_size_report(&z, 5, 30, 3).unwrap();
        let top: Vec<&str> = r.top().map(|c| c.label.as_str()).collect();
        assert_eq!(top, vec!["g010", "g020", "g030"]);
        assert_eq!(r.cases.len(), 200);
    }
}

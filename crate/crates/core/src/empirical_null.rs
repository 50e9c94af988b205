//! Empirical null estimation from the centre of the z-value distribution.
//!
//! The null is modelled as `N(delta0, sigma0²)`. Only z-values inside a
//! central interval `[lo, hi]` enter the fit, through the truncated-normal
//! likelihood
//!
//! ```text
//! l(delta0, sigma0) = Σ_in log φ((z - delta0)/sigma0)/sigma0 - n_in · log P(lo, hi)
//! ```
//!
//! with `P` the normal mass of the interval. `p0` is the observed fraction
//! inside the interval divided by `P`. The interval starts at sample
//! quantiles and, by default, is then re-centred at `delta0 ± k·sigma0`
//! until it settles.

use serde::{Deserialize, Serialize};

use crate::distributions::{normal_quantile, GaussianParams};
use crate::error::{Error, Result};
use crate::fdr::{NullModel, Side};
use crate::sample::{quantile_sorted, sorted_copy};
use crate::zvector::ZVector;

pub const MIN_CENTRAL_POINTS: usize = 200;
const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 200;
const MAX_RECENTER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralFitConfig {
    pub lower_q: f64,
    pub upper_q: f64,
    /// Half-width, in fitted null sd, of the re-centred interval.
    /// `None` keeps the quantile interval throughout.
    pub recenter: Option<f64>,
}

impl Default for CentralFitConfig {
    fn default() -> Self {
        CentralFitConfig {
            lower_q: 0.25,
            upper_q: 0.75,
            recenter: Some(1.5),
        }
    }
}

impl CentralFitConfig {
    pub fn quantiles(lower_q: f64, upper_q: f64) -> Self {
        CentralFitConfig {
            lower_q,
            upper_q,
            recenter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower_q > 0.0 && self.lower_q < self.upper_q && self.upper_q < 1.0) {
            return Err(Error::domain(format!(
                "central interval needs 0 < lower_q < upper_q < 1, got ({}, {})",
                self.lower_q, self.upper_q
            )));
        }
        if let Some(k) = self.recenter {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::domain("recenter half-width must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNullFit {
    pub delta0: f64,
    pub sigma0: f64,
    pub p0: f64,
    /// Unclipped ratio; above 1 only through sampling noise.
    pub p0_raw: f64,
    pub p0_clipped: bool,
    pub interval: (f64, f64),
    pub n_in_interval: usize,
    pub n_total: usize,
    pub converged: bool,
    pub iterations: usize,
    pub recenter_steps: usize,
    /// Re-centring stopped on returning to an earlier set of central points.
    pub recenter_cycled: bool,
    /// Mean log-likelihood per central point at the optimum.
    pub log_likelihood: f64,
    /// Objective after each accepted optimizer step on the final interval.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl EmpiricalNullFit {
    pub fn params(&self) -> GaussianParams {
        GaussianParams {
            mean: self.delta0,
            sd: self.sigma0,
        }
    }

    pub fn null_model(&self) -> Result<NullModel> {
        NullModel::empirical(self.params(), self.p0)
    }
}

pub fn fit_empirical_null(z: &ZVector, cfg: &CentralFitConfig) -> Result<EmpiricalNullFit> {
    cfg.validate()?;
    let sorted = sorted_copy(z.values());
    if sorted.is_empty() {
        return Err(Error::TooFew {
            what: "central z-values",
            needed: MIN_CENTRAL_POINTS,
            got: 0,
        });
    }
    let lo = quantile_sorted(&sorted, cfg.lower_q);
    let hi = quantile_sorted(&sorted, cfg.upper_q);
    if !(hi > lo) {
        return Err(Error::Degenerate("central interval has zero width".into()));
    }
    let span = normal_quantile(cfg.upper_q)? - normal_quantile(cfg.lower_q)?;
    let central = slice_between(&sorted, lo, hi)?;
    let start = (
        quantile_sorted(central, 0.5),
        ((hi - lo) / span).ln(),
    );
    let mut fit = TruncatedFit::run(central, lo, hi, start)?;
    let mut interval = (lo, hi);
    let mut steps = 0;
    let mut cycled = false;

    if let Some(k) = cfg.recenter {
        // Membership is discrete, so the map can alternate between a few
        // point sets forever; returning to an earlier set ends the loop.
        let mut seen = vec![membership(&sorted, lo, hi)];
        while steps < MAX_RECENTER {
            let sigma = fit.log_sigma.exp();
            let next = (fit.delta - k * sigma, fit.delta + k * sigma);
            let members = membership(&sorted, next.0, next.1);
            let central = slice_between(&sorted, next.0, next.1)?;
            let refit = TruncatedFit::run(central, next.0, next.1, (fit.delta, fit.log_sigma))?;
            steps += 1;
            let moved = (refit.delta - fit.delta)
                .abs()
                .max((refit.log_sigma - fit.log_sigma).abs() * sigma);
            fit = refit;
            interval = next;
            if moved <= 1e-10 * (1.0 + sigma) {
                break;
            }
            if members != seen[seen.len() - 1] {
                if seen.contains(&members) {
                    cycled = true;
                    break;
                }
                seen.push(members);
            }
        }
        if steps == MAX_RECENTER {
            log::warn!("empirical null interval still moving after {MAX_RECENTER} re-centring steps");
        }
    }

    let (lo, hi) = interval;
    let n_in = fit.n;
    let sigma0 = fit.log_sigma.exp();
    let params = GaussianParams {
        mean: fit.delta,
        sd: sigma0,
    };
    let mass = interval_mass(&params, lo, hi);
    let p0_raw = (n_in as f64 / sorted.len() as f64) / mass;
    let p0_clipped = p0_raw > 1.0;
    if p0_clipped {
        log::warn!("empirical null p0 estimate {p0_raw} exceeds 1; clipped");
    }
    Ok(EmpiricalNullFit {
        delta0: fit.delta,
        sigma0,
        p0: p0_raw.min(1.0),
        p0_raw,
        p0_clipped,
        interval,
        n_in_interval: n_in,
        n_total: sorted.len(),
        converged: fit.converged,
        iterations: fit.iterations,
        recenter_steps: steps,
        recenter_cycled: cycled,
        log_likelihood: fit.objective,
        trace: fit.trace,
    })
}

/// `N · p0 ·` tail of the fitted null beyond `c`.
pub fn null_expected_exceedances(fit: &EmpiricalNullFit, n: usize, c: f64, side: Side) -> f64 {
    let p = fit.params();
    let tail = match side {
        Side::Right => p.sf(c),
        Side::Left => p.cdf(c),
    };
    n as f64 * fit.p0 * tail
}

fn membership(sorted: &[f64], lo: f64, hi: f64) -> (usize, usize) {
    (
        sorted.partition_point(|&v| v < lo),
        sorted.partition_point(|&v| v <= hi),
    )
}

fn slice_between(sorted: &[f64], lo: f64, hi: f64) -> Result<&[f64]> {
    let (start, end) = membership(sorted, lo, hi);
    let central = &sorted[start..end];
    if central.len() < MIN_CENTRAL_POINTS {
        return Err(Error::TooFew {
            what: "central z-values",
            needed: MIN_CENTRAL_POINTS,
            got: central.len(),
        });
    }
    Ok(central)
}

fn interval_mass(p: &GaussianParams, lo: f64, hi: f64) -> f64 {
    let a = (lo - p.mean) / p.sd;
    let b = (hi - p.mean) / p.sd;
    let unit = GaussianParams::standard();
    if a > 0.0 {
        unit.sf(a) - unit.sf(b)
    } else if b < 0.0 {
        unit.cdf(b) - unit.cdf(a)
    } else {
        1.0 - unit.cdf(a) - unit.sf(b)
    }
}

/// Truncated-normal likelihood of points inside `[lo, hi]`, reduced to
/// sufficient statistics, maximised over `(delta, log sigma)`.
struct TruncatedFit {
    delta: f64,
    log_sigma: f64,
    n: usize,
    objective: f64,
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
}

struct Objective {
    lo: f64,
    hi: f64,
    center: f64,
    spread: f64,
}

impl Objective {
    fn new(points: &[f64], lo: f64, hi: f64) -> Self {
        let n = points.len() as f64;
        let center = points.iter().sum::<f64>() / n;
        let spread = points.iter().map(|v| (v - center) * (v - center)).sum::<f64>() / n;
        Objective {
            lo,
            hi,
            center,
            spread,
        }
    }

    /// Mean log-likelihood per point, without the constant.
    fn value(&self, delta: f64, log_sigma: f64) -> f64 {
        let sigma = log_sigma.exp();
        let p = GaussianParams { mean: delta, sd: sigma };
        let mass = interval_mass(&p, self.lo, self.hi);
        let dev = self.center - delta;
        -log_sigma - 0.5 * (self.spread + dev * dev) / (sigma * sigma) - mass.ln()
    }

    fn gradient(&self, delta: f64, log_sigma: f64) -> [f64; 2] {
        let sigma = log_sigma.exp();
        let p = GaussianParams { mean: delta, sd: sigma };
        let mass = interval_mass(&p, self.lo, self.hi);
        let a = (self.lo - delta) / sigma;
        let b = (self.hi - delta) / sigma;
        let unit = GaussianParams::standard();
        let (pa, pb) = (unit.pdf(a), unit.pdf(b));
        let dev = self.center - delta;
        let g_delta = dev / (sigma * sigma) - (pa - pb) / (sigma * mass);
        let g_log_sigma = -1.0 + (self.spread + dev * dev) / (sigma * sigma) - (a * pa - b * pb) / mass;
        [g_delta, g_log_sigma]
    }

    fn hessian(&self, delta: f64, log_sigma: f64) -> [[f64; 2]; 2] {
        let h = 1e-6;
        let gd_p = self.gradient(delta + h, log_sigma);
        let gd_m = self.gradient(delta - h, log_sigma);
        let gs_p = self.gradient(delta, log_sigma + h);
        let gs_m = self.gradient(delta, log_sigma - h);
        let hdd = (gd_p[0] - gd_m[0]) / (2.0 * h);
        let hss = (gs_p[1] - gs_m[1]) / (2.0 * h);
        let hds = 0.5 * ((gd_p[1] - gd_m[1]) + (gs_p[0] - gs_m[0])) / (2.0 * h);
        [[hdd, hds], [hds, hss]]
    }
}

impl TruncatedFit {
    fn run(points: &[f64], lo: f64, hi: f64, start: (f64, f64)) -> Result<Self> {
        let obj = Objective::new(points, lo, hi);
        let (mut delta, mut log_sigma) = start;
        let mut value = obj.value(delta, log_sigma);
        if !value.is_finite() {
            return Err(Error::Degenerate(
                "empirical null objective is not finite at the starting point".into(),
            ));
        }
        let mut trace = vec![value];
        let mut grad_norm = f64::INFINITY;

        for iter in 0..MAX_NEWTON {
            let g = obj.gradient(delta, log_sigma);
            grad_norm = g[0].hypot(g[1]);
            if grad_norm <= GRAD_TOL {
                return Ok(TruncatedFit {
                    delta,
                    log_sigma,
                    n: points.len(),
                    objective: value,
                    converged: true,
                    iterations: iter,
                    trace,
                });
            }
            let newton = newton_direction(&obj.hessian(delta, log_sigma), &g);
            let step = newton.unwrap_or(g);
            // Predicted gain of the Newton step. Once it drops below what the
            // objective can resolve, no step can show an improvement.
            let at_floor = newton.is_some_and(|d| {
                0.5 * (d[0] * g[0] + d[1] * g[1]) <= 64.0 * f64::EPSILON * (1.0 + value.abs())
            });
            let mut accepted = None;
            for dir in [step, g] {
                let mut t = 1.0;
                for _ in 0..60 {
                    let cand = (delta + t * dir[0], log_sigma + t * dir[1]);
                    let v = obj.value(cand.0, cand.1);
                    if v.is_finite() && v >= value {
                        accepted = Some((cand, v));
                        break;
                    }
                    t *= 0.5;
                }
                if accepted.is_some() {
                    break;
                }
            }
            let floor_stop = |delta, log_sigma, value, trace: Vec<f64>| TruncatedFit {
                delta,
                log_sigma,
                n: points.len(),
                objective: value,
                converged: true,
                iterations: iter,
                trace,
            };
            match accepted {
                Some(((d, s), v)) => {
                    let stalled = d == delta && s == log_sigma;
                    delta = d;
                    log_sigma = s;
                    value = v;
                    trace.push(v);
                    if stalled {
                        if at_floor {
                            return Ok(floor_stop(delta, log_sigma, value, trace));
                        }
                        break;
                    }
                }
                None if at_floor => return Ok(floor_stop(delta, log_sigma, value, trace)),
                None => break,
            }
        }
        Err(Error::NullFitNotConverged {
            iterations: trace.len() - 1,
            delta0: delta,
            sigma0: log_sigma.exp(),
            grad_norm,
        })
    }
}

/// `-H⁻¹ g` when `H` is negative definite.
fn newton_direction(h: &[[f64; 2]; 2], g: &[f64; 2]) -> Option<[f64; 2]> {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(h[0][0] < 0.0 && det > 0.0) {
        return None;
    }
    let d0 = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
    let d1 = -(-h[1][0] * g[0] + h[0][0] * g[1]) / det;
    Some([d0, d1])
}

#[cfg(test)]
mod tests {
    use super::*;

    // Deterministic normal scores Φ⁻¹((i - 0.5)/n): an "exact" N(0,1) sample.
    fn normal_scores(n: usize, mean: f64, sd: f64) -> Vec<f64> {
        (1..=n)
            .map(|i| mean + sd * normal_quantile((i as f64 - 0.5) / n as f64).unwrap())
            .collect()
    }

    #[test]
    fn normal_scores_recover_standard_null() {
        let z = ZVector::new(normal_scores(10_000, 0.0, 1.0)).unwrap();
        for cfg in [CentralFitConfig::default(), CentralFitConfig::quantiles(0.25, 0.75)] {
            let fit = fit_empirical_null(&z, &cfg).unwrap();
            assert!(fit.converged);
            assert!(fit.delta0.abs() < 0.01, "{fit:?}");
            assert!((fit.sigma0 - 1.0).abs() < 0.01, "{fit:?}");
            assert!(fit.p0 >= 0.95);
            assert!(fit.interval.0 < fit.interval.1);
        }
    }

    #[test]
    fn too_few_central_points() {
        let z = ZVector::new(normal_scores(300, 0.0, 1.0)).unwrap();
        match fit_empirical_null(&z, &CentralFitConfig::quantiles(0.25, 0.75)) {
            Err(Error::TooFew { needed, got, .. }) => {
                assert_eq!(needed, 200);
                assert!(got < 200);
            }
            other => panic!("expected TooFew, got {other:?}"),
        }
    }

    #[test]
    fn bad_config() {
        let z = ZVector::new(normal_scores(1000, 0.0, 1.0)).unwrap();
        assert!(fit_empirical_null(&z, &CentralFitConfig::quantiles(0.7, 0.3)).is_err());
        assert!(fit_empirical_null(&z, &CentralFitConfig::quantiles(0.0, 0.5)).is_err());
    }

    #[test]
    fn likelihood_trace_is_non_decreasing() {
        let z = ZVector::new(normal_scores(5000, 0.4, 2.0)).unwrap();
        let fit = fit_empirical_null(&z, &CentralFitConfig::default()).unwrap();
        assert!(fit.trace.len() >= 2);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pts = normal_scores(400, 0.2, 1.3);
        let obj = Objective::new(&pts[100..300], pts[100], pts[299]);
        let (d, s) = (0.1, 0.2);
        let g = obj.gradient(d, s);
        let h = 1e-6;
        let fd0 = (obj.value(d + h, s) - obj.value(d - h, s)) / (2.0 * h);
        let fd1 = (obj.value(d, s + h) - obj.value(d, s - h)) / (2.0 * h);
        assert!((g[0] - fd0).abs() < 1e-7);
        assert!((g[1] - fd1).abs() < 1e-7);
    }

    #[test]
    fn theoretical_exceedances() {
        let fit = EmpiricalNullFit {
            delta0: 0.0,
            sigma0: 1.0,
            p0: 1.0,
            p0_raw: 1.0,
            p0_clipped: false,
            interval: (-1.0, 1.0),
            n_in_interval: 0,
            n_total: 6033,
            converged: true,
            iterations: 0,
            recenter_steps: 0,
            recenter_cycled: false,
            log_likelihood: 0.0,
            trace: vec![],
        };
        assert!((null_expected_exceedances(&fit, 6033, 3.0, Side::Right) - 8.14).abs() < 0.01);
        assert_eq!(null_expected_exceedances(&fit, 6033, f64::INFINITY, Side::Right), 0.0);
        assert!(null_expected_exceedances(&fit, 6033, 1e3, Side::Right) < 1e-300);
    }
}

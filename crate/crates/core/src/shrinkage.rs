//! Bayes and James–Stein estimation under the normal–normal model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Posterior odds from prior odds and a likelihood ratio.
pub fn posterior_odds(prior_odds: f64, likelihood_ratio: f64) -> Result<f64> {
    if !(prior_odds > 0.0 && prior_odds.is_finite()) {
        return Err(Error::domain(format!("prior odds must be > 0, got {prior_odds}")));
    }
    if !(likelihood_ratio > 0.0 && likelihood_ratio.is_finite()) {
        return Err(Error::domain(format!(
            "likelihood ratio must be > 0, got {likelihood_ratio}"
        )));
    }
    Ok(prior_odds * likelihood_ratio)
}

/// `mu ~ N(prior_mean, prior_var)`, `x | mu ~ N(mu, sampling_var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalNormalModel {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub sampling_var: f64,
}

impl NormalNormalModel {
    pub fn new(prior_mean: f64, prior_var: f64, sampling_var: f64) -> Result<Self> {
        let m = NormalNormalModel {
            prior_mean,
            prior_var,
            sampling_var,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_mean.is_finite() && self.prior_var.is_finite() && self.sampling_var.is_finite())
        {
            return Err(Error::NonFinite("normal-normal model"));
        }
        if self.prior_var < 0.0 {
            return Err(Error::domain("prior variance must be >= 0"));
        }
        if self.sampling_var <= 0.0 {
            return Err(Error::domain("sampling variance must be > 0"));
        }
        Ok(())
    }

    /// `B = A / (A + sigma0²)`.
    pub fn shrinkage_factor(&self) -> f64 {
        self.prior_var / (self.prior_var + self.sampling_var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShrinkageMethod {
    ExactBayes,
    JamesStein,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageResult {
    pub estimates: Vec<f64>,
    /// Fraction of each deviation from the centre that is kept.
    pub b_hat: f64,
    pub m_hat: f64,
    pub method: ShrinkageMethod,
    /// Set when every observation is identical.
    pub degenerate: bool,
}

/// `center + b (x - center)` for each observation.
pub fn shrink_toward(x: &[f64], center: f64, b: f64) -> Vec<f64> {
    x.iter().map(|&xi| center + b * (xi - center)).collect()
}

pub fn bayes_posterior_mean(x: &[f64], model: &NormalNormalModel) -> Result<ShrinkageResult> {
    model.validate()?;
    let b = model.shrinkage_factor();
    Ok(ShrinkageResult {
        estimates: shrink_toward(x, model.prior_mean, b),
        b_hat: b,
        m_hat: model.prior_mean,
        method: ShrinkageMethod::ExactBayes,
        degenerate: false,
    })
}

/// Positive-part James–Stein toward the grand mean.
///
/// `B̂ = max(0, 1 - (N-3) sigma0² / Σ(x - x̄)²)`.
pub fn james_stein(x: &[f64], sampling_var: f64) -> Result<ShrinkageResult> {
    if x.len() < 4 {
        return Err(Error::TooFew {
            what: "james-stein observations",
            needed: 4,
            got: x.len(),
        });
    }
    if !(sampling_var > 0.0 && sampling_var.is_finite()) {
        return Err(Error::domain("sampling variance must be > 0"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observations"));
    }
    let n = x.len() as f64;
    let m_hat = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - m_hat) * (v - m_hat)).sum();

    if ss == 0.0 {
        return Ok(ShrinkageResult {
            estimates: vec![m_hat; x.len()],
            b_hat: 0.0,
            m_hat,
            method: ShrinkageMethod::JamesStein,
            degenerate: true,
        });
    }
    let b_hat = (1.0 - (n - 3.0) * sampling_var / ss).max(0.0);
    let estimates = if b_hat == 0.0 {
        vec![m_hat; x.len()]
    } else {
        shrink_toward(x, m_hat, b_hat)
    };
    Ok(ShrinkageResult {
        estimates,
        b_hat,
        m_hat,
        method: ShrinkageMethod::JamesStein,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twins_odds() {
        assert_eq!(posterior_odds(0.5, 2.0).unwrap(), 1.0);
        let prior = (1.0 / 3.0) / (2.0 / 3.0);
        assert!((posterior_odds(prior, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(posterior_odds(7.25, 1.0).unwrap(), 7.25);
        assert!(posterior_odds(0.0, 2.0).is_err());
        assert!(posterior_odds(1.0, -2.0).is_err());
    }

    #[test]
    fn equal_variances_shrink_halfway() {
        let m = NormalNormalModel::new(1.0, 0.5, 0.5).unwrap();
        let r = bayes_posterior_mean(&[3.0, -1.0], &m).unwrap();
        assert_eq!(r.estimates, vec![2.0, 0.0]);
        assert_eq!(r.b_hat, 0.5);
    }

    #[test]
    fn zero_prior_variance_collapses() {
        let m = NormalNormalModel::new(0.265, 0.0, 0.004).unwrap();
        let r = bayes_posterior_mean(&[0.4, 0.1, 0.3], &m).unwrap();
        assert!(r.estimates.iter().all(|&e| e == 0.265));
    }

    #[test]
    fn clemente_direct_evaluation() {
        let got = shrink_toward(&[0.400], 0.265, 0.212)[0];
        assert!((got - 0.293_62).abs() < 1e-12);
    }

    #[test]
    fn js_needs_four() {
        assert!(matches!(
            james_stein(&[1.0, 2.0, 3.0], 1.0),
            Err(Error::TooFew { needed: 4, .. })
        ));
    }

    #[test]
    fn js_identical_inputs_flagged() {
        let r = james_stein(&[0.3; 6], 0.01).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.b_hat, 0.0);
        assert!(r.estimates.iter().all(|&e| e == 0.3));
    }

    #[test]
    fn js_positive_part_boundary() {
        // Σ(x - x̄)² = 5 <= (N - 3) σ² = 2 · 3
        let x = [-1.5, -0.5, 0.5, 1.5, 0.0];
        let r = james_stein(&x, 3.0).unwrap();
        assert_eq!(r.b_hat, 0.0);
        assert!(r.estimates.iter().all(|&e| e == 0.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn js_formula() {
        let x = [1.0, 2.0, 3.0, 4.0, 10.0];
        let r = james_stein(&x, 1.0).unwrap();
        // mean 4, SS = 9+4+1+0+36 = 50, B = 1 - 2/50
        assert_eq!(r.m_hat, 4.0);
        assert!((r.b_hat - 0.96).abs() < 1e-15);
        assert!((r.estimates[4] - (4.0 + 0.96 * 6.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn js_preserves_order_and_mean(
            x in prop::collection::vec(-100.0f64..100.0, 4..40),
            var in 0.001f64..50.0,
        ) {
            let r = james_stein(&x, var).unwrap();
            let n = x.len() as f64;
            let mean_in = x.iter().sum::<f64>() / n;
            let mean_out = r.estimates.iter().sum::<f64>() / n;
            prop_assert!((mean_in - mean_out).abs() <= 1e-9 * (1.0 + mean_in.abs()));
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if x[i] < x[j] {
                        prop_assert!(r.estimates[i] <= r.estimates[j]);
                    }
                }
                let (lo, hi) = if x[i] < r.m_hat { (x[i], r.m_hat) } else { (r.m_hat, x[i]) };
                prop_assert!(r.estimates[i] >= lo - 1e-9 && r.estimates[i] <= hi + 1e-9);
            }
            prop_assert!((0.0..=1.0).contains(&r.b_hat));
        }
    }
}

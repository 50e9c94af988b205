//! Covariate-aware analyses: stratified Fdr, running-median detrending and
//! least-squares borrowing of strength.

use rayon::prelude::*;
use serde::Serialize;

use crate::empirical_null::{fit_empirical_null, CentralFitConfig};
use crate::error::{Error, Result};
use crate::fdr::{bh_threshold, FdrReport, NullModel, Side};
use crate::sample::median_in_place;
use crate::zvector::ZVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratum {
    pub name: String,
    /// Case indices into the full z-vector, ascending.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratification {
    pub rule: String,
    pub strata: Vec<Stratum>,
}

impl Stratification {
    /// Two strata: covariate below `threshold`, and at or above it.
    pub fn split_at(covariate: &[f64], threshold: f64) -> Result<Self> {
        let (below, above): (Vec<usize>, Vec<usize>) =
            (0..covariate.len()).partition(|&i| covariate[i] < threshold);
        let s = Stratification {
            rule: format!("covariate < {threshold} | covariate >= {threshold}"),
            strata: vec![
                Stratum {
                    name: "below".into(),
                    indices: below,
                },
                Stratum {
                    name: "at_or_above".into(),
                    indices: above,
                },
            ],
        };
        s.validate(covariate.len())?;
        Ok(s)
    }

    /// One stratum per distinct label, in order of first appearance.
    pub fn from_labels(labels: &[String]) -> Result<Self> {
        let mut strata: Vec<Stratum> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            match strata.iter_mut().find(|s| &s.name == l) {
                Some(s) => s.indices.push(i),
                None => strata.push(Stratum {
                    name: l.clone(),
                    indices: vec![i],
                }),
            }
        }
        let s = Stratification {
            rule: "labels".into(),
            strata,
        };
        s.validate(labels.len())?;
        Ok(s)
    }

    /// Strata must be non-empty and partition `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for s in &self.strata {
            if s.indices.is_empty() {
                return Err(Error::Degenerate(format!("stratum '{}' is empty", s.name)));
            }
            for &i in &s.indices {
                if i >= n || seen[i] {
                    return Err(Error::domain(format!(
                        "stratum '{}' has an index outside or repeated in the case set",
                        s.name
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::domain("strata do not cover every case"));
        }
        Ok(())
    }
}

/// Which null each stratified run uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StratumNull {
    Shared(NullModel),
    /// Fit an empirical null separately inside each stratum.
    PerStratumEmpirical(CentralFitConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub name: String,
    pub n: usize,
    /// Discoveries translated back to indices of the full z-vector.
    pub report: FdrReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedReport {
    pub rule: String,
    pub strata: Vec<StratumReport>,
    pub pooled: FdrReport,
}

/// Independent Fdr runs per stratum alongside one pooled run.
pub fn stratified_fdr(
    z: &ZVector,
    strat: &Stratification,
    q: f64,
    null: StratumNull,
    side: Side,
) -> Result<StratifiedReport> {
    strat.validate(z.len())?;
    let pooled_null = match null {
        StratumNull::Shared(m) => m,
        StratumNull::PerStratumEmpirical(cfg) => fit_empirical_null(z, &cfg)?.null_model()?,
    };
    let pooled = bh_threshold(z, q, &pooled_null, side)?;

    let strata = strat
        .strata
        .par_iter()
        .map(|s| {
            let sub = z.subset(&s.indices);
            let model = match null {
                StratumNull::Shared(m) => m,
                StratumNull::PerStratumEmpirical(cfg) => fit_empirical_null(&sub, &cfg)?.null_model()?,
            };
            let mut report = bh_threshold(&sub, q, &model, side)?;
            report.discoveries = report.discoveries.iter().map(|&i| s.indices[i]).collect();
            report.discoveries.sort_unstable();
            Ok(StratumReport {
                name: s.name.clone(),
                n: s.indices.len(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(StratifiedReport {
        rule: strat.rule.clone(),
        strata,
        pooled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetrendResult {
    pub adjusted: ZVector,
    pub window: usize,
    /// Running median at each case, in input order.
    pub trend: Vec<f64>,
}

/// Subtract a running median of z taken along the covariate.
///
/// Cases are ordered by covariate (stable on ties). Each window is centred on
/// the case and truncated at the ends of the sequence.
pub fn running_median_detrend(z: &ZVector, window: usize) -> Result<DetrendResult> {
    let cov = z
        .covariate()
        .ok_or_else(|| Error::domain("running-median detrending needs a covariate"))?;
    let n = z.len();
    if window % 2 == 0 {
        return Err(Error::domain(format!("window must be odd, got {window}")));
    }
    if window < 3 || window > n {
        return Err(Error::domain(format!("window must lie in [3, {n}], got {window}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cov[a].total_cmp(&cov[b]));
    let ordered: Vec<f64> = order.iter().map(|&i| z.values()[i]).collect();
    let ordered_trend = running_median(&ordered, window);

    let mut trend = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        trend[i] = ordered_trend[pos];
    }
    let adjusted: Vec<f64> = z.values().iter().zip(&trend).map(|(v, t)| v - t).collect();
    Ok(DetrendResult {
        adjusted: z.with_values(adjusted)?,
        window,
        trend,
    })
}

/// Running median with windows truncated at the ends.
pub fn running_median(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            buf.clear();
            buf.extend_from_slice(&x[lo..hi]);
            median_in_place(buf)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
}

impl LineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares line.
pub fn least_squares_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::domain("x and y differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::TooFew {
            what: "points for a line",
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression data"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok(LineFit {
        intercept: my - slope * mx,
        slope,
    })
}

//! Two-sample t-statistics and their conversion to the z scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{normal_sf_unchecked, student_t_abs_tail, upper_tail_quantile};
use crate::error::{Error, Result};
use crate::zvector::ZVector;

/// Largest |z| reported; beyond it the normal c.d.f. rounds to 1 in double precision.
pub const Z_SATURATION: f64 = 8.29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Treatment,
}

/// Cases in rows, subjects in columns, with a group label per column.
#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    values: Vec<f64>,
    n_cols: usize,
    row_labels: Vec<String>,
    groups: Vec<Group>,
}

impl ExpressionMatrix {
    pub fn new(rows: Vec<Vec<f64>>, row_labels: Vec<String>, groups: Vec<Group>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::TooFew {
                what: "matrix rows",
                needed: 1,
                got: 0,
            });
        }
        if row_labels.len() != rows.len() {
            return Err(Error::domain("one label per row is required"));
        }
        let n_cols = groups.len();
        let n_control = groups.iter().filter(|g| **g == Group::Control).count();
        let n_treat = n_cols - n_control;
        for (name, n) in [("control", n_control), ("treatment", n_treat)] {
            if n < 2 {
                return Err(Error::domain(format!(
                    "{name} group has {n} columns, at least 2 are required"
                )));
            }
        }
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (row, label) in rows.iter().zip(&row_labels) {
            if row.len() != n_cols {
                return Err(Error::domain(format!(
                    "row '{label}' has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("row '{label}' has a non-finite value")));
            }
            values.extend_from_slice(row);
        }
        Ok(ExpressionMatrix {
            values,
            n_cols,
            row_labels,
            groups,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    fn group_sizes(&self) -> (usize, usize) {
        let n_control = self.groups.iter().filter(|g| **g == Group::Control).count();
        (n_control, self.n_cols - n_control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TStatistics {
    pub t: Vec<f64>,
    pub df: u32,
}

/// Pooled-variance two-sample t per row; positive when treatment exceeds control.
pub fn two_sample_t(m: &ExpressionMatrix) -> Result<TStatistics> {
    let (n1, n2) = m.group_sizes();
    let df = (n1 + n2 - 2) as u32;
    let scale = (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();

    let t = (0..m.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let (mut s_c, mut s_t) = (0.0, 0.0);
            for (v, g) in row.iter().zip(&m.groups) {
                match g {
                    Group::Control => s_c += v,
                    Group::Treatment => s_t += v,
                }
            }
            let mean_c = s_c / n1 as f64;
            let mean_t = s_t / n2 as f64;
            let mut ss = 0.0;
            let mut max_abs = 0.0_f64;
            for (v, g) in row.iter().zip(&m.groups) {
                let d = match g {
                    Group::Control => v - mean_c,
                    Group::Treatment => v - mean_t,
                };
                ss += d * d;
                max_abs = max_abs.max(v.abs());
            }
            let pooled_var = ss / df as f64;
            if pooled_var <= 1e-28 * max_abs * max_abs {
                return Err(Error::ZeroVariance {
                    row: m.row_labels[i].clone(),
                });
            }
            Ok((mean_t - mean_c) / (pooled_var.sqrt() * scale))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TStatistics { t, df })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZConversion {
    pub z: ZVector,
    /// Rows whose |z| was clamped to [`Z_SATURATION`].
    pub saturated: Vec<usize>,
}

/// `z = Φ⁻¹(F_df(t))`, computed through the upper tail so large |t| stay accurate.
pub fn t_to_z(t: &[f64], df: u32) -> Result<ZConversion> {
    if df == 0 {
        return Err(Error::domain("df must be >= 1"));
    }
    let floor = normal_sf_unchecked(Z_SATURATION);
    let converted = t
        .par_iter()
        .map(|&ti| -> Result<(f64, bool)> {
            if !ti.is_finite() {
                return Err(Error::NonFinite("t statistic"));
            }
            if ti == 0.0 {
                return Ok((0.0, false));
            }
            let tail = student_t_abs_tail(ti, df)?;
            let (mag, clamped) = if tail < floor {
                (Z_SATURATION, true)
            } else if tail >= 0.5 {
                (0.0, false)
            } else {
                (upper_tail_quantile(tail)?, false)
            };
            Ok((mag.copysign(ti), clamped))
        })
        .collect::<Result<Vec<_>>>()?;

    let saturated = converted
        .iter()
        .enumerate()
        .filter_map(|(i, (_, c))| c.then_some(i))
        .collect();
    let z = ZVector::new(converted.into_iter().map(|(z, _)| z).collect())?;
    Ok(ZConversion { z, saturated })
}

/// Matrix straight to labelled z-values.
pub fn matrix_to_z(m: &ExpressionMatrix) -> Result<ZConversion> {
    let stats = two_sample_t(m)?;
    let mut conv = t_to_z(&stats.t, stats.df)?;
    conv.z = conv.z.with_labels(m.row_labels().to_vec())?;
    Ok(conv)
}

//! Natural cubic spline basis in truncated-power form.
//!
//! With knots `ξ_1 < … < ξ_K` the basis (without intercept) is
//! `N_1(x) = x` and `N_{k+1}(x) = d_k(x) - d_{K-1}(x)` for `k = 1..K-2`, where
//! `d_k(x) = ((x - ξ_k)³₊ - (x - ξ_K)³₊) / (ξ_K - ξ_k)`. Every member is
//! linear beyond the boundary knots. Evaluation happens on `x` rescaled to
//! `[0, 1]` over the boundary knots to keep the columns comparable in size.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaturalSplineBasis {
    /// All knots including both boundary knots, strictly increasing.
    knots: Vec<f64>,
    #[serde(skip)]
    scaled: Vec<f64>,
    origin: f64,
    width: f64,
}

impl NaturalSplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::domain("a natural spline needs at least 3 knots"));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::NonFinite("knots"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Degenerate("spline knots must be strictly increasing".into()));
        }
        let origin = knots[0];
        let width = knots[knots.len() - 1] - origin;
        let scaled = knots.iter().map(|k| (k - origin) / width).collect();
        Ok(NaturalSplineBasis {
            knots,
            scaled,
            origin,
            width,
        })
    }

    /// Boundary knots at `lo`/`hi`, interior knots at `df - 1` equally spaced
    /// sample quantiles of `sorted`.
    pub fn from_quantiles(sorted: &[f64], df: usize, lo: f64, hi: f64) -> Result<Self> {
        if df < 1 {
            return Err(Error::domain("spline df must be >= 1"));
        }
        let mut knots = Vec::with_capacity(df + 1);
        knots.push(lo);
        for j in 1..df {
            knots.push(crate::sample::quantile_sorted(sorted, j as f64 / df as f64));
        }
        knots.push(hi);
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, intercept excluded.
    pub fn dim(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Basis values at `x`, written into `out` (length `dim()`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let kn = &self.scaled;
        let u = (x - self.origin) / self.width;
        let last = kn[kn.len() - 1];
        let d = |k: usize| {
            let a = (u - kn[k]).max(0.0);
            let b = (u - last).max(0.0);
            (a * a * a - b * b * b) / (last - kn[k])
        };
        let k_pen = kn.len() - 2;
        let d_pen = d(k_pen);
        out[0] = u;
        for k in 0..k_pen {
            out[k + 1] = d(k) - d_pen;
        }
    }

    /// First derivatives of the basis at `x` with respect to `x`.
    pub fn derivative_into(&self, x: f64, out: &mut [f64]) {
        let kn = &self.scaled;
        let u = (x - self.origin) / self.width;
        let last = kn[kn.len() - 1];
        let dd = |k: usize| {
            let a = (u - kn[k]).max(0.0);
            let b = (u - last).max(0.0);
            3.0 * (a * a - b * b) / (last - kn[k])
        };
        let k_pen = kn.len() - 2;
        let dd_pen = dd(k_pen);
        let chain = 1.0 / self.width;
        out[0] = chain;
        for k in 0..k_pen {
            out[k + 1] = (dd(k) - dd_pen) * chain;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval_into(x, &mut v);
        v
    }

    pub fn derivative(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.derivative_into(x, &mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> NaturalSplineBasis {
        NaturalSplineBasis::new(vec![-3.0, -1.0, -0.2, 0.5, 1.4, 4.0]).unwrap()
    }

    #[test]
    fn dimension() {
        assert_eq!(basis().dim(), 5);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(NaturalSplineBasis::new(vec![0.0, 1.0, 1.0, 2.0]).is_err());
        assert!(NaturalSplineBasis::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn linear_outside_boundary() {
        let b = basis();
        for x in [-6.0, -4.0, 5.0, 9.0] {
            let d1 = b.derivative(x);
            let d2 = b.derivative(x + 0.37);
            for (a, c) in d1.iter().zip(&d2) {
                assert!((a - c).abs() < 1e-12, "x={x}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let b = basis();
        let h = 1e-6;
        let mut x = -3.5;
        while x < 4.5 {
            let d = b.derivative(x);
            let plus = b.eval(x + h);
            let minus = b.eval(x - h);
            for j in 0..b.dim() {
                let fd = (plus[j] - minus[j]) / (2.0 * h);
                assert!((d[j] - fd).abs() < 1e-6, "x={x} j={j} {} vs {}", d[j], fd);
            }
            x += 0.173;
        }
    }

    #[test]
    fn second_derivative_continuous_at_interior_knots() {
        let b = basis();
        let h = 1e-5;
        for &k in &b.knots()[1..b.knots().len() - 1] {
            let left = b.derivative(k - h);
            let mid = b.derivative(k);
            let right = b.derivative(k + h);
            for j in 0..b.dim() {
                let s_left = (mid[j] - left[j]) / h;
                let s_right = (right[j] - mid[j]) / h;
                assert!((s_left - s_right).abs() < 1e-3, "knot {k} col {j}");
            }
        }
    }
}

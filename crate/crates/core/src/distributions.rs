//! Normal and Student-t primitives.
//!
//! Everything here is a pure function of its arguments. The normal tail is
//! computed through a complementary error function that switches from a
//! positive-term series to a Laplace continued fraction, so upper-tail
//! probabilities keep their relative accuracy far into the tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Crossover between the erf series and the erfc continued fraction.
const ERFC_SERIES_LIMIT: f64 = 2.5;

/// Location and scale of a normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianParams {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        let p = GaussianParams { mean, sd };
        p.validate()?;
        Ok(p)
    }

    pub const fn standard() -> Self {
        GaussianParams { mean: 0.0, sd: 1.0 }
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.sd.is_finite() {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        if self.sd <= 0.0 {
            return Err(Error::domain(format!("sd must be > 0, got {}", self.sd)));
        }
        Ok(())
    }

    pub fn pdf(&self, z: f64) -> f64 {
        let u = (z - self.mean) / self.sd;
        FRAC_1_SQRT_2PI * (-0.5 * u * u).exp() / self.sd
    }

    pub fn cdf(&self, z: f64) -> f64 {
        normal_cdf_unchecked((z - self.mean) / self.sd)
    }

    /// Upper tail probability `P(Z >= z)`.
    pub fn sf(&self, z: f64) -> f64 {
        normal_sf_unchecked((z - self.mean) / self.sd)
    }
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self::standard()
    }
}

pub fn normal_pdf(z: f64, p: GaussianParams) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("z"));
    }
    p.validate()?;
    Ok(p.pdf(z))
}

/// Standard normal c.d.f.
pub fn normal_cdf(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::NonFinite("z"));
    }
    Ok(normal_cdf_unchecked(z))
}

/// Standard normal survival function `1 - Φ(z)`, accurate in the upper tail.
pub fn normal_sf(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::NonFinite("z"));
    }
    Ok(normal_sf_unchecked(z))
}

pub(crate) fn normal_cdf_unchecked(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

pub(crate) fn normal_sf_unchecked(z: f64) -> f64 {
    0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < ERFC_SERIES_LIMIT {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

// erf(x) = 2/√π · exp(-x²) · Σ 2ⁿ x^(2n+1) / (1·3·…·(2n+1)); every term positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 || n > 500.0 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), modified Lentz.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..2000 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (SQRT_PI * f)
}

/// Standard normal quantile.
///
/// Solved by safeguarded Newton iteration on the log upper tail, so the
/// result inverts [`normal_cdf`] to working precision in both tails.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return Err(Error::domain(format!("quantile needs 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // 1 - p is exact for p in [0.5, 1).
    if p < 0.5 {
        Ok(-upper_tail_quantile(p)?)
    } else {
        upper_tail_quantile(1.0 - p)
    }
}

/// Returns `z > 0` with `1 - Φ(z) = tail`, for `0 < tail < 0.5`.
pub(crate) fn upper_tail_quantile(tail: f64) -> Result<f64> {
    let target = tail.ln();
    let g = |z: f64| normal_sf_unchecked(z).ln() - target;

    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    let mut z = (-2.0 * target).sqrt().clamp(0.1, 39.0);
    for _ in 0..200 {
        let sf = normal_sf_unchecked(z);
        let val = sf.ln() - target;
        if val > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        // d/dz ln sf(z) = -φ(z)/sf(z)
        let slope = -FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / sf;
        let mut next = z - val / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = (next - z).abs();
        z = next;
        if step <= 1e-15 * z.max(1.0) || hi - lo <= 1e-15 * z.max(1.0) {
            return Ok(z);
        }
    }
    if g(z).abs() < 1e-12 {
        Ok(z)
    } else {
        Err(Error::NotConverged {
            what: "normal quantile",
            iterations: 200,
        })
    }
}

/// Natural log of the gamma function (Lanczos, g = 7) for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` where the caller supplies both
/// `x` and `y = 1 - x` so that neither loses precision to cancellation.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain("incomplete beta needs a, b > 0"));
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::domain("incomplete beta needs 0 <= x <= 1"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_continued_fraction(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_continued_fraction(b, a, y)? / b)
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let max_iter = 10_000 + (20.0 * (a + b).sqrt()) as usize;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::NotConverged {
        what: "incomplete beta continued fraction",
        iterations: max_iter,
    })
}

/// One-sided tail `P(T >= |t|)` for a t variate with `df` degrees of freedom.
pub(crate) fn student_t_abs_tail(t: f64, df: u32) -> Result<f64> {
    let nu = df as f64;
    let t2 = t * t;
    let x = nu / (nu + t2);
    let y = t2 / (nu + t2);
    Ok(0.5 * regularized_incomplete_beta(0.5 * nu, 0.5, x, y)?)
}

fn check_t_args(t: f64, df: u32) -> Result<()> {
    if df == 0 {
        return Err(Error::domain("student t needs df >= 1"));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("t"));
    }
    Ok(())
}

/// Student-t c.d.f.
pub fn student_t_cdf(t: f64, df: u32) -> Result<f64> {
    check_t_args(t, df)?;
    if t == 0.0 {
        return Ok(0.5);
    }
    let tail = student_t_abs_tail(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Student-t survival function `P(T >= t)`.
pub fn student_t_sf(t: f64, df: u32) -> Result<f64> {
    check_t_args(t, df)?;
    if t == 0.0 {
        return Ok(0.5);
    }
    let tail = student_t_abs_tail(t, df)?;
    Ok(if t > 0.0 { tail } else { 1.0 - tail })
}

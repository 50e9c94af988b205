//! Tail-area false discovery rates under the two-groups model.
//!
//! `Fdr̂(c) = E0(c) / N(c)` where `N(c)` counts z-values beyond `c` on the
//! chosen side and `E0(c) = N · p0 · F0(c)` is the count the null would
//! produce. Thresholds are scanned at the observed z-values only, since that
//! is where `N(c)` changes.

use serde::{Deserialize, Serialize};

use crate::distributions::GaussianParams;
use crate::error::{Error, Result};
use crate::zvector::ZVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Right,
    Left,
}

impl Side {
    /// Whether `z` lies at or beyond `c` on this side.
    pub fn exceeds(self, z: f64, c: f64) -> bool {
        match self {
            Side::Right => z >= c,
            Side::Left => z <= c,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" => Ok(Side::Right),
            "left" => Ok(Side::Left),
            _ => Err(Error::domain(format!("side must be right or left, got '{s}'"))),
        }
    }
}

/// Tail probability of a normal beyond `c` on `side`.
pub fn gaussian_tail(p: &GaussianParams, c: f64, side: Side) -> f64 {
    match side {
        Side::Right => p.sf(c),
        Side::Left => p.cdf(c),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullKind {
    Theoretical,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub kind: NullKind,
    pub params: GaussianParams,
    pub p0: f64,
}

impl NullModel {
    /// `N(0, 1)` null with the given null proportion.
    pub fn theoretical(p0: f64) -> Result<Self> {
        check_p0(p0)?;
        Ok(NullModel {
            kind: NullKind::Theoretical,
            params: GaussianParams::standard(),
            p0,
        })
    }

    pub fn empirical(params: GaussianParams, p0: f64) -> Result<Self> {
        params.validate()?;
        check_p0(p0)?;
        Ok(NullModel {
            kind: NullKind::Empirical,
            params,
            p0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        check_p0(self.p0)?;
        if self.kind == NullKind::Theoretical && self.params != GaussianParams::standard() {
            return Err(Error::domain("a theoretical null must be N(0, 1)"));
        }
        Ok(())
    }

    pub fn tail(&self, c: f64, side: Side) -> f64 {
        gaussian_tail(&self.params, c, side)
    }

    /// Expected number of null cases beyond `c` among `n`.
    pub fn expected_exceedances(&self, n: usize, c: f64, side: Side) -> f64 {
        n as f64 * self.p0 * self.tail(c, side)
    }
}

fn check_p0(p0: f64) -> Result<()> {
    if p0 > 0.0 && p0 <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("p0 must lie in (0, 1], got {p0}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub params: GaussianParams,
}

/// Non-null density `f1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum AltDensity {
    Gaussian(GaussianParams),
    Mixture { components: Vec<MixtureComponent> },
}

impl AltDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            AltDensity::Gaussian(p) => p.validate(),
            AltDensity::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::domain("mixture needs at least one component"));
                }
                let mut total = 0.0;
                for c in components {
                    c.params.validate()?;
                    if !(c.weight > 0.0) {
                        return Err(Error::domain("mixture weights must be > 0"));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            AltDensity::Gaussian(p) => p.pdf(z),
            AltDensity::Mixture { components } => {
                components.iter().map(|c| c.weight * c.params.pdf(z)).sum()
            }
        }
    }

    pub fn tail(&self, c: f64, side: Side) -> f64 {
        match self {
            AltDensity::Gaussian(p) => gaussian_tail(p, c, side),
            AltDensity::Mixture { components } => components
                .iter()
                .map(|m| m.weight * gaussian_tail(&m.params, c, side))
                .sum(),
        }
    }

    /// Draw one value given a uniform in [0, 1) and a standard normal.
    pub fn draw(&self, u: f64, std_normal: f64) -> f64 {
        let p = match self {
            AltDensity::Gaussian(p) => p,
            AltDensity::Mixture { components } => {
                let mut acc = 0.0;
                let mut chosen = &components[components.len() - 1].params;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = &c.params;
                        break;
                    }
                }
                chosen
            }
        };
        p.mean + p.sd * std_normal
    }
}

/// Each case is null with probability `p0` (z ~ f0) or non-null (z ~ f1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupsModel {
    pub p0: f64,
    pub null: GaussianParams,
    pub alt: AltDensity,
}

impl TwoGroupsModel {
    pub fn new(p0: f64, null: GaussianParams, alt: AltDensity) -> Result<Self> {
        let m = TwoGroupsModel { p0, null, alt };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_p0(self.p0)?;
        self.null.validate()?;
        self.alt.validate()
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.p0 * self.null.pdf(z) + (1.0 - self.p0) * self.alt.pdf(z)
    }

    /// Mixture tail `F(c) = p0 F0(c) + p1 F1(c)`.
    pub fn tail(&self, c: f64, side: Side) -> f64 {
        self.p0 * gaussian_tail(&self.null, c, side) + (1.0 - self.p0) * self.alt.tail(c, side)
    }
}

/// Exact `Pr{null | z beyond c} = p0 F0(c) / F(c)`.
pub fn true_fdr(model: &TwoGroupsModel, c: f64, side: Side) -> Result<f64> {
    model.validate()?;
    let null_part = model.p0 * gaussian_tail(&model.null, c, side);
    let total = model.tail(c, side);
    if total <= 0.0 {
        return Err(Error::domain(format!("mixture tail probability is zero at c = {c}")));
    }
    Ok(null_part / total)
}

/// One evaluation of `Fdr̂` at a cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrPoint {
    pub c: f64,
    pub n_exceed: usize,
    pub e0: f64,
    /// `E0 / N(c)`; `None` when nothing exceeds `c`.
    pub fdr_raw: Option<f64>,
    pub fdr_clipped: Option<f64>,
}

impl FdrPoint {
    fn new(c: f64, n_exceed: usize, e0: f64) -> Self {
        let raw = (n_exceed > 0).then(|| e0 / n_exceed as f64);
        FdrPoint {
            c,
            n_exceed,
            e0,
            fdr_raw: raw,
            fdr_clipped: raw.map(|v| v.min(1.0)),
        }
    }

    /// Raw estimate with `+∞` standing in for an empty exceedance set.
    pub fn value(&self) -> f64 {
        self.fdr_raw.unwrap_or(f64::INFINITY)
    }

    pub fn no_exceedances(&self) -> bool {
        self.n_exceed == 0
    }
}

pub fn fdr_hat(z: &ZVector, c: f64, null: &NullModel, side: Side) -> Result<FdrPoint> {
    null.validate()?;
    if c.is_nan() {
        return Err(Error::NonFinite("cutoff"));
    }
    let n_exceed = z.values().iter().filter(|&&v| side.exceeds(v, c)).count();
    let e0 = null.expected_exceedances(z.len(), c, side);
    Ok(FdrPoint::new(c, n_exceed, e0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrReport {
    pub side: Side,
    pub q: f64,
    pub n: usize,
    pub null: NullModel,
    pub threshold: Option<f64>,
    /// Case indices, ascending.
    pub discoveries: Vec<usize>,
    pub fdr_at_threshold: Option<f64>,
    pub fdr_at_threshold_clipped: Option<f64>,
    /// `Fdr̂` at every distinct observed value, from the outermost inward.
    pub curve: Vec<FdrPoint>,
}

impl FdrReport {
    pub fn n_discoveries(&self) -> usize {
        self.discoveries.len()
    }
}

/// Smallest cutoff (on the chosen side) whose `Fdr̂` is at most `q`.
pub fn bh_threshold(z: &ZVector, q: f64, null: &NullModel, side: Side) -> Result<FdrReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("q must lie in (0, 1), got {q}")));
    }
    null.validate()?;
    let values = z.values();
    let n = values.len();

    // Outermost first: descending for the right tail, ascending for the left.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        match side {
            Side::Right => ord.reverse(),
            Side::Left => ord,
        }
    });

    let mut curve = Vec::new();
    let mut chosen: Option<usize> = None;
    let mut k = 0;
    while k < n {
        let c = values[order[k]];
        while k < n && values[order[k]] == c {
            k += 1;
        }
        let point = FdrPoint::new(c, k, null.expected_exceedances(n, c, side));
        if point.value() <= q {
            chosen = Some(curve.len());
        }
        curve.push(point);
    }

    let (threshold, discoveries, fdr_raw) = match chosen {
        Some(i) => {
            let p = curve[i];
            let mut d: Vec<usize> = order[..p.n_exceed].to_vec();
            d.sort_unstable();
            (Some(p.c), d, p.fdr_raw)
        }
        None => (None, Vec::new(), None),
    };

    Ok(FdrReport {
        side,
        q,
        n,
        null: *null,
        threshold,
        discoveries,
        fdr_at_threshold: fdr_raw,
        fdr_at_threshold_clipped: fdr_raw.map(|v| v.min(1.0)),
        curve,
    })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-case z-values with optional case labels and a per-case covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZVector {
    z: Vec<f64>,
    labels: Option<Vec<String>>,
    covariate: Option<Vec<f64>>,
}

impl ZVector {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("z-values"));
        }
        Ok(ZVector {
            z,
            labels: None,
            covariate: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.z.len() {
            return Err(Error::domain(format!(
                "{} labels for {} z-values",
                labels.len(),
                self.z.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_covariate(mut self, covariate: Vec<f64>) -> Result<Self> {
        if covariate.len() != self.z.len() {
            return Err(Error::domain(format!(
                "covariate has length {}, expected {}",
                covariate.len(),
                self.z.len()
            )));
        }
        if covariate.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate"));
        }
        self.covariate = Some(covariate);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn covariate(&self) -> Option<&[f64]> {
        self.covariate.as_deref()
    }

    /// Label of case `i`, falling back to its 1-based position.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    /// Cases at `indices`, in that order, carrying labels and covariate along.
    pub fn subset(&self, indices: &[usize]) -> ZVector {
        ZVector {
            z: indices.iter().map(|&i| self.z[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
            covariate: self
                .covariate
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Same cases and metadata with the z-values replaced.
    pub fn with_values(&self, z: Vec<f64>) -> Result<ZVector> {
        if z.len() != self.z.len() {
            return Err(Error::domain("replacement z-values have a different length"));
        }
        let mut out = ZVector::new(z)?;
        out.labels = self.labels.clone();
        out.covariate = self.covariate.clone();
        Ok(out)
    }
}

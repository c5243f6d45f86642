use std::collections::BTreeMap;

use serde::Serialize;

/// Point estimate: a scalar (quadratic forms, average effects) or a vector (coefficients).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Estimate {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Estimate {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Estimate::Scalar(v) => Some(*v),
            Estimate::Vector(v) if v.len() == 1 => Some(v[0]),
            Estimate::Vector(_) => None,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Estimate::Scalar(v) => std::slice::from_ref(v),
            Estimate::Vector(v) => v,
        }
    }
}

/// Output of every estimator, serialized as `{estimate, components?, n, n2?, diagnostics, provenance?}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimate: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<BTreeMap<String, f64>>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl EstimateResult {
    pub fn new(estimate: Estimate, n: usize) -> Self {
        Self {
            estimate,
            components: None,
            n,
            n2: None,
            diagnostics: BTreeMap::new(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_string(), value.to_string());
        self
    }
}

//! Average partial effects of a binary covariate in logit models.
//!
//! A function `psi` of the outcomes identifies the average of `m(a, x)` when
//! `E[psi(Y) | a, x] = m(a, x)` for every `a`. For two-period movers such
//! functions exist in closed form; for stayers and for the firm-pair effect
//! in a two-mover block they do not, which is certified here by showing that
//! the linear system for `psi` on a grid of heterogeneity values has no
//! solution.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Estimate, EstimateResult};
use crate::linalg::{least_squares, DEFAULT_TOL};
use crate::logitmodel::{outcome_distribution, DEFAULT_CAP};
use crate::netcore::DesignMatrices;

/// Residual above which a certificate reports that no solution exists.
pub const NO_SOLUTION_THRESHOLD: f64 = 1e-3;

/// Residual below which a certificate reports that a solution exists.
pub const SOLUTION_THRESHOLD: f64 = 1e-10;

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `Lambda(theta + a) - Lambda(a)`.
pub fn m_ape(a: f64, theta: f64) -> f64 {
    logistic(theta + a) - logistic(a)
}

/// `(x2 - x1)(y2 - y1)`.
pub fn psi_movers_simple(y1: u8, y2: u8, x1: f64, x2: f64) -> f64 {
    (x2 - x1) * (y2 as f64 - y1 as f64)
}

/// `1{x1 != x2} [y1 (1 - y2) exp(theta (1 - x1)) - (1 - y1) y2 exp(-theta x2)]`.
pub fn psi_movers_exp(y1: u8, y2: u8, x1: f64, x2: f64, theta: f64) -> f64 {
    if x1 == x2 {
        return 0.0;
    }
    match (y1, y2) {
        (1, 0) => (theta * (1.0 - x1)).exp(),
        (0, 1) => -(-theta * x2).exp(),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetKind {
    /// Two-period worker whose binary covariate changes.
    MoversAPE,
    /// Two-period worker whose covariate is the same in both periods.
    StayersAPE,
    /// Effect on the first worker-firm pair of a two-worker, two-firm block.
    #[serde(rename = "ConfigC_APE")]
    ConfigCAPE,
}

impl TargetKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "movers" | "moversape" => Some(Self::MoversAPE),
            "stayers" | "stayersape" => Some(Self::StayersAPE),
            "configc" | "configc_ape" | "configcape" => Some(Self::ConfigCAPE),
            _ => None,
        }
    }

    pub fn n_outcomes(&self) -> usize {
        match self {
            TargetKind::MoversAPE | TargetKind::StayersAPE => 2,
            TargetKind::ConfigCAPE => 4,
        }
    }

    pub fn n_effects(&self) -> usize {
        match self {
            TargetKind::MoversAPE | TargetKind::StayersAPE => 1,
            TargetKind::ConfigCAPE => 4,
        }
    }

    /// Covariates used when none are given.
    pub fn default_x(&self) -> Vec<f64> {
        match self {
            TargetKind::MoversAPE => vec![0.0, 1.0],
            TargetKind::StayersAPE => vec![1.0, 1.0],
            TargetKind::ConfigCAPE => vec![0.0, 1.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetEffect {
    pub kind: TargetKind,
    pub theta: f64,
}

impl TargetEffect {
    pub fn new(kind: TargetKind, theta: f64) -> Self {
        Self { kind, theta }
    }

    /// Outcome design: a two-period panel, or two workers (effects 1, 2)
    /// each observed at two firms (effects 3, 4) in the order
    /// `(1,3), (1,4), (2,3), (2,4)`.
    pub fn design(&self, x: &[f64]) -> Result<DesignMatrices> {
        let n = self.kind.n_outcomes();
        if x.len() != n {
            return Err(Error::DimensionMismatch(format!("{:?} needs {n} covariates, got {}", self.kind, x.len())));
        }
        if self.kind == TargetKind::StayersAPE && x[0] != x[1] {
            return Err(Error::InvalidParameter("stayers have the same covariate in both periods".into()));
        }
        let x1 = match self.kind {
            TargetKind::MoversAPE | TargetKind::StayersAPE => DMatrix::from_element(2, 1, 1.0),
            TargetKind::ConfigCAPE => {
                let mut x1 = DMatrix::zeros(4, 4);
                for (r, (w, f)) in [(0, 2), (0, 3), (1, 2), (1, 3)].into_iter().enumerate() {
                    x1[(r, w)] = 1.0;
                    x1[(r, f)] = 1.0;
                }
                x1
            }
        };
        DesignMatrices::from_parts(DVector::zeros(n), x1, DMatrix::from_column_slice(n, 1, x))
    }

    /// `m(a, x)`.
    pub fn value(&self, a: &DVector<f64>, x: &[f64]) -> f64 {
        match self.kind {
            TargetKind::MoversAPE if x[0] == x[1] => 0.0,
            TargetKind::MoversAPE | TargetKind::StayersAPE => m_ape(a[0], self.theta),
            TargetKind::ConfigCAPE => m_ape(a[0] + a[2], self.theta),
        }
    }
}

/// Evenly spaced points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.lo],
            p => (0..p).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (p - 1) as f64).collect(),
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(-4.0, 4.0, 81)
    }
}

/// Heterogeneity points for a target: the grid itself for one effect, or
/// for the two-mover block the product of `main` over the effects in the
/// target pair and `nuisance` over the other two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectGrid {
    pub main: GridSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuisance: Option<GridSpec>,
}

impl EffectGrid {
    pub fn scalar(main: GridSpec) -> Self {
        Self { main, nuisance: None }
    }

    pub fn default_for(kind: TargetKind) -> Self {
        match kind {
            TargetKind::ConfigCAPE => Self {
                main: GridSpec::new(-4.0, 4.0, 9),
                nuisance: Some(GridSpec::new(-2.0, 2.0, 5)),
            },
            _ => Self::scalar(GridSpec::default()),
        }
    }

    pub fn points(&self, kind: TargetKind) -> Vec<DVector<f64>> {
        let main = self.main.values();
        match kind {
            TargetKind::ConfigCAPE => {
                let nuisance = self.nuisance.unwrap_or(self.main).values();
                let mut out = Vec::new();
                for &a1 in &main {
                    for &a3 in &main {
                        for &a2 in &nuisance {
                            for &a4 in &nuisance {
                                out.push(DVector::from_vec(vec![a1, a2, a3, a4]));
                            }
                        }
                    }
                }
                out
            }
            _ => main.into_iter().map(|a| DVector::from_element(1, a)).collect(),
        }
    }
}

/// Outcome probabilities at each heterogeneity point, one row per point.
fn probability_matrix(target: &TargetEffect, x: &[f64], points: &[DVector<f64>], cap: usize) -> Result<DMatrix<f64>> {
    let dm = target.design(x)?;
    let theta = DVector::from_element(1, target.theta);
    let n_out = 1usize << dm.n();
    let mut p = DMatrix::zeros(points.len(), n_out);
    for (r, a) in points.iter().enumerate() {
        if a.len() != target.kind.n_effects() {
            return Err(Error::DimensionMismatch(format!("heterogeneity point has {} entries", a.len())));
        }
        for (c, (_, prob)) in outcome_distribution(&dm, a, &theta, cap)?.into_iter().enumerate() {
            p[(r, c)] = prob;
        }
    }
    Ok(p)
}

/// `max_a |sum_y psi(y) f(y | x, a) - m(a, x)|` over `points`.
pub fn verify_psi(psi: &dyn Fn(&[u8]) -> f64, target: &TargetEffect, x: &[f64], points: &[DVector<f64>]) -> Result<f64> {
    let dm = target.design(x)?;
    let theta = DVector::from_element(1, target.theta);
    let mut worst: f64 = 0.0;
    for a in points {
        let mean: f64 = outcome_distribution(&dm, a, &theta, DEFAULT_CAP)?
            .iter()
            .map(|(y, p)| psi(y) * p)
            .sum();
        worst = worst.max((mean - target.value(a, x)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoSolution,
    SolutionExists,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub target: TargetKind,
    pub theta: f64,
    pub x: Vec<f64>,
    pub grid: EffectGrid,
    pub residual: f64,
    pub verdict: Verdict,
    /// Least-squares `psi`, one value per outcome in lexicographic order.
    pub psi: Vec<f64>,
}

/// Solves `sum_y psi(y) f(y | x, a) = m(a, x)` over the grid in least squares
/// and reports the residual norm.
pub fn certify_impossibility(target: &TargetEffect, x: &[f64], grid: &EffectGrid) -> Result<Certificate> {
    if target.theta == 0.0 || !target.theta.is_finite() {
        return Err(Error::InvalidParameter(
            "theta must be finite and nonzero: at theta = 0 the effect is 0 and psi = 0 solves the system".into(),
        ));
    }
    let points = grid.points(target.kind);
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty heterogeneity grid".into()));
    }
    let p = probability_matrix(target, x, &points, DEFAULT_CAP)?;
    let m = DVector::from_iterator(points.len(), points.iter().map(|a| target.value(a, x)));
    let (psi, residual) = least_squares(&p, &m, DEFAULT_TOL)?;
    let verdict = if residual > NO_SOLUTION_THRESHOLD {
        Verdict::NoSolution
    } else if residual < SOLUTION_THRESHOLD {
        Verdict::SolutionExists
    } else {
        Verdict::Inconclusive
    };
    Ok(Certificate {
        target: target.kind,
        theta: target.theta,
        x: x.to_vec(),
        grid: *grid,
        residual,
        verdict,
        psi: psi.iter().cloned().collect(),
    })
}

/// Two-period observation with a binary covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelPair {
    pub y: [u8; 2],
    pub x: [f64; 2],
}

/// Averages both movers' functions over observations whose covariate changes.
/// The estimate is the exponential variant at `theta_hat`; the simple variant
/// and both standard errors are reported alongside.
pub fn estimate_ape_movers(pairs: &[PanelPair], theta_hat: f64) -> Result<EstimateResult> {
    let movers: Vec<&PanelPair> = pairs.iter().filter(|p| p.x[0] != p.x[1]).collect();
    if movers.is_empty() {
        return Err(Error::NoMoverBlocks);
    }
    if movers.iter().any(|p| p.x.iter().any(|&v| v != 0.0 && v != 1.0) || p.y.iter().any(|&v| v > 1)) {
        return Err(Error::InvalidParameter("movers need binary outcomes and covariates".into()));
    }
    let simple: Vec<f64> = movers.iter().map(|p| psi_movers_simple(p.y[0], p.y[1], p.x[0], p.x[1])).collect();
    let exp: Vec<f64> = movers
        .iter()
        .map(|p| psi_movers_exp(p.y[0], p.y[1], p.x[0], p.x[1], theta_hat))
        .collect();
    let (ms, ss) = mean_se(&simple);
    let (me, se) = mean_se(&exp);
    let diff: Vec<f64> = simple.iter().zip(&exp).map(|(a, b)| a - b).collect();
    let (md, sd) = mean_se(&diff);
    let mut components = BTreeMap::new();
    components.insert("psi_exp".to_string(), me);
    components.insert("psi_simple".to_string(), ms);
    let mut out = EstimateResult::new(Estimate::Scalar(me), movers.len())
        .with_diagnostic("se_psi_exp", se)
        .with_diagnostic("se_psi_simple", ss)
        .with_diagnostic("mean_difference", md)
        .with_diagnostic("se_difference", sd)
        .with_diagnostic("theta_hat", theta_hat)
        .with_diagnostic("n_pairs", pairs.len() as f64);
    out.components = Some(components);
    Ok(out)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

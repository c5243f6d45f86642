//! Logit models on networks, `Y = 1{x1 A + x2 theta + eps > 0}` with
//! logistic `eps`.
//!
//! `S = x1'Y` is sufficient for `A`, so any function whose exp-weighted sum
//! vanishes on each level set `{y : x1'y = s}` has conditional mean zero
//! whatever `A` is. Level sets are found by enumeration; moment functions by
//! a null-space computation per level.

mod closed_form;
mod gmm;

pub use closed_form::{
    closed_form_moments, phi_conditional_logit, phi_config_c, phi_config_f, phi_tetrad, ClosedForm, TetradCase,
};
pub use gmm::{
    blocks_from_network, estimate_theta_gmm, fit_prepared, observed_key, prepare_blocks, GmmFit, GmmOptions, LogitBlock,
    MomentBuilder, PreparedBlocks, WeightRule,
};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::DEFAULT_TOL;
use crate::netcore::DesignMatrices;

/// Default largest `n` for which `{0,1}^n` is enumerated.
pub const DEFAULT_CAP: usize = 20;

/// Hard limit on the enumeration cap, whatever the caller asks for.
pub const MAX_CAP: usize = 30;

/// Relative tolerance for deciding that `y'x2` is constant on a level.
const CONSTANT_INDEX_TOL: f64 = 1e-12;

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    let cap = cap.min(MAX_CAP);
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    Ok(())
}

/// Linear index `x1 a + x2 theta`.
pub fn linear_index(dm: &DesignMatrices, a: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
    if a.len() != dm.m() || theta.len() != dm.k() {
        return Err(Error::DimensionMismatch(format!(
            "a has {} entries (design {}), theta has {} (design {})",
            a.len(),
            dm.m(),
            theta.len(),
            dm.k()
        )));
    }
    let mut eta = &dm.x1 * a;
    if dm.k() > 0 {
        eta += &dm.x2 * theta;
    }
    Ok(eta)
}

/// `sum_i y_i eta_i - log(1 + exp(eta_i))`.
pub fn loglik(y: &[u8], dm: &DesignMatrices, a: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
    if y.len() != dm.n() {
        return Err(Error::DimensionMismatch(format!("y has {} entries, design has {}", y.len(), dm.n())));
    }
    let eta = linear_index(dm, a, theta)?;
    Ok(y.iter().zip(eta.iter()).map(|(&yi, &e)| yi as f64 * e - softplus(e)).sum())
}

/// Outcome vector of length `n` encoded with position 0 as the most
/// significant bit, so numeric order is lexicographic order.
fn decode(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> (n - 1 - i)) & 1) as u8).collect()
}

#[cfg(test)]
fn encode(y: &[u8]) -> u64 {
    y.iter().fold(0u64, |acc, &b| (acc << 1) | (b as u64 & 1))
}

pub fn bit_string(y: &[u8]) -> String {
    y.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

/// Partition of `{0,1}^n` by the sufficient statistic `x1'y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetIndex {
    n: usize,
    levels: BTreeMap<Vec<i64>, Vec<u64>>,
}

impl LevelSetIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.levels.keys()
    }

    /// Members of one level in lexicographic order.
    pub fn level(&self, key: &[i64]) -> Option<Vec<Vec<u8>>> {
        self.levels.get(key).map(|ms| ms.iter().map(|&m| decode(m, self.n)).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, Vec<Vec<u8>>)> + '_ {
        self.levels
            .iter()
            .map(move |(k, ms)| (k, ms.iter().map(|&m| decode(m, self.n)).collect()))
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.values().map(Vec::len)
    }
}

fn statistic(x1: &DMatrix<i64>, y: &[u8]) -> Vec<i64> {
    (0..x1.ncols())
        .map(|c| (0..x1.nrows()).filter(|&r| y[r] == 1).map(|r| x1[(r, c)]).sum())
        .collect()
}

/// Enumerates `{0,1}^n` and groups outcomes by `x1'y`.
pub fn sufficient_levels(x1: &DMatrix<i64>, cap: usize) -> Result<LevelSetIndex> {
    let n = x1.nrows();
    check_cap(n, cap)?;
    let mut levels: BTreeMap<Vec<i64>, Vec<u64>> = BTreeMap::new();
    let m = x1.ncols();
    for mask in 0..(1u64 << n) {
        let mut key = vec![0i64; m];
        for r in 0..n {
            if (mask >> (n - 1 - r)) & 1 == 1 {
                for (c, k) in key.iter_mut().enumerate() {
                    *k += x1[(r, c)];
                }
            }
        }
        levels.entry(key).or_default().push(mask);
    }
    Ok(LevelSetIndex { n, levels })
}

/// The level containing `y`, in lexicographic order.
pub fn level_of(x1: &DMatrix<i64>, y: &[u8], cap: usize) -> Result<(Vec<i64>, Vec<Vec<u8>>)> {
    let n = x1.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("y has {} entries, design has {n}", y.len())));
    }
    check_cap(n, cap)?;
    let key = statistic(x1, y);
    let members = (0..(1u64 << n))
        .map(|mask| decode(mask, n))
        .filter(|cand| statistic(x1, cand) == key)
        .collect();
    Ok((key, members))
}

/// Named moment families with analytic coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedFormTag {
    CondLogit,
    Tetrad,
    ConfigC,
    ConfigF,
}

/// A finitely supported function of the binary outcome vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentFunction {
    pub level_key: Vec<i64>,
    #[serde(serialize_with = "support_as_bits")]
    pub support: Vec<Vec<u8>>,
    pub coeffs: Vec<f64>,
    pub theta_at: Vec<f64>,
    pub closed_form: Option<ClosedFormTag>,
    /// False when `y'x2` is constant on the level, so the restriction holds
    /// for every `theta` and says nothing about it.
    pub informative: bool,
}

fn support_as_bits<S: Serializer>(support: &[Vec<u8>], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(support.iter().map(|y| bit_string(y)))
}

impl MomentFunction {
    pub fn value(&self, y: &[u8]) -> f64 {
        self.support
            .iter()
            .position(|s| s.as_slice() == y)
            .map_or(0.0, |i| self.coeffs[i])
    }

    /// `sum_j c_j exp(y_j'x2 theta)` at `theta`, relative to the largest term.
    pub fn weighted_residual(&self, x2: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
        let idx: Vec<f64> = self.support.iter().map(|y| outcome_index(y, x2, theta)).collect();
        let top = idx
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| *i)
            .fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return 0.0;
        }
        let terms: Vec<f64> = idx.iter().zip(&self.coeffs).map(|(i, c)| c * (i - top).exp()).collect();
        let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            terms.iter().sum::<f64>() / scale
        }
    }

    /// Rescaled so coefficients have unit absolute sum and the first
    /// (lexicographically smallest) support point carries a positive weight.
    pub fn normalized(&self) -> MomentFunction {
        let mut out = self.clone();
        let total: f64 = self.coeffs.iter().map(|c| c.abs()).sum();
        if total == 0.0 {
            return out;
        }
        let first = self
            .support
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .min_by(|a, b| a.0.cmp(b.0))
            .map_or(1.0, |(_, c)| c.signum());
        for c in &mut out.coeffs {
            *c *= first / total;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> MomentFunction {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        out
    }
}

/// `y'x2 theta`.
pub fn outcome_index(y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    if x2.ncols() == 0 {
        return 0.0;
    }
    (0..y.len())
        .filter(|&r| y[r] == 1)
        .map(|r| x2.row(r).iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

fn outcome_covariates(y: &[u8], x2: &DMatrix<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(x2.ncols());
    for r in (0..y.len()).filter(|&r| y[r] == 1) {
        s += x2.row(r).transpose();
    }
    s
}

fn index_is_constant(members: &[Vec<u8>], x2: &DMatrix<f64>) -> bool {
    if x2.ncols() == 0 || members.len() < 2 {
        return true;
    }
    let scale = x2.amax().max(1.0) * members[0].len() as f64;
    let first = outcome_covariates(&members[0], x2);
    members[1..]
        .iter()
        .all(|y| (outcome_covariates(y, x2) - &first).amax() <= CONSTANT_INDEX_TOL * scale)
}

/// Null-space moment functions of one level at `theta`, one per canonical
/// basis vector of the complement of the weight row.
pub fn level_moments(
    key: &[i64],
    members: &[Vec<u8>],
    x2: &DMatrix<f64>,
    theta: &DVector<f64>,
) -> Result<Vec<MomentFunction>> {
    if members.len() < 2 {
        return Ok(Vec::new());
    }
    let idx: Vec<f64> = members.iter().map(|y| outcome_index(y, x2, theta)).collect();
    if idx.iter().any(|i| !i.is_finite()) {
        return Err(Error::NonFinite);
    }
    // The weights are all positive, so the reduced row-echelon basis of their
    // orthogonal complement pivots on every member but the last:
    // row j is e_j - (w_j / w_last) e_last.
    let last = members.len() - 1;
    let basis = DMatrix::from_fn(last, members.len(), |j, c| {
        if c == j {
            1.0
        } else if c == last {
            -(idx[j] - idx[last]).exp()
        } else {
            0.0
        }
    });
    if basis.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite);
    }
    let informative = !index_is_constant(members, x2);
    let scale = basis.amax().max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(basis.nrows());
    for b in basis.row_iter() {
        let (support, coeffs): (Vec<Vec<u8>>, Vec<f64>) = b
            .iter()
            .zip(members)
            .filter(|(c, _)| c.abs() > 1e-14 * scale)
            .map(|(c, y)| (y.clone(), *c))
            .unzip();
        out.push(MomentFunction {
            level_key: key.to_vec(),
            support,
            coeffs,
            theta_at: theta.iter().cloned().collect(),
            closed_form: None,
            informative,
        });
    }
    Ok(out)
}

/// Every moment function on every level of size at least two.
pub fn discover_moments(dm: &DesignMatrices, theta: &DVector<f64>, cap: usize) -> Result<Vec<MomentFunction>> {
    if theta.len() != dm.k() {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, x2 has {} columns", theta.len(), dm.k())));
    }
    let levels = sufficient_levels(&dm.x1_integer()?, cap)?;
    let mut out = Vec::new();
    for (key, members) in levels.iter() {
        out.extend(level_moments(key, &members, &dm.x2, theta)?);
    }
    Ok(out)
}

/// Whether any level with two or more members has a varying `y'x2`, which is
/// what a restriction needs in order to carry information about `theta`.
pub fn is_informative(dm: &DesignMatrices, cap: usize) -> Result<bool> {
    let levels = sufficient_levels(&dm.x1_integer()?, cap)?;
    let informative = levels.iter().any(|(_, members)| !index_is_constant(&members, &dm.x2));
    Ok(informative)
}

/// Anything that can be evaluated at a binary outcome vector.
pub trait OutcomeFunction {
    fn value(&self, y: &[u8]) -> f64;

    /// Known finite support, if any, to avoid a full enumeration.
    fn sparse_support(&self) -> Option<Vec<(&[u8], f64)>> {
        None
    }
}

impl OutcomeFunction for MomentFunction {
    fn value(&self, y: &[u8]) -> f64 {
        MomentFunction::value(self, y)
    }

    fn sparse_support(&self) -> Option<Vec<(&[u8], f64)>> {
        Some(self.support.iter().map(Vec::as_slice).zip(self.coeffs.iter().cloned()).collect())
    }
}

impl<F: Fn(&[u8]) -> f64> OutcomeFunction for F {
    fn value(&self, y: &[u8]) -> f64 {
        self(y)
    }
}

fn log_probability(y: &[u8], eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| if yi == 1 { -softplus(-e) } else { -softplus(e) })
        .sum()
}

/// Exact `E[phi(Y) | a, x]` by summing over `{0,1}^n`.
pub fn brute_force_expectation(
    phi: &dyn OutcomeFunction,
    dm: &DesignMatrices,
    a: &DVector<f64>,
    theta: &DVector<f64>,
    cap: usize,
) -> Result<f64> {
    let n = dm.n();
    check_cap(n, cap)?;
    let eta = linear_index(dm, a, theta)?;
    if let Some(support) = phi.sparse_support() {
        return Ok(support
            .iter()
            .map(|(y, c)| if *c == 0.0 { 0.0 } else { c * log_probability(y, &eta).exp() })
            .sum());
    }
    let mut total = 0.0;
    for mask in 0..(1u64 << n) {
        let y = decode(mask, n);
        let v = phi.value(&y);
        if v != 0.0 {
            total += v * log_probability(&y, &eta).exp();
        }
    }
    Ok(total)
}

/// Every outcome of `{0,1}^n` with its probability, in lexicographic order.
pub fn outcome_distribution(dm: &DesignMatrices, a: &DVector<f64>, theta: &DVector<f64>, cap: usize) -> Result<Vec<(Vec<u8>, f64)>> {
    let n = dm.n();
    check_cap(n, cap)?;
    let eta = linear_index(dm, a, theta)?;
    Ok((0..(1u64 << n))
        .map(|mask| {
            let y = decode(mask, n);
            let p = log_probability(&y, &eta).exp();
            (y, p)
        })
        .collect())
}

/// Squared norm of the residual after projecting `target` (a function on
/// `support`) onto the span of `basis` restricted to the same points.
pub fn span_residual(target: &MomentFunction, basis: &[MomentFunction]) -> f64 {
    let mut points: Vec<&Vec<u8>> = target.support.iter().chain(basis.iter().flat_map(|b| b.support.iter())).collect();
    points.sort();
    points.dedup();
    let t = DVector::from_iterator(points.len(), points.iter().map(|y| target.value(y)));
    if basis.is_empty() {
        return t.norm();
    }
    let b = DMatrix::from_fn(points.len(), basis.len(), |r, c| basis[c].value(points[r]));
    match crate::linalg::least_squares(&b, &t, DEFAULT_TOL) {
        Ok((_, res)) => res / t.norm().max(f64::MIN_POSITIVE),
        Err(_) => f64::INFINITY,
    }
}

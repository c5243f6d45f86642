use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{connected_components, ComponentLabels, NetworkData};
use crate::error::{Error, Result};
use crate::linalg::{Decomposition, ProjectorPair, DEFAULT_TOL};

/// Which sides of the network carry heterogeneity columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Effects {
    #[default]
    WorkerAndFirm,
    Worker,
    Firm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Keep every indicator column; `x1` is rank deficient whenever both
    /// sides are present.
    None,
    /// Drop the highest-indexed firm column in every connected component.
    #[default]
    DropLastFirmPerComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DesignOptions {
    pub effects: Effects,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ColumnRole {
    Worker(usize),
    Firm(usize),
    Other(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NormalizationRecord {
    pub rule: Normalization,
    /// Dense firm indices whose columns were dropped, one per component.
    pub dropped_firms: Vec<usize>,
}

/// Outcome, heterogeneity design `x1`, covariates `x2`, and the cached SVD of `x1`.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    pub y: DVector<f64>,
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub rank1: usize,
    pub normalization: NormalizationRecord,
    pub columns: Vec<ColumnRole>,
    components: Option<ComponentLabels>,
    decomposition: Decomposition,
    pinv: OnceLock<DMatrix<f64>>,
    pinv_gram: OnceLock<DMatrix<f64>>,
}

impl DesignMatrices {
    /// Wraps explicit matrices. Columns of `x1` are tagged [`ColumnRole::Other`].
    pub fn from_parts(y: DVector<f64>, x1: DMatrix<f64>, x2: DMatrix<f64>) -> Result<Self> {
        let columns = (0..x1.ncols()).map(ColumnRole::Other).collect();
        Self::assemble(
            y,
            x1,
            x2,
            columns,
            NormalizationRecord {
                rule: Normalization::None,
                dropped_firms: Vec::new(),
            },
            None,
        )
    }

    fn assemble(
        y: DVector<f64>,
        x1: DMatrix<f64>,
        x2: DMatrix<f64>,
        columns: Vec<ColumnRole>,
        normalization: NormalizationRecord,
        components: Option<ComponentLabels>,
    ) -> Result<Self> {
        if x1.nrows() != y.len() || x2.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} rows, x1 has {}, x2 has {}",
                y.len(),
                x1.nrows(),
                x2.nrows()
            )));
        }
        if y.iter().chain(x2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let decomposition = Decomposition::new(&x1, DEFAULT_TOL)?;
        Ok(Self {
            rank1: decomposition.rank(),
            y,
            x1,
            x2,
            normalization,
            columns,
            components,
            decomposition,
            pinv: OnceLock::new(),
            pinv_gram: OnceLock::new(),
        })
    }

    /// Same design with a different outcome vector; reuses the factorization.
    pub fn with_outcome(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("expected {} outcomes, got {}", self.n(), y.len())));
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of heterogeneity columns.
    pub fn m(&self) -> usize {
        self.x1.ncols()
    }

    /// Number of covariates.
    pub fn k(&self) -> usize {
        self.x2.ncols()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank1 == self.m()
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    /// `x1†`, computed once.
    pub fn pinv(&self) -> &DMatrix<f64> {
        self.pinv.get_or_init(|| self.decomposition.pinv())
    }

    /// `x1† (x1†)'` (m x m), computed once. `Trace(Q G)` is the bias of a
    /// plug-in quadratic form per unit of noise variance.
    pub fn pinv_gram(&self) -> &DMatrix<f64> {
        self.pinv_gram.get_or_init(|| self.decomposition.pinv_gram())
    }

    /// Residual degrees of freedom `Trace(I - x1 x1†)`.
    pub fn n2(&self) -> Result<usize> {
        self.decomposition.residual_dim()
    }

    pub fn projectors(&self) -> Result<ProjectorPair> {
        self.decomposition.projectors()
    }

    pub fn components(&self) -> Option<&ComponentLabels> {
        self.components.as_ref()
    }

    /// `x1` as an integer matrix, for sufficient-statistic enumeration.
    pub fn x1_integer(&self) -> Result<DMatrix<i64>> {
        if self.x1.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::InvalidParameter("x1 has non-integer entries".into()));
        }
        Ok(self.x1.map(|v| v as i64))
    }

    fn role_mask(&self, keep: impl Fn(&ColumnRole) -> bool) -> DMatrix<f64> {
        let mut out = self.x1.clone();
        for (c, role) in self.columns.iter().enumerate() {
            if !keep(role) {
                out.column_mut(c).fill(0.0);
            }
        }
        out
    }

    /// Rows pick each edge's worker effect (`x1` with non-worker columns zeroed).
    pub fn worker_selector(&self) -> DMatrix<f64> {
        self.role_mask(|r| matches!(r, ColumnRole::Worker(_)))
    }

    /// Rows pick each edge's firm effect; edges at a dropped firm get a zero row.
    pub fn firm_selector(&self) -> DMatrix<f64> {
        self.role_mask(|r| matches!(r, ColumnRole::Firm(_)))
    }

    /// Maps full worker and firm effects to the coefficient vector of this
    /// design, so that `x1 a` is unchanged by the normalization.
    pub fn normalized_effects(&self, worker_effects: &[f64], firm_effects: &[f64]) -> Result<DVector<f64>> {
        let mut shift_of_component = std::collections::HashMap::new();
        if let Some(labels) = &self.components {
            for &f in &self.normalization.dropped_firms {
                let psi = *firm_effects
                    .get(f)
                    .ok_or_else(|| Error::DimensionMismatch("firm effects too short".into()))?;
                shift_of_component.insert(labels.firms[f], psi);
            }
        }
        let labels = self.components.as_ref();
        let shift = |comp: Option<usize>| comp.and_then(|c| shift_of_component.get(&c)).copied().unwrap_or(0.0);
        let mut a = DVector::zeros(self.m());
        for (c, role) in self.columns.iter().enumerate() {
            a[c] = match *role {
                ColumnRole::Worker(w) => {
                    let alpha = *worker_effects
                        .get(w)
                        .ok_or_else(|| Error::DimensionMismatch("worker effects too short".into()))?;
                    alpha + shift(labels.map(|l| l.workers[w]))
                }
                ColumnRole::Firm(f) => {
                    let psi = *firm_effects
                        .get(f)
                        .ok_or_else(|| Error::DimensionMismatch("firm effects too short".into()))?;
                    psi - shift(labels.map(|l| l.firms[f]))
                }
                ColumnRole::Other(_) => {
                    return Err(Error::InvalidParameter(
                        "design columns are not tagged with worker/firm roles".into(),
                    ))
                }
            };
        }
        Ok(a)
    }
}

/// Builds `y`, worker-then-firm indicator columns `x1`, and covariates `x2`.
pub fn build_design(net: &NetworkData, options: DesignOptions) -> Result<DesignMatrices> {
    let labels = connected_components(net);
    let use_workers = options.effects != Effects::Firm;
    let use_firms = options.effects != Effects::Worker;
    let normalize = use_workers && use_firms && options.normalization == Normalization::DropLastFirmPerComponent;

    let mut dropped = vec![false; net.n_firms];
    let mut dropped_firms = Vec::new();
    if normalize {
        let mut last_firm: Vec<Option<usize>> = vec![None; labels.n_components];
        for (f, &l) in labels.firms.iter().enumerate() {
            last_firm[l] = Some(f);
        }
        for f in last_firm.into_iter().flatten() {
            dropped[f] = true;
            dropped_firms.push(f);
        }
        dropped_firms.sort_unstable();
    }

    let mut columns = Vec::new();
    let mut worker_col = vec![None; net.n_workers];
    let mut firm_col = vec![None; net.n_firms];
    if use_workers {
        for (w, slot) in worker_col.iter_mut().enumerate() {
            *slot = Some(columns.len());
            columns.push(ColumnRole::Worker(w));
        }
    }
    if use_firms {
        for (f, slot) in firm_col.iter_mut().enumerate() {
            if !dropped[f] {
                *slot = Some(columns.len());
                columns.push(ColumnRole::Firm(f));
            }
        }
    }

    let n = net.n_edges();
    let mut x1 = DMatrix::zeros(n, columns.len());
    let mut x2 = DMatrix::zeros(n, net.n_covariates);
    let mut y = DVector::zeros(n);
    for (i, e) in net.edges.iter().enumerate() {
        if let Some(c) = worker_col[e.worker] {
            x1[(i, c)] = 1.0;
        }
        if let Some(c) = firm_col[e.firm] {
            x1[(i, c)] = 1.0;
        }
        for (j, &v) in e.x.iter().enumerate() {
            x2[(i, j)] = v;
        }
        y[i] = e.y;
    }
    let record = NormalizationRecord {
        rule: if normalize { Normalization::DropLastFirmPerComponent } else { Normalization::None },
        dropped_firms,
    };
    let dm = DesignMatrices::assemble(y, x1, x2, columns, record, Some(labels))?;
    let promised_full_rank = normalize || options.effects != Effects::WorkerAndFirm;
    if promised_full_rank && !dm.is_full_rank() {
        return Err(Error::RankDeficient {
            rank: dm.rank1,
            columns: dm.m(),
        });
    }
    Ok(dm)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    /// Rank by exact Gaussian elimination over the rationals (entries are small integers).
    fn elimination_rank(a: &DMatrix<f64>) -> usize {
        let mut m: Vec<Vec<f64>> = (0..a.nrows()).map(|r| a.row(r).iter().copied().collect()).collect();
        let (rows, cols) = (a.nrows(), a.ncols());
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..rows).find(|&r| m[r][c] != 0.0) else { continue };
            m.swap(rank, p);
            for r in 0..rows {
                if r != rank && m[r][c] != 0.0 {
                    let f = m[r][c] / m[rank][c];
                    let pivot = m[rank].clone();
                    for (dst, src) in m[r].iter_mut().zip(&pivot) {
                        *dst -= f * src;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn figure_one_unnormalized_has_rank_seven() {
        let net = figure_one();
        let dm = build_design(
            &net,
            DesignOptions {
                effects: Effects::WorkerAndFirm,
                normalization: Normalization::None,
            },
        )
        .unwrap();
        assert_eq!(dm.x1.shape(), (7, 8));
        assert_eq!(elimination_rank(&dm.x1), 7);
        assert_eq!(dm.rank1, 7);
        for r in 0..7 {
            assert_eq!(dm.x1.row(r).iter().filter(|&&v| v == 1.0).count(), 2);
        }
    }

    #[test]
    fn figure_one_drop_last_firm_is_full_rank() {
        let dm = build_design(&figure_one(), DesignOptions::default()).unwrap();
        assert_eq!(dm.x1.shape(), (7, 7));
        assert_eq!(elimination_rank(&dm.x1), 7);
        assert!(dm.is_full_rank());
        assert_eq!(dm.normalization.dropped_firms, vec![2]);
        assert_eq!(dm.n2().unwrap(), 0);
    }

    #[test]
    fn single_edge_drop_firm() {
        let net = NetworkData::from_edges(vec![edge(0, 0, 0)], 0).unwrap();
        let dm = build_design(&net, DesignOptions::default()).unwrap();
        assert_eq!(dm.x1, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn normalization_drops_one_firm_per_component() {
        let net = NetworkData::from_edges(
            vec![edge(0, 0, 0), edge(0, 1, 1), edge(1, 2, 0), edge(1, 3, 1), edge(2, 3, 0)],
            0,
        )
        .unwrap();
        let dm = build_design(&net, DesignOptions::default()).unwrap();
        assert_eq!(dm.normalization.dropped_firms, vec![1, 3]);
        assert_eq!(dm.rank1, dm.m());
    }

    #[test]
    fn normalized_effects_preserve_fitted_values() {
        let net = figure_one();
        let dm = build_design(&net, DesignOptions::default()).unwrap();
        let full = build_design(
            &net,
            DesignOptions {
                effects: Effects::WorkerAndFirm,
                normalization: Normalization::None,
            },
        )
        .unwrap();
        let alpha = [0.3, -1.2, 0.7, 2.0, -0.4];
        let psi = [0.9, -0.6, 1.4];
        let a = dm.normalized_effects(&alpha, &psi).unwrap();
        let a_full = full.normalized_effects(&alpha, &psi).unwrap();
        assert!((&dm.x1 * a - &full.x1 * a_full).amax() < 1e-14);
    }

    #[test]
    fn drop_rule_always_full_rank_on_random_networks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let nw = rng.gen_range(1..8);
            let nf = rng.gen_range(1..6);
            let mut edges = Vec::new();
            for w in 0..nw {
                for p in 0..rng.gen_range(1..4) {
                    edges.push(edge(w, rng.gen_range(0..nf), p));
                }
            }
            let net = NetworkData::from_edges(edges, 0).unwrap();
            let dm = build_design(&net, DesignOptions::default()).unwrap();
            assert_eq!(dm.rank1, dm.m());
        }
    }
}

//! Edge-list network data, heterogeneity designs, and subnetwork patterns.

mod design;
mod io;
mod patterns;

pub use design::{build_design, ColumnRole, DesignMatrices, DesignOptions, Effects, Normalization, NormalizationRecord};
pub use io::{load_edge_list, write_edge_list, CsvSchema};
pub use patterns::{find_patterns, pattern_block, patterns_json, PatternKind, SubnetworkPattern};

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// One worker-period observation: the worker is employed at `firm` in `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub worker: usize,
    pub firm: usize,
    pub period: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Original identifiers behind the dense indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdTable {
    pub workers: Vec<i64>,
    pub firms: Vec<i64>,
    pub periods: Vec<i64>,
    pub covariate_names: Vec<String>,
}

/// A bipartite worker-firm multigraph with one outcome per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkData {
    pub edges: Vec<Edge>,
    pub n_workers: usize,
    pub n_firms: usize,
    pub n_periods: usize,
    pub n_covariates: usize,
    pub ids: IdTable,
}

/// An edge keyed by original ids, as read from a file or produced by a simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub worker: i64,
    pub firm: i64,
    pub period: i64,
    pub y: f64,
    pub x: Vec<f64>,
    /// Source row (1-based line number) used in error messages.
    pub row: usize,
}

fn dense_index(ids: impl Iterator<Item = i64>) -> (Vec<i64>, HashMap<i64, usize>) {
    let sorted: Vec<i64> = ids.collect::<BTreeSet<_>>().into_iter().collect();
    let map = sorted.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    (sorted, map)
}

impl NetworkData {
    /// Re-indexes original ids densely (ascending order of original id) and
    /// checks the one-job-per-worker-period invariant.
    pub fn from_raw(raw: Vec<RawEdge>, covariate_names: Vec<String>) -> Result<Self> {
        let k = covariate_names.len();
        let mut seen = HashMap::new();
        for e in &raw {
            if e.x.len() != k {
                return Err(Error::MalformedRow {
                    row: e.row,
                    message: format!("expected {} covariates, found {}", k, e.x.len()),
                });
            }
            if seen.insert((e.worker, e.period), e.row).is_some() {
                return Err(Error::DuplicateWorkerPeriod {
                    row: e.row,
                    worker: e.worker.to_string(),
                    period: e.period.to_string(),
                });
            }
        }
        let (workers, wmap) = dense_index(raw.iter().map(|e| e.worker));
        let (firms, fmap) = dense_index(raw.iter().map(|e| e.firm));
        let (periods, pmap) = dense_index(raw.iter().map(|e| e.period));
        let edges = raw
            .into_iter()
            .map(|e| Edge {
                worker: wmap[&e.worker],
                firm: fmap[&e.firm],
                period: pmap[&e.period],
                y: e.y,
                x: e.x,
            })
            .collect();
        Ok(Self {
            edges,
            n_workers: workers.len(),
            n_firms: firms.len(),
            n_periods: periods.len(),
            n_covariates: k,
            ids: IdTable {
                workers,
                firms,
                periods,
                covariate_names,
            },
        })
    }

    /// Builds data from already-dense edges; original ids equal the dense ones.
    pub fn from_edges(edges: Vec<Edge>, n_covariates: usize) -> Result<Self> {
        let raw = edges
            .into_iter()
            .enumerate()
            .map(|(i, e)| RawEdge {
                worker: e.worker as i64,
                firm: e.firm as i64,
                period: e.period as i64,
                y: e.y,
                x: e.x,
                row: i + 2,
            })
            .collect();
        let names = (1..=n_covariates).map(|i| format!("x{i}")).collect();
        Self::from_raw(raw, names)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Keeps only the edges whose nodes belong to the largest connected
    /// component (ties broken by smallest label) and re-indexes.
    ///
    /// Returns the restricted data together with, for each kept dense worker
    /// and firm, its index in `self`.
    pub fn largest_component(&self) -> (NetworkData, Vec<usize>, Vec<usize>) {
        let labels = connected_components(self);
        let mut sizes = vec![0usize; labels.n_components];
        for &l in labels.workers.iter().chain(labels.firms.iter()) {
            sizes[l] += 1;
        }
        let best = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)));
        let Some(best) = best else {
            return (self.clone(), Vec::new(), Vec::new());
        };
        let worker_keep: Vec<usize> = (0..self.n_workers).filter(|&w| labels.workers[w] == best).collect();
        let firm_keep: Vec<usize> = (0..self.n_firms).filter(|&f| labels.firms[f] == best).collect();
        let raw = self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| labels.workers[e.worker] == best)
            .map(|(i, e)| RawEdge {
                worker: self.ids.workers[e.worker],
                firm: self.ids.firms[e.firm],
                period: self.ids.periods[e.period],
                y: e.y,
                x: e.x.clone(),
                row: i + 2,
            })
            .collect();
        let sub = NetworkData::from_raw(raw, self.ids.covariate_names.clone())
            .expect("subset of valid data is valid");
        (sub, worker_keep, firm_keep)
    }
}

/// Component label per node; labels are numbered by each component's smallest
/// node id, where workers precede firms in node numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    pub workers: Vec<usize>,
    pub firms: Vec<usize>,
    pub n_components: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

pub fn connected_components(net: &NetworkData) -> ComponentLabels {
    let nw = net.n_workers;
    let mut dsu = DisjointSet::new(nw + net.n_firms);
    for e in &net.edges {
        dsu.union(e.worker, nw + e.firm);
    }
    let total = nw + net.n_firms;
    let mut label_of_root = HashMap::new();
    let mut labels = Vec::with_capacity(total);
    for node in 0..total {
        let root = dsu.find(node);
        let next = label_of_root.len();
        labels.push(*label_of_root.entry(root).or_insert(next));
    }
    let firms = labels.split_off(nw);
    ComponentLabels {
        workers: labels,
        firms,
        n_components: label_of_root.len(),
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn reachability_oracle(net: &NetworkData) -> Vec<Vec<bool>> {
        let total = net.n_workers + net.n_firms;
        let mut reach = vec![vec![false; total]; total];
        for (i, row) in reach.iter_mut().enumerate() {
            row[i] = true;
        }
        for e in &net.edges {
            let (a, b) = (e.worker, net.n_workers + e.firm);
            reach[a][b] = true;
            reach[b][a] = true;
        }
        // Floyd-Warshall closure.
        for k in 0..total {
            for i in 0..total {
                for j in 0..total {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        reach
    }

    #[test]
    fn figure_one_is_connected() {
        let net = figure_one();
        let labels = connected_components(&net);
        assert_eq!(labels.n_components, 1);
        assert!(labels.workers.iter().chain(&labels.firms).all(|&l| l == 0));
    }

    #[test]
    fn disjoint_pairs_form_two_components() {
        let net = NetworkData::from_edges(vec![edge(0, 0, 0), edge(1, 1, 0)], 0).unwrap();
        let labels = connected_components(&net);
        assert_eq!(labels.n_components, 2);
        assert_eq!(labels.workers, vec![0, 1]);
        assert_eq!(labels.firms, vec![0, 1]);
    }

    #[test]
    fn single_edge_component() {
        let net = NetworkData::from_edges(vec![edge(0, 0, 0)], 0).unwrap();
        let labels = connected_components(&net);
        assert_eq!(labels.n_components, 1);
        assert_eq!(labels.workers.len() + labels.firms.len(), 2);
    }

    #[test]
    fn components_match_reachability_on_small_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let nw = rng.gen_range(1..=6);
            let nf = rng.gen_range(1..=6);
            let mut edges = Vec::new();
            for w in 0..nw {
                let periods = rng.gen_range(1..=3);
                for p in 0..periods {
                    edges.push(edge(w, rng.gen_range(0..nf), p));
                }
            }
            let net = NetworkData::from_edges(edges, 0).unwrap();
            let labels = connected_components(&net);
            let reach = reachability_oracle(&net);
            let all: Vec<usize> = labels.workers.iter().chain(&labels.firms).copied().collect();
            for i in 0..all.len() {
                for j in 0..all.len() {
                    assert_eq!(all[i] == all[j], reach[i][j]);
                }
            }
            // Labels appear in order of smallest member id.
            let mut next = 0;
            for &l in &all {
                assert!(l <= next);
                if l == next {
                    next += 1;
                }
            }
        }
    }

    #[test]
    fn largest_component_keeps_biggest_piece() {
        let net = NetworkData::from_edges(
            vec![edge(0, 0, 0), edge(1, 1, 0), edge(1, 2, 1), edge(2, 2, 0)],
            0,
        )
        .unwrap();
        let (sub, wk, fk) = net.largest_component();
        assert_eq!(sub.n_edges(), 3);
        assert_eq!(wk, vec![1, 2]);
        assert_eq!(fk, vec![1, 2]);
    }
}

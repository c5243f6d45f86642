use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use super::{DesignMatrices, NetworkData};
use crate::error::{Error, Result};

/// Two-period worker-firm configurations, plus four-agent tetrads for
/// undirected link data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PatternKind {
    /// One worker in the same firm in both periods.
    ConfigA,
    /// One worker moving between two firms.
    ConfigB,
    /// Two movers between the same two firms.
    ConfigC,
    /// Two movers with no firm in common.
    ConfigD,
    /// Two movers sharing exactly one firm.
    ConfigE,
    /// Three movers whose firm pairs close a loop over three firms.
    ConfigF,
    Tetrad,
}

impl PatternKind {
    pub const CONFIGS: [PatternKind; 6] = [
        PatternKind::ConfigA,
        PatternKind::ConfigB,
        PatternKind::ConfigC,
        PatternKind::ConfigD,
        PatternKind::ConfigE,
        PatternKind::ConfigF,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let key = lower.strip_prefix("config").unwrap_or(&lower).trim_start_matches(['-', '_']);
        Some(match key {
            "a" => Self::ConfigA,
            "b" => Self::ConfigB,
            "c" => Self::ConfigC,
            "d" => Self::ConfigD,
            "e" => Self::ConfigE,
            "f" => Self::ConfigF,
            "tetrad" => Self::Tetrad,
            _ => return None,
        })
    }
}

/// A matched subnetwork, as an ordered list of edge indices.
///
/// Edge order is canonical per kind:
/// * A, B, D, E: each worker's period-0 edge then period-1 edge, workers ascending.
/// * C: `(i at j, i at j', i' at j, i' at j')` where `j -> j'` is worker `i`'s move.
///   For two workers moving in the same direction this is the time order.
/// * F: `(i at j, i at j', i' at j', i' at j'', i'' at j'', i'' at j)` around the loop.
/// * Tetrad: dyads `(ij, ik, il, jk, jl, kl)` for agents `i < j < k < l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubnetworkPattern {
    pub kind: PatternKind,
    pub member_edges: Vec<usize>,
}

impl Serialize for SubnetworkPattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.member_edges.serialize(s)
    }
}

/// `{"kind": ..., "patterns": [[edge, ...], ...]}`.
pub fn patterns_json(kind: PatternKind, patterns: &[SubnetworkPattern]) -> serde_json::Value {
    serde_json::json!({ "kind": kind, "patterns": patterns })
}

#[derive(Debug, Clone, Copy)]
struct Spell {
    edges: [usize; 2],
    firms: [usize; 2],
}

impl Spell {
    fn is_mover(&self) -> bool {
        self.firms[0] != self.firms[1]
    }

    fn has(&self, firm: usize) -> bool {
        self.firms.contains(&firm)
    }

    fn edge_at(&self, firm: usize) -> usize {
        if self.firms[0] == firm {
            self.edges[0]
        } else {
            self.edges[1]
        }
    }

    fn shared(&self, other: &Spell) -> usize {
        self.firms.iter().filter(|f| other.has(**f)).count()
    }
}

fn two_period_spells(net: &NetworkData) -> Vec<Spell> {
    let mut slots: Vec<[Option<usize>; 2]> = vec![[None, None]; net.n_workers];
    for (i, e) in net.edges.iter().enumerate() {
        slots[e.worker][e.period] = Some(i);
    }
    slots
        .iter()
        .filter_map(|s| match s {
            [Some(a), Some(b)] => Some(Spell {
                edges: [*a, *b],
                firms: [net.edges[*a].firm, net.edges[*b].firm],
            }),
            _ => None,
        })
        .collect()
}

/// Exhaustive, deduplicated search for one pattern kind.
pub fn find_patterns(net: &NetworkData, kind: PatternKind) -> Result<Vec<SubnetworkPattern>> {
    if kind == PatternKind::Tetrad {
        return Ok(find_tetrads(net));
    }
    if net.n_edges() > 0 && net.n_periods != 2 {
        return Err(Error::PatternRequiresTwoPeriods(net.n_periods));
    }
    let spells = two_period_spells(net);
    let movers: Vec<&Spell> = spells.iter().filter(|s| s.is_mover()).collect();
    let pattern = |edges: Vec<usize>| SubnetworkPattern {
        kind,
        member_edges: edges,
    };
    let mut out = Vec::new();
    match kind {
        PatternKind::ConfigA => out.extend(spells.iter().filter(|s| !s.is_mover()).map(|s| pattern(s.edges.to_vec()))),
        PatternKind::ConfigB => out.extend(movers.iter().map(|s| pattern(s.edges.to_vec()))),
        PatternKind::ConfigC | PatternKind::ConfigD | PatternKind::ConfigE => {
            let wanted = match kind {
                PatternKind::ConfigC => 2,
                PatternKind::ConfigE => 1,
                _ => 0,
            };
            for (a, s) in movers.iter().enumerate() {
                for t in &movers[a + 1..] {
                    if s.shared(t) != wanted {
                        continue;
                    }
                    let edges = if kind == PatternKind::ConfigC {
                        vec![s.edges[0], s.edges[1], t.edge_at(s.firms[0]), t.edge_at(s.firms[1])]
                    } else {
                        vec![s.edges[0], s.edges[1], t.edges[0], t.edges[1]]
                    };
                    out.push(pattern(edges));
                }
            }
        }
        PatternKind::ConfigF => {
            for (a, s) in movers.iter().enumerate() {
                for (b, t) in movers.iter().enumerate().skip(a + 1) {
                    if s.shared(t) != 1 {
                        continue;
                    }
                    for u in &movers[b + 1..] {
                        if s.shared(u) != 1 || t.shared(u) != 1 {
                            continue;
                        }
                        // Three distinct firms, each held by exactly two of the workers.
                        let mut firms: Vec<usize> = s.firms.iter().chain(&t.firms).chain(&u.firms).copied().collect();
                        firms.sort_unstable();
                        firms.dedup();
                        if firms.len() != 3 {
                            continue;
                        }
                        let (j, jp) = (s.firms[0], s.firms[1]);
                        let (second, third) = if t.has(jp) { (t, u) } else { (u, t) };
                        let jpp = if second.firms[0] == jp { second.firms[1] } else { second.firms[0] };
                        if !third.has(jpp) || !third.has(j) {
                            continue;
                        }
                        out.push(pattern(vec![
                            s.edges[0],
                            s.edges[1],
                            second.edge_at(jp),
                            second.edge_at(jpp),
                            third.edge_at(jpp),
                            third.edge_at(j),
                        ]));
                    }
                }
            }
        }
        PatternKind::Tetrad => unreachable!(),
    }
    Ok(out)
}

/// Treats each edge as an undirected dyad between the agents named by its
/// original worker and firm ids, and returns all complete 4-agent tetrads.
fn find_tetrads(net: &NetworkData) -> Vec<SubnetworkPattern> {
    let mut dyad = HashMap::new();
    let mut agents = std::collections::BTreeSet::new();
    for (i, e) in net.edges.iter().enumerate() {
        let (a, b) = (net.ids.workers[e.worker], net.ids.firms[e.firm]);
        if a == b {
            continue;
        }
        agents.insert(a);
        agents.insert(b);
        dyad.entry((a.min(b), a.max(b))).or_insert(i);
    }
    let agents: Vec<i64> = agents.into_iter().collect();
    let get = |a: i64, b: i64| dyad.get(&(a.min(b), a.max(b))).copied();
    let mut out = Vec::new();
    let n = agents.len();
    for i in 0..n {
        for j in i + 1..n {
            let Some(ij) = get(agents[i], agents[j]) else { continue };
            for k in j + 1..n {
                let (Some(ik), Some(jk)) = (get(agents[i], agents[k]), get(agents[j], agents[k])) else {
                    continue;
                };
                for l in k + 1..n {
                    let ids = [
                        get(agents[i], agents[l]),
                        get(agents[j], agents[l]),
                        get(agents[k], agents[l]),
                    ];
                    if let [Some(il), Some(jl), Some(kl)] = ids {
                        out.push(SubnetworkPattern {
                            kind: PatternKind::Tetrad,
                            member_edges: vec![ij, ik, il, jk, jl, kl],
                        });
                    }
                }
            }
        }
    }
    out
}

/// Binary outcomes and a local design (`x1` without normalization, `x2` from
/// edge covariates) for one matched pattern.
pub fn pattern_block(net: &NetworkData, pattern: &SubnetworkPattern) -> Result<(Vec<u8>, DesignMatrices)> {
    let edges: Vec<&super::Edge> = pattern.member_edges.iter().map(|&i| &net.edges[i]).collect();
    let n = edges.len();
    let y: Vec<u8> = edges
        .iter()
        .zip(&pattern.member_edges)
        .map(|(e, &i)| match e.y {
            0.0 => Ok(0),
            1.0 => Ok(1),
            v => Err(Error::MalformedRow {
                row: i + 2,
                message: format!("logit outcome must be 0 or 1, found {v}"),
            }),
        })
        .collect::<Result<_>>()?;
    let x1 = if pattern.kind == PatternKind::Tetrad {
        let mut x1 = DMatrix::zeros(6, 4);
        for (row, (a, b)) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)].into_iter().enumerate() {
            x1[(row, a)] = 1.0;
            x1[(row, b)] = 1.0;
        }
        x1
    } else {
        let mut workers = Vec::new();
        let mut firms = Vec::new();
        for e in &edges {
            if !workers.contains(&e.worker) {
                workers.push(e.worker);
            }
            if !firms.contains(&e.firm) {
                firms.push(e.firm);
            }
        }
        let mut x1 = DMatrix::zeros(n, workers.len() + firms.len());
        for (r, e) in edges.iter().enumerate() {
            x1[(r, workers.iter().position(|&w| w == e.worker).unwrap())] = 1.0;
            x1[(r, workers.len() + firms.iter().position(|&f| f == e.firm).unwrap())] = 1.0;
        }
        x1
    };
    let x2 = DMatrix::from_fn(n, net.n_covariates, |r, c| edges[r].x[c]);
    let yv = DVector::from_iterator(n, y.iter().map(|&v| v as f64));
    Ok((y, DesignMatrices::from_parts(yv, x1, x2)?))
}

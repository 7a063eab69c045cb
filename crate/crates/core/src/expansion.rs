//! Personalized PageRank expansion of semantic-search seeds.
//!
//! The memory graph is treated as undirected: rank flows along and against
//! `HAS_PREVIOUS` and `HAS_ELEMENT`. Teleport mass goes uniformly to the
//! seeds, and so does the mass of isolated nodes, so nodes unreachable from
//! every seed end with a score of exactly zero.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::{MemoryGraph, NoteId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionParams {
    pub damping: f64,
    /// L1 change between iterations below which iteration stops.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Notes returned beyond the seeds.
    pub top_m: usize,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        Self { damping: 0.85, tolerance: 1e-8, max_iter: 100, top_m: 10 }
    }
}

impl ExpansionParams {
    pub fn validate(&self) -> Result<(), ExpansionError> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(ExpansionError::InvalidParams("damping must lie in (0, 1)"));
        }
        if !(self.tolerance > 0.0) {
            return Err(ExpansionError::InvalidParams("tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(ExpansionError::InvalidParams("max_iter must be positive"));
        }
        if self.top_m == 0 {
            return Err(ExpansionError::InvalidParams("top_m must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpansionError {
    #[error("seed set is empty")]
    EmptySeedSet,
    #[error("graph is empty")]
    EmptyGraph,
    #[error("seed `{0}` is not in the graph")]
    UnknownSeed(String),
    #[error("invalid expansion parameters: {0}")]
    InvalidParams(&'static str),
}

/// Undirected adjacency lists; parallel edges appear once per edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(node_count: usize) -> Self {
        Self { neighbors: vec![Vec::new(); node_count] }
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        self.neighbors[a].push(b);
        self.neighbors[b].push(a);
    }

    pub fn from_graph(graph: &MemoryGraph) -> Self {
        let mut adj = Self::new(graph.node_count());
        for e in graph.edges() {
            adj.add_edge(e.source, e.target);
        }
        adj
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankRun {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration of `r <- (1-d) p + d (W^T r + dangling(r) p)` where `p` is
/// uniform over `seeds` and `W` is the row-normalized adjacency.
pub fn pagerank_on(adj: &Adjacency, seeds: &[usize], params: &ExpansionParams) -> Result<PageRankRun, ExpansionError> {
    params.validate()?;
    let n = adj.node_count();
    if n == 0 {
        return Err(ExpansionError::EmptyGraph);
    }
    let seeds: BTreeSet<usize> = seeds.iter().copied().collect();
    if seeds.is_empty() {
        return Err(ExpansionError::EmptySeedSet);
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
        return Err(ExpansionError::UnknownSeed(bad.to_string()));
    }

    let mut teleport = vec![0.0; n];
    let share = 1.0 / seeds.len() as f64;
    for &s in &seeds {
        teleport[s] = share;
    }
    let d = params.damping;
    let mut rank = teleport.clone();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&i| adj.neighbors(i).is_empty()).map(|i| rank[i]).sum();
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = (1.0 - d + d * dangling) * teleport[i];
        }
        for (u, &r) in rank.iter().enumerate() {
            let nbrs = adj.neighbors(u);
            if nbrs.is_empty() || r == 0.0 {
                continue;
            }
            let flow = d * r / nbrs.len() as f64;
            for &v in nbrs {
                next[v] += flow;
            }
        }
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        core::mem::swap(&mut rank, &mut next);
        if delta < params.tolerance {
            converged = true;
            break;
        }
    }
    Ok(PageRankRun { scores: rank, iterations, converged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankScores {
    /// Score per node id, in graph insertion order.
    pub scores: Vec<(String, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl RankScores {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == id).map(|(_, s)| *s)
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().map(|(_, s)| s).sum()
    }
}

pub fn personalized_pagerank(
    graph: &MemoryGraph,
    seeds: &[&str],
    params: &ExpansionParams,
) -> Result<RankScores, ExpansionError> {
    if graph.is_empty() {
        return Err(ExpansionError::EmptyGraph);
    }
    if seeds.is_empty() {
        return Err(ExpansionError::EmptySeedSet);
    }
    let seed_idx = seeds
        .iter()
        .map(|s| graph.index_of(s).ok_or_else(|| ExpansionError::UnknownSeed(s.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let run = pagerank_on(&Adjacency::from_graph(graph), &seed_idx, params)?;
    Ok(RankScores {
        scores: graph.nodes().iter().map(|n| n.id().to_string()).zip(run.scores).collect(),
        iterations: run.iterations,
        converged: run.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedNote {
    pub note_id: NoteId,
    pub score: f64,
    pub is_seed: bool,
}

/// Seeds in their given order, then up to `top_m` further memory notes by
/// descending rank (ties by note id). Entity nodes carry rank but are never
/// returned, and zero-score notes are never returned.
pub fn expand(graph: &MemoryGraph, seeds: &[NoteId], params: &ExpansionParams) -> Result<Vec<ExpandedNote>, ExpansionError> {
    let mut unique: Vec<&str> = Vec::new();
    for s in seeds {
        if !unique.contains(&s.as_str()) {
            unique.push(s.as_str());
        }
    }
    let ranks = personalized_pagerank(graph, &unique, params)?;

    let mut out: Vec<ExpandedNote> = unique
        .iter()
        .map(|s| ExpandedNote { note_id: NoteId::new(*s).expect("seed ids are non-empty"), score: ranks.get(s).unwrap_or(0.0), is_seed: true })
        .collect();
    let mut rest: Vec<ExpandedNote> = graph
        .nodes()
        .iter()
        .zip(&ranks.scores)
        .filter_map(|(node, (_, score))| {
            let note = node.as_note()?;
            (*score > 0.0 && !unique.contains(&note.id.as_str()))
                .then(|| ExpandedNote { note_id: note.id.clone(), score: *score, is_seed: false })
        })
        .collect();
    rest.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.note_id.cmp(&b.note_id)));
    rest.truncate(params.top_m);
    out.extend(rest);
    Ok(out)
}

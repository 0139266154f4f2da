// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Per-layer navigable graphs and the searches that walk them.
//!
//! A [`NavGraph`] covers a subset of global point ids. Nodes are kept sorted
//! by global id, so a node's local index order agrees with the ascending-id
//! tie rule, and adjacency lists store local indices in ascending order.

mod delaunay;
mod dimred;
mod knn;
pub(crate) mod nsw;
mod recall_bound;
pub(crate) mod search;

use std::fmt;
use std::str::FromStr;

pub use delaunay::{triangulate, Triangulation};
pub use dimred::{build_dimred_dt, reduce_to_2d, Reducer};
pub use knn::build_knn_graph;
pub use nsw::build_nsw;
pub use recall_bound::{measure_recall_bound, RecallBoundEstimate};
pub use search::{beam_search, greedy_search, BeamResult, SearchResult};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Nsw,
    Knn,
    DimredDt,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Nsw => "nsw",
            GraphKind::Knn => "knn",
            GraphKind::DimredDt => "dimred",
        })
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nsw" => Ok(GraphKind::Nsw),
            "knn" => Ok(GraphKind::Knn),
            "dimred" | "dimred_dt" | "dt" => Ok(GraphKind::DimredDt),
            other => Err(Error::invalid(format!("unknown graph kind {other:?}"))),
        }
    }
}

/// Build parameters, one variant per graph kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphParams {
    Nsw {
        m: usize,
        ef_construction: usize,
        /// Neighbor-diversity pruning in the style of hnswlib; off by default.
        diversify: bool,
    },
    Knn {
        k: usize,
    },
    DimredDt {
        reducer: Reducer,
    },
}

impl GraphParams {
    pub fn nsw(m: usize, ef_construction: usize) -> Self {
        GraphParams::Nsw {
            m,
            ef_construction,
            diversify: false,
        }
    }

    pub fn kind(&self) -> GraphKind {
        match self {
            GraphParams::Nsw { .. } => GraphKind::Nsw,
            GraphParams::Knn { .. } => GraphKind::Knn,
            GraphParams::DimredDt { .. } => GraphKind::DimredDt,
        }
    }

    /// Degree cap for NSW graphs (`2M`).
    pub fn max_degree(&self) -> Option<usize> {
        match *self {
            GraphParams::Nsw { m, .. } => Some(2 * m),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GraphParams::Nsw { m, ef_construction, .. } => {
                if m < 1 {
                    return Err(Error::invalid("M must be >= 1"));
                }
                if ef_construction < m {
                    return Err(Error::invalid(format!(
                        "ef_construction ({ef_construction}) must be >= M ({m})"
                    )));
                }
            }
            GraphParams::Knn { k } => {
                if k < 1 {
                    return Err(Error::invalid("knn k must be >= 1"));
                }
            }
            GraphParams::DimredDt { .. } => {}
        }
        Ok(())
    }
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams::nsw(16, 100)
    }
}

/// Adjacency over a sorted set of global ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NavGraph {
    params: GraphParams,
    nodes: Vec<u32>,
    adj: Vec<Vec<u32>>,
}

impl NavGraph {
    /// Assembles a graph from raw parts, checking every structural invariant.
    pub fn from_parts(params: GraphParams, nodes: Vec<u32>, adj: Vec<Vec<u32>>) -> Result<Self> {
        let g = Self { params, nodes, adj };
        g.check_invariants().map_err(Error::invalid)?;
        Ok(g)
    }

    pub(crate) fn empty(params: GraphParams, nodes: Vec<u32>) -> Self {
        let adj = vec![Vec::new(); nodes.len()];
        Self { params, nodes, adj }
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    pub fn kind(&self) -> GraphKind {
        self.params.kind()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Global ids, ascending.
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    #[inline]
    pub fn global(&self, local: u32) -> u32 {
        self.nodes[local as usize]
    }

    #[inline]
    pub fn local_of(&self, global: u32) -> Option<u32> {
        self.nodes.binary_search(&global).ok().map(|i| i as u32)
    }

    pub fn contains(&self, global: u32) -> bool {
        self.local_of(global).is_some()
    }

    /// Out-neighbors as local indices, ascending.
    #[inline]
    pub fn neighbors(&self, local: u32) -> &[u32] {
        &self.adj[local as usize]
    }

    /// Out-neighbors as global ids.
    pub fn neighbor_ids(&self, global: u32) -> Option<Vec<u32>> {
        let local = self.local_of(global)?;
        Some(self.neighbors(local).iter().map(|&l| self.global(l)).collect())
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adj
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// Mean out-degree.
    pub fn average_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            0.0
        } else {
            self.edge_count() as f64 / self.nodes.len() as f64
        }
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Checks sortedness, bounds, self-loops, duplicates and degree caps.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.adj.len() != self.nodes.len() {
            return Err(format!(
                "{} adjacency lists for {} nodes",
                self.adj.len(),
                self.nodes.len()
            ));
        }
        if !self.nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err("node ids are not strictly ascending".into());
        }
        let n = self.nodes.len() as u32;
        let cap = self.params.max_degree();
        for (i, list) in self.adj.iter().enumerate() {
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("node {i}: neighbors unsorted or duplicated"));
            }
            if list.iter().any(|&v| v >= n) {
                return Err(format!("node {i}: neighbor out of range"));
            }
            if list.binary_search(&(i as u32)).is_ok() {
                return Err(format!("node {i}: self-loop"));
            }
            if let Some(cap) = cap {
                if list.len() > cap {
                    return Err(format!("node {i}: degree {} exceeds cap {cap}", list.len()));
                }
            }
        }
        Ok(())
    }

    /// True when every node is reachable from local node 0 along out-edges.
    pub fn is_connected_from_first(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.nodes.len()
    }

    pub(crate) fn add_edge(&mut self, from: u32, to: u32) -> bool {
        if from == to {
            return false;
        }
        let list = &mut self.adj[from as usize];
        match list.binary_search(&to) {
            Ok(_) => false,
            Err(pos) => {
                list.insert(pos, to);
                true
            }
        }
    }

    pub(crate) fn set_neighbors(&mut self, local: u32, mut list: Vec<u32>) {
        list.sort_unstable();
        list.dedup();
        list.retain(|&v| v != local);
        self.adj[local as usize] = list;
    }

    /// Appends a node whose global id exceeds every existing id.
    pub(crate) fn push_node(&mut self, global: u32) -> Result<u32> {
        if let Some(&last) = self.nodes.last() {
            if global <= last {
                return Err(Error::invalid(format!(
                    "new id {global} must exceed the largest id {last}"
                )));
            }
        }
        self.nodes.push(global);
        self.adj.push(Vec::new());
        Ok((self.nodes.len() - 1) as u32)
    }

    /// Removes a node and shifts the local indices above it down by one.
    /// Returns the removed node's former out- and in-neighbors (post-shift
    /// local indices).
    pub(crate) fn remove_node(&mut self, global: u32) -> Option<(Vec<u32>, Vec<u32>)> {
        let x = self.local_of(global)?;
        let out = self.adj.remove(x as usize);
        self.nodes.remove(x as usize);
        let shift = |v: u32| if v > x { v - 1 } else { v };
        let mut incoming = Vec::new();
        for (u, list) in self.adj.iter_mut().enumerate() {
            if let Ok(pos) = list.binary_search(&x) {
                list.remove(pos);
                incoming.push(u as u32);
            }
            for v in list.iter_mut() {
                *v = shift(*v);
            }
        }
        Some((out.into_iter().map(shift).collect(), incoming))
    }
}

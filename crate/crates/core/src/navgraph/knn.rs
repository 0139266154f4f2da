// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

use rayon::prelude::*;

use super::{GraphParams, NavGraph};
use crate::error::{Error, Result};
use crate::knn::brute_force_knn_in;
use crate::points::PointSet;

/// Exact directed k-NN graph; `k` is clamped to `|ids| - 1`.
pub fn build_knn_graph(ps: &PointSet, ids: &[u32], k: usize) -> Result<NavGraph> {
    if k < 1 {
        return Err(Error::invalid("knn k must be >= 1"));
    }
    if ids.is_empty() {
        return Err(Error::invalid("cannot build a graph over zero nodes"));
    }
    let mut nodes = ids.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let k_eff = k.min(nodes.len() - 1);
    let params = GraphParams::Knn { k };
    if k_eff == 0 {
        return Ok(NavGraph::empty(params, nodes));
    }
    let adj = nodes
        .par_iter()
        .map(|&id| {
            let row = brute_force_knn_in(ps, &nodes, ps.row(id), k_eff + 1)?;
            let mut list: Vec<u32> = row
                .iter()
                .filter(|nb| nb.id != id)
                .take(k_eff)
                .map(|nb| nodes.binary_search(&nb.id).unwrap() as u32)
                .collect();
            list.sort_unstable();
            Ok(list)
        })
        .collect::<Result<Vec<_>>>()?;
    NavGraph::from_parts(params, nodes, adj)
}

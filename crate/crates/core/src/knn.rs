// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Exact k-nearest-neighbor scans used as ground truth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::PointSet;

/// A candidate ordered by `(distance, id)`; the tie rule used everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f64,
}

impl Neighbor {
    pub fn new(id: u32, dist: f64) -> Self {
        Self { id, dist }
    }
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact neighbors of one query: ascending distance, ties by ascending id.
pub type GroundTruthRow = Vec<Neighbor>;

/// Full-scan k-NN over every row of `ps`.
pub fn brute_force_knn(ps: &PointSet, q: &[f32], k: usize) -> Result<GroundTruthRow> {
    let q = ps.prepare_query(q)?;
    let n = ps.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(top_k((0..n as u32).map(|id| Neighbor::new(id, ps.dist_to(id, &q))), k))
}

/// Full-scan k-NN restricted to `ids`. `q` must already be prepared.
pub fn brute_force_knn_in(ps: &PointSet, ids: &[u32], q: &[f32], k: usize) -> Result<GroundTruthRow> {
    if q.len() != ps.dim() {
        return Err(Error::DimensionMismatch {
            expected: ps.dim(),
            got: q.len(),
        });
    }
    if k == 0 || k > ids.len() {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", ids.len())));
    }
    Ok(top_k(ids.iter().map(|&id| Neighbor::new(id, ps.dist_to(id, q))), k))
}

/// Ground truth for many queries, computed in parallel.
pub fn ground_truth(ps: &PointSet, queries: &[Vec<f32>], k: usize) -> Result<Vec<GroundTruthRow>> {
    queries.par_iter().map(|q| brute_force_knn(ps, q, k)).collect()
}

fn top_k(items: impl Iterator<Item = Neighbor>, k: usize) -> Vec<Neighbor> {
    // max-heap of the best k seen so far
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for nb in items {
        if heap.len() < k {
            heap.push(nb);
        } else if let Some(top) = heap.peek() {
            if nb < *top {
                heap.pop();
                heap.push(nb);
            }
        }
    }
    heap.into_sorted_vec()
}

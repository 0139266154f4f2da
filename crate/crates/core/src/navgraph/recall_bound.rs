// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Empirical recall bound: how deep in the true neighbor ranking greedy
//! search lands from random starts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::search::greedy_local;
use super::NavGraph;
use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct RecallBoundEstimate {
    /// Max over queries of the per-query bound.
    pub rho: usize,
    pub delta: f64,
    pub n_starts: usize,
    /// Per query: the `ceil(delta * n_starts)`-th smallest rank.
    pub per_query: Vec<usize>,
    /// Per query, per start: rank of the landing node among layer nodes
    /// (1 + number strictly closer to the query).
    pub ranks: Vec<Vec<usize>>,
    /// Per query, per start: global id where greedy search stopped.
    pub landed: Vec<Vec<u32>>,
}

impl RecallBoundEstimate {
    /// Fraction of all (query, start) pairs that landed within the top `k`.
    pub fn average_hits(&self, k: usize) -> f64 {
        let total: usize = self.ranks.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = self.ranks.iter().flatten().filter(|&&r| r <= k).count();
        hits as f64 / total as f64
    }

    /// `average_hits(k)` for `k = 1..=max_k`.
    pub fn hits_curve(&self, max_k: usize) -> Vec<(usize, f64)> {
        (1..=max_k).map(|k| (k, self.average_hits(k))).collect()
    }

    /// Smallest `k` whose pooled hit fraction reaches `delta`.
    pub fn pooled_rho(&self) -> usize {
        let mut all: Vec<usize> = self.ranks.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.is_empty() {
            return 1;
        }
        all[kth_index(self.delta, all.len())]
    }
}

fn kth_index(delta: f64, len: usize) -> usize {
    ((delta * len as f64 - 1e-9).ceil() as usize).clamp(1, len) - 1
}

/// Runs greedy search from `n_starts` uniform random nodes per query and
/// ranks where it stops.
pub fn measure_recall_bound<R: Rng + ?Sized>(
    g: &NavGraph,
    ps: &PointSet,
    queries: &[Vec<f32>],
    delta: f64,
    n_starts: usize,
    rng: &mut R,
) -> Result<RecallBoundEstimate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0,1), got {delta}")));
    }
    if n_starts < 1 {
        return Err(Error::invalid("n_starts must be >= 1"));
    }
    if g.is_empty() {
        return Err(Error::invalid("recall bound needs a nonempty graph"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("recall bound needs at least one query"));
    }
    let seed: u64 = rng.random();
    let per: Vec<(Vec<usize>, Vec<u32>)> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, raw)| {
            let q = ps.prepare_query(raw)?;
            let mut qrng = ChaCha8Rng::seed_from_u64(seed);
            qrng.set_stream(qi as u64);
            let mut layer: Vec<f64> = g.nodes().iter().map(|&id| ps.dist_to(id, &q)).collect();
            layer.sort_unstable_by(f64::total_cmp);
            let mut ranks = Vec::with_capacity(n_starts);
            let mut landed = Vec::with_capacity(n_starts);
            for _ in 0..n_starts {
                let start = qrng.random_range(0..g.len() as u32);
                let r = greedy_local(g, ps, start, &q, false);
                ranks.push(layer.partition_point(|&d| d < r.dist) + 1);
                landed.push(r.id);
            }
            Ok((ranks, landed))
        })
        .collect::<Result<_>>()?;
    let (ranks, landed): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    let per_query: Vec<usize> = ranks
        .iter()
        .map(|r: &Vec<usize>| {
            let mut s = r.clone();
            s.sort_unstable();
            s[kth_index(delta, s.len())]
        })
        .collect();
    Ok(RecallBoundEstimate {
        rho: per_query.iter().copied().max().unwrap_or(1),
        delta,
        n_starts,
        per_query,
        ranks,
        landed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navgraph::{build_knn_graph, build_nsw, GraphParams};
    use crate::points::Metric;

    fn uniform(n: usize, d: usize, rng: &mut ChaCha8Rng) -> PointSet {
        PointSet::new(d, (0..n * d).map(|_| rng.random::<f32>()).collect(), Metric::L2).unwrap()
    }

    fn queries(count: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
        (0..count)
            .map(|_| (0..d).map(|_| rng.random::<f32>()).collect())
            .collect()
    }

    #[test]
    fn complete_graph_has_rho_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = uniform(60, 3, &mut rng);
        let ids: Vec<u32> = (0..60).collect();
        let g = build_knn_graph(&ps, &ids, 59).unwrap();
        let qs = queries(20, 3, &mut rng);
        let est = measure_recall_bound(&g, &ps, &qs, 0.9, 10, &mut rng).unwrap();
        assert_eq!(est.rho, 1);
        assert_eq!(est.pooled_rho(), 1);
        assert_eq!(est.average_hits(1), 1.0);
    }

    #[test]
    fn edgeless_graph_ranks_the_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps = uniform(30, 2, &mut rng);
        let ids: Vec<u32> = (0..30).collect();
        let g = NavGraph::from_parts(GraphParams::Knn { k: 1 }, ids.clone(), vec![Vec::new(); 30]).unwrap();
        let qs = queries(5, 2, &mut rng);
        let est = measure_recall_bound(&g, &ps, &qs, 0.5, 40, &mut rng).unwrap();
        for (qi, q) in qs.iter().enumerate() {
            for (&id, &rank) in est.landed[qi].iter().zip(&est.ranks[qi]) {
                let d = ps.dist_to(id, q);
                let closer = ids.iter().filter(|&&v| ps.dist_to(v, q) < d).count();
                assert_eq!(rank, closer + 1);
            }
        }
        assert!(est.rho > 1);
        assert!(est.rho <= 30);
    }

    #[test]
    fn deterministic_and_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = uniform(300, 4, &mut rng);
        let ids: Vec<u32> = (0..300).collect();
        let g = build_nsw(&ps, &ids, GraphParams::nsw(4, 8), &mut rng).unwrap();
        let qs = queries(30, 4, &mut rng);
        let a = measure_recall_bound(&g, &ps, &qs, 0.9, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = measure_recall_bound(&g, &ps, &qs, 0.9, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.pooled_rho() <= a.rho);
        let curve = a.hits_curve(20);
        assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(measure_recall_bound(&g, &ps, &qs, 1.0, 8, &mut rng).is_err());
        assert!(measure_recall_bound(&g, &ps, &qs, 0.9, 0, &mut rng).is_err());
        assert!(measure_recall_bound(&g, &ps, &[], 0.9, 1, &mut rng).is_err());
    }

    #[test]
    fn denser_graphs_bound_no_worse_on_average() {
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let ps = uniform(400, 6, &mut rng);
            let ids: Vec<u32> = (0..400).collect();
            let qs = queries(30, 6, &mut rng);
            let complete = build_knn_graph(&ps, &ids, 399).unwrap();
            let nsw = build_nsw(&ps, &ids, GraphParams::nsw(3, 6), &mut rng).unwrap();
            let a = measure_recall_bound(&complete, &ps, &qs, 0.9, 10, &mut rng).unwrap();
            let b = measure_recall_bound(&nsw, &ps, &qs, 0.9, 10, &mut rng).unwrap();
            wins += usize::from(a.rho <= b.rho);
        }
        assert_eq!(wins, 20);
    }
}

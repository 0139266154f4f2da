// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::NavGraph;
use crate::error::{Error, Result};
use crate::knn::Neighbor;
use crate::points::PointSet;

/// Outcome of a greedy walk.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Global id of the local minimum.
    pub id: u32,
    pub dist: f64,
    /// Moves made.
    pub hops: usize,
    pub dist_evals: usize,
    /// Global ids visited in order, start included, when tracing was on.
    pub visited: Option<Vec<u32>>,
}

/// Outcome of a best-first beam search.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    /// Global ids sorted by `(distance, id)`.
    pub neighbors: Vec<Neighbor>,
    /// Nodes expanded.
    pub hops: usize,
    pub dist_evals: usize,
}

fn check_query(ps: &PointSet, q: &[f32]) -> Result<()> {
    if q.len() != ps.dim() {
        return Err(Error::DimensionMismatch {
            expected: ps.dim(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Greedy descent from global id `start`: moves to the closest neighbor while
/// it is strictly closer than the current node (ties go to the lower id).
///
/// `q` must already live in the point set's space (unit length for cosine).
pub fn greedy_search(g: &NavGraph, ps: &PointSet, start: u32, q: &[f32], trace: bool) -> Result<SearchResult> {
    check_query(ps, q)?;
    let local = g.local_of(start).ok_or(Error::NotFound(start))?;
    Ok(greedy_local(g, ps, local, q, trace))
}

pub(crate) fn greedy_local(g: &NavGraph, ps: &PointSet, start: u32, q: &[f32], trace: bool) -> SearchResult {
    let mut cur = start;
    let mut cur_d = ps.dist_to(g.global(cur), q);
    let mut evals = 1;
    let mut hops = 0;
    let mut visited = trace.then(|| vec![g.global(cur)]);
    loop {
        let mut best: Option<(u32, f64)> = None;
        for &v in g.neighbors(cur) {
            let d = ps.dist_to(g.global(v), q);
            evals += 1;
            // neighbors are ascending, so strict `<` keeps the lowest id on ties
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((v, d));
            }
        }
        match best {
            Some((v, d)) if d < cur_d => {
                cur = v;
                cur_d = d;
                hops += 1;
                if let Some(t) = visited.as_mut() {
                    t.push(g.global(cur));
                }
            }
            _ => break,
        }
    }
    SearchResult {
        id: g.global(cur),
        dist: cur_d,
        hops,
        dist_evals: evals,
        visited,
    }
}

/// Best-first search keeping the `ef` closest nodes seen so far.
///
/// Stops once the nearest unexpanded candidate is farther than the worst
/// kept result. With `ef = 1` and one start it lands where
/// [`greedy_search`] does.
pub fn beam_search(g: &NavGraph, ps: &PointSet, starts: &[u32], q: &[f32], ef: usize) -> Result<BeamResult> {
    check_query(ps, q)?;
    if ef < 1 {
        return Err(Error::invalid("ef must be >= 1"));
    }
    if starts.is_empty() {
        return Err(Error::invalid("beam search needs at least one start"));
    }
    let locals = starts
        .iter()
        .map(|&s| g.local_of(s).ok_or(Error::NotFound(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(beam_local(g, ps, &locals, q, ef))
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Visited(vec![0; n.div_ceil(64)])
    }

    /// Marks `i`; returns false if it was already marked.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

pub(crate) fn beam_local(g: &NavGraph, ps: &PointSet, starts: &[u32], q: &[f32], ef: usize) -> BeamResult {
    let mut visited = Visited::new(g.len());
    // entries carry local indices; local order equals global order
    let mut frontier: BinaryHeap<Reverse<Neighbor>> = BinaryHeap::new();
    let mut results: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(ef + 1);
    let mut evals = 0;
    for &s in starts {
        if !visited.insert(s) {
            continue;
        }
        let nb = Neighbor::new(s, ps.dist_to(g.global(s), q));
        evals += 1;
        frontier.push(Reverse(nb));
        results.push(nb);
        if results.len() > ef {
            results.pop();
        }
    }
    let mut hops = 0;
    while let Some(Reverse(c)) = frontier.pop() {
        let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
        if results.len() >= ef && c.dist > worst {
            break;
        }
        hops += 1;
        for &v in g.neighbors(c.id) {
            if !visited.insert(v) {
                continue;
            }
            let d = ps.dist_to(g.global(v), q);
            evals += 1;
            let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
            if results.len() < ef || d < worst {
                let nb = Neighbor::new(v, d);
                frontier.push(Reverse(nb));
                results.push(nb);
                if results.len() > ef {
                    results.pop();
                }
            }
        }
    }
    let neighbors = results
        .into_sorted_vec()
        .into_iter()
        .map(|nb| Neighbor::new(g.global(nb.id), nb.dist))
        .collect();
    BeamResult {
        neighbors,
        hops,
        dist_evals: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::brute_force_knn_in;
    use crate::navgraph::{build_knn_graph, build_nsw, GraphParams};
    use crate::points::Metric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_graph(n: usize) -> (PointSet, NavGraph) {
        let rows: Vec<[f32; 1]> = (0..n).map(|i| [i as f32]).collect();
        let ps = PointSet::from_rows(&rows, Metric::L2).unwrap();
        let adj = (0..n as u32)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if (i as usize) + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        let g = NavGraph::from_parts(GraphParams::Knn { k: 2 }, (0..n as u32).collect(), adj).unwrap();
        (ps, g)
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, p: f64) -> (PointSet, NavGraph) {
        let data = (0..n * d).map(|_| rng.random_range(0..5) as f32).collect();
        let ps = PointSet::new(d, data, Metric::L2).unwrap();
        let adj = (0..n as u32)
            .map(|i| (0..n as u32).filter(|&j| j != i && rng.random_bool(p)).collect())
            .collect();
        let g = NavGraph::from_parts(GraphParams::Knn { k: n }, (0..n as u32).collect(), adj).unwrap();
        (ps, g)
    }

    #[test]
    fn start_at_minimum_is_fixed_point() {
        let (ps, g) = path_graph(10);
        let r = greedy_search(&g, &ps, 4, &[4.2], false).unwrap();
        assert_eq!((r.id, r.hops), (4, 0));
    }

    #[test]
    fn line_walk_counts_rank_distance() {
        let (ps, g) = path_graph(20);
        let r = greedy_search(&g, &ps, 0, &[13.1], true).unwrap();
        assert_eq!((r.id, r.hops), (13, 13));
        assert_eq!(r.visited.unwrap(), (0..=13).collect::<Vec<u32>>());
        let r = greedy_search(&g, &ps, 19, &[13.1], false).unwrap();
        assert_eq!((r.id, r.hops), (13, 6));
    }

    #[test]
    fn equidistant_neighbor_does_not_move() {
        let (ps, g) = path_graph(3);
        let r = greedy_search(&g, &ps, 0, &[0.5], false).unwrap();
        assert_eq!((r.id, r.hops), (0, 0));
    }

    #[test]
    fn missing_start_or_bad_query() {
        let (ps, g) = path_graph(3);
        assert!(greedy_search(&g, &ps, 7, &[0.5], false).is_err());
        assert!(greedy_search(&g, &ps, 0, &[0.5, 1.0], false).is_err());
        assert!(beam_search(&g, &ps, &[], &[0.5], 2).is_err());
        assert!(beam_search(&g, &ps, &[0], &[0.5], 0).is_err());
    }

    #[test]
    fn greedy_properties_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (ps, g) = random_graph(&mut rng, 40, 3, 0.1);
            let q: Vec<f32> = (0..3).map(|_| rng.random_range(0.0..5.0)).collect();
            let start = rng.random_range(0..40);
            let r = greedy_search(&g, &ps, start, &q, true).unwrap();
            // local minimum: post-hoc scan of every out-neighbor
            for v in g.neighbor_ids(r.id).unwrap() {
                assert!(ps.dist_to(v, &q) >= r.dist);
            }
            let trace = r.visited.unwrap();
            let ds: Vec<f64> = trace.iter().map(|&v| ps.dist_to(v, &q)).collect();
            assert!(ds.windows(2).all(|w| w[1] < w[0]));
            assert!(r.hops < g.len());
            assert!(r.hops <= r.dist_evals);
        }
    }

    #[test]
    fn beam_ef1_matches_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let (ps, g) = random_graph(&mut rng, 50, 2, 0.08);
            let q: Vec<f32> = (0..2).map(|_| rng.random_range(0..5) as f32).collect();
            let start = rng.random_range(0..50);
            let gr = greedy_search(&g, &ps, start, &q, false).unwrap();
            let br = beam_search(&g, &ps, &[start], &q, 1).unwrap();
            assert_eq!(br.neighbors[0].id, gr.id);
        }
    }

    #[test]
    fn exhaustive_beam_equals_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let data = (0..300 * 4).map(|_| rng.random::<f32>()).collect();
            let ps = PointSet::new(4, data, Metric::L2).unwrap();
            let ids: Vec<u32> = (0..300).collect();
            let g = build_nsw(&ps, &ids, GraphParams::nsw(4, 8), &mut rng).unwrap();
            assert!(g.is_connected_from_first());
            let q: Vec<f32> = (0..4).map(|_| rng.random::<f32>()).collect();
            let br = beam_search(&g, &ps, &[rng.random_range(0..300)], &q, 300).unwrap();
            let truth = brute_force_knn_in(&ps, &ids, &q, 300).unwrap();
            assert_eq!(br.neighbors, truth);
        }
    }

    #[test]
    fn singleton_graph() {
        let ps = PointSet::from_rows(&[[1.0f32, 1.0]], Metric::L2).unwrap();
        let g = build_knn_graph(&ps, &[0], 3).unwrap();
        let br = beam_search(&g, &ps, &[0], &[0.0, 0.0], 5).unwrap();
        assert_eq!(br.neighbors.len(), 1);
        assert_eq!(br.neighbors[0].id, 0);
    }
}

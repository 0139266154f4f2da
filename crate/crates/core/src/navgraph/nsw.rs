// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Navigable small world graphs built by incremental insertion.

use rand::seq::SliceRandom;
use rand::Rng;

use super::search::beam_local;
use super::{GraphParams, NavGraph};
use crate::error::{Error, Result};
use crate::knn::Neighbor;
use crate::points::PointSet;

/// Inserts `ids` in random order, linking each point both ways to the `M`
/// nearest candidates found by a width-`ef_construction` beam over the
/// partial graph. Lists longer than `2M` keep their `2M` nearest entries.
pub fn build_nsw<R: Rng + ?Sized>(ps: &PointSet, ids: &[u32], params: GraphParams, rng: &mut R) -> Result<NavGraph> {
    params.validate()?;
    if !matches!(params, GraphParams::Nsw { .. }) {
        return Err(Error::invalid("build_nsw needs NSW parameters"));
    }
    if ids.is_empty() {
        return Err(Error::invalid("cannot build a graph over zero nodes"));
    }
    let mut nodes = ids.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let mut g = NavGraph::empty(params, nodes);
    let mut order: Vec<u32> = (0..g.len() as u32).collect();
    order.shuffle(rng);
    let entry = order[0];
    for &x in &order[1..] {
        link_node(&mut g, ps, x, &[entry]);
    }
    repair_connectivity(&mut g, ps);
    Ok(g)
}

/// Degree pruning can strand nodes. Re-attaches every node that local node 0
/// cannot reach, and every node that cannot reach node 0, to its nearest
/// node on the connected side, keeping out-degrees within `2M`.
pub(crate) fn repair_connectivity(g: &mut NavGraph, ps: &PointSet) {
    let GraphParams::Nsw { m, .. } = *g.params() else {
        return;
    };
    let cap = 2 * m;
    let n = g.len();
    if n < 2 {
        return;
    }
    for _ in 0..16 {
        let mut changed = false;
        // forward: nodes reachable from 0
        let mut fwd = vec![false; n];
        mark(g.adjacency(), 0, &mut fwd);
        for x in 0..n as u32 {
            if fwd[x as usize] {
                continue;
            }
            let r = nearest(g, ps, x, |v| fwd[v as usize] && g.neighbors(v).len() < cap)
                .or_else(|| nearest(g, ps, x, |v| fwd[v as usize]))
                .expect("node 0 is reachable");
            attach(g, ps, r, x, cap);
            mark(g.adjacency(), x, &mut fwd);
            changed = true;
        }
        // backward: nodes that reach 0
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, list) in g.adjacency().iter().enumerate() {
            for &v in list {
                rev[v as usize].push(u as u32);
            }
        }
        let mut bwd = vec![false; n];
        mark(&rev, 0, &mut bwd);
        for x in 0..n as u32 {
            if bwd[x as usize] {
                continue;
            }
            let y = nearest(g, ps, x, |v| bwd[v as usize]).expect("node 0 reaches itself");
            if let Some(dropped) = attach(g, ps, x, y, cap) {
                rev[dropped as usize].retain(|&u| u != x);
            }
            rev[y as usize].push(x);
            mark(&rev, x, &mut bwd);
            changed = true;
        }
        if !changed {
            return;
        }
    }
}

fn mark(adj: &[Vec<u32>], from: u32, seen: &mut [bool]) {
    let mut stack = vec![from];
    seen[from as usize] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u as usize] {
            if !seen[v as usize] {
                seen[v as usize] = true;
                stack.push(v);
            }
        }
    }
}

fn nearest(g: &NavGraph, ps: &PointSet, x: u32, ok: impl Fn(u32) -> bool) -> Option<u32> {
    let gx = g.global(x);
    (0..g.len() as u32)
        .filter(|&v| v != x && ok(v))
        .map(|v| Neighbor::new(v, ps.dist_between(gx, g.global(v))))
        .min()
        .map(|nb| nb.id)
}

/// Adds `from -> to`; a full list gives up its farthest entry, which is returned.
fn attach(g: &mut NavGraph, ps: &PointSet, from: u32, to: u32, cap: usize) -> Option<u32> {
    let mut dropped = None;
    if g.neighbors(from).len() >= cap {
        let gf = g.global(from);
        let far = g
            .neighbors(from)
            .iter()
            .map(|&v| Neighbor::new(v, ps.dist_between(gf, g.global(v))))
            .max()
            .map(|nb| nb.id);
        if let Some(far) = far {
            let list: Vec<u32> = g.neighbors(from).iter().copied().filter(|&v| v != far).collect();
            g.set_neighbors(from, list);
            dropped = Some(far);
        }
    }
    g.add_edge(from, to);
    dropped
}

/// Connects an unlinked node `x` (local index) using the graph's NSW
/// parameters, searching from `entries`.
pub(crate) fn link_node(g: &mut NavGraph, ps: &PointSet, x: u32, entries: &[u32]) {
    let GraphParams::Nsw {
        m,
        ef_construction,
        diversify,
    } = *g.params()
    else {
        return;
    };
    let m_max = 2 * m;
    let q = ps.row(g.global(x));
    let entries: Vec<u32> = entries.iter().copied().filter(|&e| e != x).collect();
    if entries.is_empty() {
        return;
    }
    let found = beam_local(g, ps, &entries, q, ef_construction);
    let candidates: Vec<Neighbor> = found
        .neighbors
        .into_iter()
        .filter_map(|nb| g.local_of(nb.id).map(|l| Neighbor::new(l, nb.dist)))
        .filter(|nb| nb.id != x)
        .collect();
    let chosen = select(g, ps, &candidates, m, diversify);
    g.set_neighbors(x, chosen.clone());
    for s in chosen {
        g.add_edge(s, x);
        if g.neighbors(s).len() > m_max {
            prune(g, ps, s, m_max, diversify);
        }
    }
}

/// Keeps the `cap` nearest out-neighbors of `u`.
pub(crate) fn prune(g: &mut NavGraph, ps: &PointSet, u: u32, cap: usize, diversify: bool) {
    let base = g.global(u);
    let mut scored: Vec<Neighbor> = g
        .neighbors(u)
        .iter()
        .map(|&v| Neighbor::new(v, ps.dist_between(base, g.global(v))))
        .collect();
    scored.sort_unstable();
    let kept = select(g, ps, &scored, cap, diversify);
    g.set_neighbors(u, kept);
}

/// `candidates` are local ids sorted by distance to the base point.
fn select(g: &NavGraph, ps: &PointSet, candidates: &[Neighbor], cap: usize, diversify: bool) -> Vec<u32> {
    if !diversify {
        return candidates.iter().take(cap).map(|nb| nb.id).collect();
    }
    let mut kept: Vec<u32> = Vec::with_capacity(cap);
    for c in candidates {
        if kept.len() >= cap {
            break;
        }
        let cg = g.global(c.id);
        let dominated = kept.iter().any(|&s| ps.dist_between(cg, g.global(s)) < c.dist);
        if !dominated {
            kept.push(c.id);
        }
    }
    kept
}

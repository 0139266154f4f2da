// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Point insertion and deletion.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{HennIndex, LayerStats, QueryStats};
use crate::epsnet::decay_target;
use crate::error::{Error, Result};
use crate::navgraph::nsw::{link_node, prune};
use crate::navgraph::search::greedy_local;
use crate::navgraph::{GraphKind, GraphParams, NavGraph};
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertOutcome {
    pub id: u32,
    /// Level drawn from the geometric promotion process.
    pub drawn_level: usize,
    /// Level actually reached once size and depth bounds are applied.
    pub level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeleteOutcome {
    /// Layers the id was removed from.
    pub layers_touched: usize,
    /// Lowest layer resampled because it fell below `beta` times its target.
    pub rebuilt_from: Option<usize>,
    /// Upper-layer nodes dropped to keep the decay bound.
    pub evicted: usize,
}

/// Highest level the promotion process may draw.
const MAX_DRAW: usize = 64;

/// Removes `id` from `g` and reconnects every former in-neighbor to every
/// former out-neighbor, trimming lists back to the graph's degree cap.
fn unlink(g: &mut NavGraph, ps: &PointSet, id: u32) {
    let Some((out, incoming)) = g.remove_node(id) else {
        return;
    };
    let cap = g.params().max_degree();
    let diversify = matches!(g.params(), GraphParams::Nsw { diversify: true, .. });
    for &u in &incoming {
        for &v in &out {
            g.add_edge(u, v);
        }
        if let Some(cap) = cap {
            if g.neighbors(u).len() > cap {
                prune(g, ps, u, cap, diversify);
            }
        }
    }
}

impl HennIndex {
    /// Greedy landing node per layer for `q`, indexed by layer.
    fn landings<R: Rng + ?Sized>(&self, q: &[f32], rng: &mut R) -> Vec<u32> {
        let top = self.layers.len() - 1;
        let mut stats = QueryStats {
            per_layer_hops: vec![0; self.layers.len()],
            ..Default::default()
        };
        let mut out = vec![0; self.layers.len()];
        let mut cur = self.graphs[top].global(rng.random_range(0..self.graphs[top].len() as u32));
        for i in (0..=top).rev() {
            let entry = self.entry_in(i, cur, rng, &mut stats);
            cur = greedy_local(&self.graphs[i], &self.points, entry, q, false).id;
            out[i] = cur;
        }
        out
    }

    /// Adds a point, promoting it upward with probability `2^-m` per level.
    ///
    /// Promotion stops early where joining a layer would break the decay
    /// bound or the depth bound. Only NSW layers support insertion.
    pub fn insert<R: Rng + ?Sized>(&mut self, x: &[f32], rng: &mut R) -> Result<InsertOutcome> {
        if self.params.graph.kind() != GraphKind::Nsw {
            return Err(Error::Unsupported(format!(
                "insert needs NSW layers; {} graphs are built in batch",
                self.params.graph.kind()
            )));
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let q = self.points.prepare_query(x)?.into_owned();
        let landing = if self.is_empty() {
            Vec::new()
        } else {
            self.landings(&q, rng)
        };
        let id = self.points.push(x)?;

        let p = 0.5f64.powi(self.params.m as i32);
        let mut drawn = 0;
        while drawn < MAX_DRAW && rng.random::<f64>() < p {
            drawn += 1;
        }
        let n = self.len() + 1;
        let top_allowed = self.params.max_layers(n) - 1;
        let mut level = 0;
        for i in 1..=drawn.min(top_allowed) {
            // the point has joined layer i - 1 by now
            let below = if i == 1 { n } else { self.layers[i - 1].len() + 1 };
            let here = self.layers.get(i).map_or(0, Vec::len);
            if here + 1 > decay_target(below, self.params.m) {
                break;
            }
            level = i;
        }

        for i in 0..=level {
            if i == self.layers.len() {
                self.layers.push(vec![id]);
                self.graphs.push(NavGraph::empty(self.params.graph, vec![id]));
                self.stats.layers.push(LayerStats {
                    size: 1,
                    eps: 0.0,
                    trials: 0,
                    fallback: false,
                });
                continue;
            }
            self.layers[i].push(id);
            self.stats.layers[i].size += 1;
            let g = &mut self.graphs[i];
            let local = g.push_node(id)?;
            let entry = landing.get(i).and_then(|&e| g.local_of(e)).unwrap_or(0);
            link_node(g, &self.points, local, &[entry]);
        }
        self.stats.inserts += 1;
        Ok(InsertOutcome {
            id,
            drawn_level: drawn,
            level,
        })
    }

    /// Removes `id` from every layer, repairing graphs around it.
    ///
    /// Afterwards each upper layer above its decay bound sheds random nodes,
    /// the stack is cut to the depth bound, and the lowest upper layer that
    /// fell below `beta` times its target is resampled with everything
    /// above it.
    pub fn delete<R: Rng + ?Sized>(&mut self, id: u32, rng: &mut R) -> Result<DeleteOutcome> {
        if !self.contains(id) {
            return Err(Error::NotFound(id));
        }
        let mut touched = 0;
        for i in 0..self.layers.len() {
            if let Ok(pos) = self.layers[i].binary_search(&id) {
                self.layers[i].remove(pos);
                self.stats.layers[i].size -= 1;
                unlink(&mut self.graphs[i], &self.points, id);
                touched += 1;
            }
        }
        self.stats.deletes += 1;
        if self.layers[0].is_empty() {
            self.layers.clear();
            self.graphs.clear();
            self.stats.layers.clear();
            return Ok(DeleteOutcome {
                layers_touched: touched,
                rebuilt_from: None,
                evicted: 0,
            });
        }
        let keep = self
            .layers
            .iter()
            .position(Vec::is_empty)
            .unwrap_or(self.layers.len())
            .min(self.params.max_layers(self.len()));
        self.layers.truncate(keep);
        self.graphs.truncate(keep);
        self.stats.layers.truncate(keep);

        let mut evicted = 0;
        for i in 1..self.layers.len() {
            let bound = decay_target(self.layers[i - 1].len(), self.params.m);
            while self.layers[i].len() > bound {
                self.evict(i, rng);
                evicted += 1;
            }
        }
        self.stats.evictions += evicted as u64;

        let mut rebuilt_from = None;
        for i in 1..self.layers.len() {
            let target = decay_target(self.layers[i - 1].len(), self.params.m);
            if (self.layers[i].len() as f64) < self.params.beta * target as f64 {
                self.rebuild_from(i, rng)?;
                self.stats.rebuilds += 1;
                rebuilt_from = Some(i);
                break;
            }
        }
        Ok(DeleteOutcome {
            layers_touched: touched,
            rebuilt_from,
            evicted,
        })
    }

    /// Drops a random node of layer `i`; in nested mode it is picked among
    /// nodes absent from layer `i + 1` so nesting survives.
    fn evict<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let above = self.layers.get(i + 1);
        let candidates: Vec<u32> = match above {
            Some(up) if self.params.nested => self.layers[i]
                .iter()
                .copied()
                .filter(|v| up.binary_search(v).is_err())
                .collect(),
            _ => self.layers[i].clone(),
        };
        let victim = *candidates
            .choose(rng)
            .or_else(|| self.layers[i].choose(rng))
            .expect("layer is nonempty");
        let pos = self.layers[i].binary_search(&victim).expect("victim is in the layer");
        self.layers[i].remove(pos);
        self.stats.layers[i].size -= 1;
        unlink(&mut self.graphs[i], &self.points, victim);
    }
}

// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! The layered index: ε-net (or random) layers over a point set, a navigable
//! graph per layer, and greedy descent from the top layer to the bottom.

mod dynamic;
mod serialize;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use dynamic::{DeleteOutcome, InsertOutcome};
pub use serialize::INDEX_MAGIC;

use crate::epsnet::{build_net_from_pool, decay_target, epsilon_of, halve_rounds, sample_distinct, EpsNetParams};
use crate::error::{Error, Result};
use crate::knn::Neighbor;
use crate::navgraph::search::{beam_local, greedy_local};
use crate::navgraph::{build_dimred_dt, build_knn_graph, build_nsw, GraphKind, GraphParams, NavGraph};
use crate::points::{Metric, PointSet};

/// How upper layers are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerMode {
    /// Verified ε-net samples.
    EpsNet,
    /// Plain uniform samples, as in HNSW.
    Random,
}

impl fmt::Display for LayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerMode::EpsNet => "henn",
            LayerMode::Random => "baseline",
        })
    }
}

impl FromStr for LayerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "henn" | "eps" | "epsnet" | "eps_net" => Ok(LayerMode::EpsNet),
            "baseline" | "random" | "hnsw" => Ok(LayerMode::Random),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HennParams {
    /// Exponential decay; each layer is about `2^m` times smaller.
    pub m: u32,
    /// Highest layer index; 0 picks `floor(log2(n) / m)`.
    pub l_max: usize,
    /// Verification knobs. Their `m` is ignored in favor of the field above.
    pub eps: EpsNetParams,
    pub graph: GraphParams,
    pub ef_search: usize,
    pub layer_mode: LayerMode,
    /// Sample each layer from the one below it rather than from all points.
    pub nested: bool,
    /// Rebuild an upper layer once it shrinks below `beta` times its target.
    pub beta: f64,
    pub seed: u64,
}

impl Default for HennParams {
    fn default() -> Self {
        Self {
            m: 4,
            l_max: 0,
            eps: EpsNetParams::default(),
            graph: GraphParams::default(),
            ef_search: 50,
            layer_mode: LayerMode::EpsNet,
            nested: true,
            beta: 0.75,
            seed: 0,
        }
    }
}

impl HennParams {
    pub fn validate(&self) -> Result<()> {
        self.eps_params().validate()?;
        self.graph.validate()?;
        if self.ef_search < 1 {
            return Err(Error::invalid("ef_search must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid(format!("beta must be in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    pub fn eps_params(&self) -> EpsNetParams {
        EpsNetParams { m: self.m, ..self.eps }
    }

    /// Largest permitted layer count for `n` points.
    pub fn max_layers(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let auto = (n.ilog2() / self.m) as usize;
        let top = if self.l_max == 0 { auto } else { self.l_max.min(auto) };
        top + 1
    }
}

/// Construction record for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    pub size: usize,
    /// ε used for verification; 0 for unverified layers.
    pub eps: f64,
    /// Monte-Carlo trials spent; 0 for unverified layers.
    pub trials: usize,
    /// The halving construction replaced the sampled net.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub layers: Vec<LayerStats>,
    pub sampling_s: f64,
    pub graph_s: f64,
    pub build_s: f64,
    pub inserts: u64,
    pub deletes: u64,
    /// Upper-layer resamplings triggered by deletes.
    pub rebuilds: u64,
    /// Upper-layer nodes dropped to restore the decay bound after deletes.
    pub evictions: u64,
}

/// Per-query cost counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryStats {
    /// Indexed by layer.
    pub per_layer_hops: Vec<usize>,
    pub hops: usize,
    pub dist_evals: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HennIndex {
    params: HennParams,
    points: PointSet,
    /// Sorted global ids; `layers[0]` holds every live point.
    layers: Vec<Vec<u32>>,
    graphs: Vec<NavGraph>,
    stats: BuildStats,
}

/// [`HennIndex::build`] with verified ε-net layers.
pub fn build_henn<R: Rng + ?Sized>(points: PointSet, params: HennParams, rng: &mut R) -> Result<HennIndex> {
    HennIndex::build(
        points,
        HennParams {
            layer_mode: LayerMode::EpsNet,
            ..params
        },
        rng,
    )
}

/// [`HennIndex::build`] with uniformly sampled layers.
pub fn build_baseline<R: Rng + ?Sized>(points: PointSet, params: HennParams, rng: &mut R) -> Result<HennIndex> {
    HennIndex::build(
        points,
        HennParams {
            layer_mode: LayerMode::Random,
            ..params
        },
        rng,
    )
}

fn build_graph(ps: &PointSet, ids: &[u32], params: GraphParams, seed: u64) -> Result<NavGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match params {
        GraphParams::Nsw { .. } => build_nsw(ps, ids, params, &mut rng),
        GraphParams::Knn { k } => build_knn_graph(ps, ids, k),
        GraphParams::DimredDt { reducer } => build_dimred_dt(ps, ids, reducer, &mut rng),
    }
}

impl HennIndex {
    /// Builds every layer bottom-up and a graph over each.
    pub fn build<R: Rng + ?Sized>(points: PointSet, params: HennParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let params = HennParams {
            eps: params.eps_params(),
            ..params
        };
        if points.is_empty() {
            return Err(Error::invalid("cannot build an index over zero points"));
        }
        let start = Instant::now();
        let n = points.len() as u32;
        let mut index = HennIndex {
            params,
            points,
            layers: vec![(0..n).collect()],
            graphs: Vec::new(),
            stats: BuildStats {
                layers: vec![LayerStats {
                    size: n as usize,
                    eps: 0.0,
                    trials: 0,
                    fallback: false,
                }],
                ..Default::default()
            },
        };
        index.rebuild_from(1, rng)?;
        index.stats.build_s = start.elapsed().as_secs_f64();
        Ok(index)
    }

    /// An index with no points, ready for inserts.
    pub fn empty(dim: usize, metric: Metric, params: HennParams) -> Result<Self> {
        params.validate()?;
        Ok(HennIndex {
            params: HennParams {
                eps: params.eps_params(),
                ..params
            },
            points: PointSet::empty(dim, metric)?,
            layers: Vec::new(),
            graphs: Vec::new(),
            stats: BuildStats::default(),
        })
    }

    /// Resamples layers `from..` and rebuilds graphs for them (and for
    /// layer 0 when `from` is 1 and it has none yet).
    pub(crate) fn rebuild_from<R: Rng + ?Sized>(&mut self, from: usize, rng: &mut R) -> Result<()> {
        debug_assert!(from >= 1);
        let t0 = Instant::now();
        self.layers.truncate(from);
        self.stats.layers.truncate(from);
        let n = self.layers[0].len();
        let max_layers = self.params.max_layers(n);
        while self.layers.len() < max_layers {
            let prev = self.layers.last().expect("layer 0 exists");
            if prev.len() <= 1 {
                break;
            }
            let (ids, st) = self.sample_layer(prev, rng)?;
            self.layers.push(ids);
            self.stats.layers.push(st);
        }
        let t1 = Instant::now();
        let first_graph = self.graphs.len().min(from);
        self.graphs.truncate(first_graph);
        let seeds: Vec<u64> = (first_graph..self.layers.len()).map(|_| rng.random()).collect();
        let built = (first_graph..self.layers.len())
            .into_par_iter()
            .zip(seeds)
            .map(|(i, seed)| build_graph(&self.points, &self.layers[i], self.params.graph, seed))
            .collect::<Result<Vec<_>>>()?;
        self.graphs.extend(built);
        self.stats.sampling_s += (t1 - t0).as_secs_f64();
        self.stats.graph_s += t1.elapsed().as_secs_f64();
        Ok(())
    }

    fn sample_layer<R: Rng + ?Sized>(&self, prev: &[u32], rng: &mut R) -> Result<(Vec<u32>, LayerStats)> {
        let target = decay_target(prev.len(), self.params.m);
        let pool = if self.params.nested { prev } else { &self.layers[0][..] };
        match self.params.layer_mode {
            LayerMode::Random => {
                let ids = sample_distinct(pool, target, rng);
                Ok((
                    ids,
                    LayerStats {
                        size: target.min(pool.len()),
                        eps: 0.0,
                        trials: 0,
                        fallback: false,
                    },
                ))
            }
            LayerMode::EpsNet => {
                let ep = self.params.eps_params();
                let eps = epsilon_of(prev.len(), self.points.dim(), &ep)?;
                match build_net_from_pool(&self.points, pool, prev, eps, target, &ep, rng) {
                    Ok(net) => {
                        let size = net.ids.len();
                        Ok((
                            net.ids,
                            LayerStats {
                                size,
                                eps,
                                trials: net.trials,
                                fallback: false,
                            },
                        ))
                    }
                    Err(Error::ConstructionFailure { trials }) => {
                        let mut rounds = 0;
                        while pool.len().div_ceil(1usize << rounds) > target {
                            rounds += 1;
                        }
                        let ids = halve_rounds(pool, rounds, rng);
                        let size = ids.len();
                        Ok((
                            ids,
                            LayerStats {
                                size,
                                eps,
                                trials,
                                fallback: true,
                            },
                        ))
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }

    pub fn params(&self) -> &HennParams {
        &self.params
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn layers(&self) -> &[Vec<u32>] {
        &self.layers
    }

    pub fn graphs(&self) -> &[NavGraph] {
        &self.graphs
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// Live points.
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.layers.first().is_some_and(|l| l.binary_search(&id).is_ok())
    }

    /// Size of the serialized form in bytes.
    pub fn index_bytes(&self) -> usize {
        self.to_bytes().len()
    }

    /// Structural checks: layer 0 is the live set, every upper layer obeys
    /// the decay bound, the depth bound holds, nesting holds when enabled,
    /// and each graph covers exactly its layer.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.layers.len() != self.graphs.len() || self.layers.len() != self.stats.layers.len() {
            return Err("layer, graph and stats counts disagree".into());
        }
        if self.layers.is_empty() {
            return Ok(());
        }
        let n = self.layers[0].len();
        if self.layers.len() > self.params.max_layers(n) {
            return Err(format!("{} layers exceed the depth bound for n={n}", self.layers.len()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(format!("layer {i} is empty"));
            }
            if !layer.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("layer {i} ids are not strictly ascending"));
            }
            if layer.last().is_some_and(|&v| v as usize >= self.points.len()) {
                return Err(format!("layer {i} references a missing point"));
            }
            if i >= 1 {
                let prev = &self.layers[i - 1];
                let bound = decay_target(prev.len(), self.params.m);
                if layer.len() > bound {
                    return Err(format!("layer {i} has {} nodes, bound {bound}", layer.len()));
                }
                let base = if self.params.nested { prev } else { &self.layers[0] };
                if !layer.iter().all(|id| base.binary_search(id).is_ok()) {
                    return Err(format!("layer {i} is not a subset of its pool"));
                }
            }
            let g = &self.graphs[i];
            if g.nodes() != &layer[..] {
                return Err(format!("graph {i} nodes differ from layer {i}"));
            }
            g.check_invariants().map_err(|e| format!("graph {i}: {e}"))?;
            if self.stats.layers[i].size != layer.len() {
                return Err(format!("stats for layer {i} are stale"));
            }
        }
        Ok(())
    }

    /// Local index in layer `i` to start from when carrying `carried` down.
    /// Absent ids are bridged by a greedy walk toward the carried point from
    /// a random node of the layer.
    fn entry_in<R: Rng + ?Sized>(&self, i: usize, carried: u32, rng: &mut R, stats: &mut QueryStats) -> u32 {
        let g = &self.graphs[i];
        if let Some(local) = g.local_of(carried) {
            return local;
        }
        let start = rng.random_range(0..g.len() as u32);
        let r = greedy_local(g, &self.points, start, self.points.row(carried), false);
        stats.per_layer_hops[i] += r.hops;
        stats.hops += r.hops;
        stats.dist_evals += r.dist_evals;
        g.local_of(r.id).expect("greedy stays in the graph")
    }

    /// Greedy descent over layers `top..=stop`, returning the node reached
    /// in layer `stop` (global id) and its distance.
    fn descend<R: Rng + ?Sized>(&self, q: &[f32], stop: usize, rng: &mut R, stats: &mut QueryStats) -> Neighbor {
        let top = self.layers.len() - 1;
        let mut cur = self.graphs[top].global(rng.random_range(0..self.graphs[top].len() as u32));
        let mut dist = f64::INFINITY;
        for i in (stop..=top).rev() {
            let entry = self.entry_in(i, cur, rng, stats);
            let r = greedy_local(&self.graphs[i], &self.points, entry, q, false);
            stats.per_layer_hops[i] += r.hops;
            stats.hops += r.hops;
            stats.dist_evals += r.dist_evals;
            cur = r.id;
            dist = r.dist;
        }
        Neighbor::new(cur, dist)
    }

    fn ready(&self, q: &[f32]) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("index is empty"));
        }
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Greedy descent from a random top-layer node down to layer 0.
    pub fn query<R: Rng + ?Sized>(&self, q: &[f32], rng: &mut R) -> Result<(Neighbor, QueryStats)> {
        let t = Instant::now();
        self.ready(q)?;
        let q = self.points.prepare_query(q)?;
        let mut stats = QueryStats {
            per_layer_hops: vec![0; self.layers.len()],
            ..Default::default()
        };
        let found = self.descend(&q, 0, rng, &mut stats);
        stats.elapsed = t.elapsed();
        Ok((found, stats))
    }

    /// Greedy descent to layer 1, then a width-`ef` beam over layer 0.
    pub fn query_knn<R: Rng + ?Sized>(
        &self,
        q: &[f32],
        k: usize,
        ef: usize,
        rng: &mut R,
    ) -> Result<(Vec<Neighbor>, QueryStats)> {
        let t = Instant::now();
        self.ready(q)?;
        if k < 1 || k > self.len() {
            return Err(Error::invalid(format!("k must be in 1..={}, got {k}", self.len())));
        }
        if ef < k {
            return Err(Error::invalid(format!("ef ({ef}) must be >= k ({k})")));
        }
        let q = self.points.prepare_query(q)?;
        let mut stats = QueryStats {
            per_layer_hops: vec![0; self.layers.len()],
            ..Default::default()
        };
        let carried = if self.layers.len() > 1 {
            self.descend(&q, 1, rng, &mut stats).id
        } else {
            self.graphs[0].global(rng.random_range(0..self.graphs[0].len() as u32))
        };
        let entry = self.entry_in(0, carried, rng, &mut stats);
        let beam = beam_local(&self.graphs[0], &self.points, &[entry], &q, ef);
        stats.per_layer_hops[0] += beam.hops;
        stats.hops += beam.hops;
        stats.dist_evals += beam.dist_evals;
        let mut out = beam.neighbors;
        out.truncate(k);
        stats.elapsed = t.elapsed();
        Ok((out, stats))
    }

    pub fn graph_kind(&self) -> GraphKind {
        self.params.graph.kind()
    }
}

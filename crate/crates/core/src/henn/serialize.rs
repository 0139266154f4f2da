// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Binary index format.
//!
//! ```text
//! "HENNIDX1" | u32 version
//! params     | metric tag u8, metric p f64
//! u32 layer count, then per layer:
//!     varint size, varint-delta ids, per node: varint degree, varint-delta neighbors
//! stats      | f64 x3 timings, u64 x4 counters, per layer (f64 eps, u32 trials, u8 fallback)
//! point dump ("HENNPTS1" block)
//! ```
//!
//! Fixed-width integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{BuildStats, HennIndex, HennParams, LayerMode, LayerStats};
use crate::epsnet::EpsNetParams;
use crate::error::{Error, Result};
use crate::io::{decode_points, encode_points};
use crate::navgraph::{GraphParams, NavGraph, Reducer};
use crate::points::Metric;

pub const INDEX_MAGIC: &[u8; 8] = b"HENNIDX1";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

/// Ascending values as a first value followed by gaps.
fn put_deltas(out: &mut Vec<u8>, sorted: &[u32]) {
    let mut prev = 0u32;
    for (i, &v) in sorted.iter().enumerate() {
        put_varint(out, u64::from(if i == 0 { v } else { v - prev }));
        prev = v;
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn varint(&mut self, what: &str) -> Result<u64> {
        let start = self.pos;
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8(what)?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::format(start as u64, format!("overlong varint in {what}")))
    }

    fn count(&mut self, what: &str, max: u64) -> Result<usize> {
        let at = self.pos as u64;
        let v = self.varint(what)?;
        if v > max {
            return Err(Error::format(at, format!("{what} {v} exceeds limit {max}")));
        }
        Ok(v as usize)
    }

    /// `len` strictly ascending values below `limit`.
    fn deltas(&mut self, len: usize, limit: u64, what: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(len);
        let mut prev = 0u64;
        for i in 0..len {
            let at = self.pos as u64;
            let gap = self.varint(what)?;
            let v = if i == 0 { gap } else { prev + gap };
            if (i > 0 && gap == 0) || v >= limit {
                return Err(Error::format(at, format!("bad {what} entry {v}")));
            }
            out.push(v as u32);
            prev = v;
        }
        Ok(out)
    }

    fn flag(&mut self, what: &str) -> Result<bool> {
        let at = self.pos as u64;
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::format(at, format!("bad {what} flag {b}"))),
        }
    }
}

fn encode_params(p: &HennParams, out: &mut Vec<u8>) {
    put_u32(out, p.m);
    put_u64(out, p.l_max as u64);
    put_f64(out, p.eps.c0);
    put_f64(out, p.eps.phi);
    put_u64(out, p.eps.r_ranges as u64);
    put_u64(out, p.eps.max_trials as u64);
    match p.graph {
        GraphParams::Nsw {
            m,
            ef_construction,
            diversify,
        } => {
            out.push(0);
            put_u64(out, m as u64);
            put_u64(out, ef_construction as u64);
            out.push(u8::from(diversify));
        }
        GraphParams::Knn { k } => {
            out.push(1);
            put_u64(out, k as u64);
        }
        GraphParams::DimredDt { reducer } => {
            out.push(2);
            out.push(match reducer {
                Reducer::Pca => 0,
                Reducer::RandomProjection => 1,
            });
        }
    }
    put_u64(out, p.ef_search as u64);
    out.push(match p.layer_mode {
        LayerMode::EpsNet => 0,
        LayerMode::Random => 1,
    });
    out.push(u8::from(p.nested));
    put_f64(out, p.beta);
    put_u64(out, p.seed);
}

fn decode_params(r: &mut Reader) -> Result<HennParams> {
    let at = r.pos as u64;
    let m = r.u32("params")?;
    let l_max = r.u64("params")? as usize;
    let c0 = r.f64("params")?;
    let phi = r.f64("params")?;
    let r_ranges = r.u64("params")? as usize;
    let max_trials = r.u64("params")? as usize;
    let tag_at = r.pos as u64;
    let graph = match r.u8("graph kind")? {
        0 => GraphParams::Nsw {
            m: r.u64("graph params")? as usize,
            ef_construction: r.u64("graph params")? as usize,
            diversify: r.flag("diversify")?,
        },
        1 => GraphParams::Knn {
            k: r.u64("graph params")? as usize,
        },
        2 => {
            let at = r.pos as u64;
            let reducer = match r.u8("reducer")? {
                0 => Reducer::Pca,
                1 => Reducer::RandomProjection,
                b => return Err(Error::format(at, format!("unknown reducer tag {b}"))),
            };
            GraphParams::DimredDt { reducer }
        }
        b => return Err(Error::format(tag_at, format!("unknown graph kind tag {b}"))),
    };
    let ef_search = r.u64("params")? as usize;
    let mode_at = r.pos as u64;
    let layer_mode = match r.u8("layer mode")? {
        0 => LayerMode::EpsNet,
        1 => LayerMode::Random,
        b => return Err(Error::format(mode_at, format!("unknown layer mode tag {b}"))),
    };
    let nested = r.flag("nested")?;
    let beta = r.f64("params")?;
    let seed = r.u64("params")?;
    let p = HennParams {
        m,
        l_max,
        eps: EpsNetParams {
            c0,
            m,
            phi,
            r_ranges,
            max_trials,
        },
        graph,
        ef_search,
        layer_mode,
        nested,
        beta,
        seed,
    };
    p.validate()
        .map_err(|e| Error::format(at, format!("invalid params: {e}")))?;
    Ok(p)
}

impl HennIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        put_u32(&mut out, VERSION);
        encode_params(&self.params, &mut out);
        let (tag, p) = self.points.metric().tag();
        out.push(tag);
        put_f64(&mut out, p);
        put_u32(&mut out, self.layers.len() as u32);
        for (layer, g) in self.layers.iter().zip(&self.graphs) {
            put_varint(&mut out, layer.len() as u64);
            put_deltas(&mut out, layer);
            for list in g.adjacency() {
                put_varint(&mut out, list.len() as u64);
                put_deltas(&mut out, list);
            }
        }
        let s = &self.stats;
        for v in [s.sampling_s, s.graph_s, s.build_s] {
            put_f64(&mut out, v);
        }
        for v in [s.inserts, s.deletes, s.rebuilds, s.evictions] {
            put_u64(&mut out, v);
        }
        for ls in &s.layers {
            put_f64(&mut out, ls.eps);
            put_u32(&mut out, ls.trials as u32);
            out.push(u8::from(ls.fallback));
        }
        encode_points(&self.points, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != INDEX_MAGIC {
            return Err(Error::format(0, "bad magic, expected HENNIDX1"));
        }
        let v = r.u32("version")?;
        if v != VERSION {
            return Err(Error::format(8, format!("unsupported version {v}")));
        }
        let params = decode_params(&mut r)?;
        let metric_at = r.pos as u64;
        let tag = r.u8("metric")?;
        let p = r.f64("metric")?;
        let metric = Metric::from_tag(tag, p)
            .filter(|m| m.validate().is_ok())
            .ok_or_else(|| Error::format(metric_at, format!("bad metric tag {tag}")))?;
        let layer_count = r.u32("layer count")? as usize;
        if layer_count > 64 {
            return Err(Error::format(
                r.pos as u64 - 4,
                format!("implausible layer count {layer_count}"),
            ));
        }
        let limit = bytes.len() as u64;
        let mut layers = Vec::with_capacity(layer_count);
        let mut adjs = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let size = r.count("layer size", limit)?;
            let ids = r.deltas(size, u64::from(u32::MAX), "layer id")?;
            let mut adj = Vec::with_capacity(size);
            for _ in 0..size {
                let deg = r.count("degree", size as u64)?;
                adj.push(r.deltas(deg, size as u64, "neighbor")?);
            }
            layers.push(ids);
            adjs.push(adj);
        }
        let mut stats = BuildStats {
            sampling_s: r.f64("stats")?,
            graph_s: r.f64("stats")?,
            build_s: r.f64("stats")?,
            inserts: r.u64("stats")?,
            deletes: r.u64("stats")?,
            rebuilds: r.u64("stats")?,
            evictions: r.u64("stats")?,
            layers: Vec::with_capacity(layer_count),
        };
        for layer in &layers {
            stats.layers.push(LayerStats {
                size: layer.len(),
                eps: r.f64("layer stats")?,
                trials: r.u32("layer stats")? as usize,
                fallback: r.flag("fallback")?,
            });
        }
        let points_at = r.pos;
        let (points, used) = decode_points(&bytes[points_at..], points_at as u64, metric, true)?;
        if points_at + used != bytes.len() {
            return Err(Error::format((points_at + used) as u64, "trailing bytes after index"));
        }
        let mut graphs = Vec::with_capacity(layer_count);
        for (ids, adj) in layers.iter().zip(adjs) {
            let g = NavGraph::from_parts(params.graph, ids.clone(), adj)
                .map_err(|e| Error::format(points_at as u64, format!("bad graph: {e}")))?;
            graphs.push(g);
        }
        let index = HennIndex {
            params,
            points,
            layers,
            graphs,
            stats,
        };
        index
            .check_invariants()
            .map_err(|e| Error::format(points_at as u64, format!("inconsistent index: {e}")))?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.as_os_str().is_empty() {
            return Err(Error::format(0, "empty index path"));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}

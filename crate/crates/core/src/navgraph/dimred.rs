// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Navigation graph from a planar Delaunay triangulation of projected points.
//! Searches still use the original metric; only the edge set comes from 2-d.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use super::delaunay::triangulate;
use super::{GraphParams, NavGraph};
use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reducer {
    /// Top two principal axes.
    Pca,
    /// Gaussian `2 x d` projection scaled by `1/sqrt(2)`.
    RandomProjection,
}

impl fmt::Display for Reducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reducer::Pca => "pca",
            Reducer::RandomProjection => "rp",
        })
    }
}

impl FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pca" => Ok(Reducer::Pca),
            "rp" | "random" | "random_projection" | "jl" => Ok(Reducer::RandomProjection),
            other => Err(Error::invalid(format!("unknown reducer {other:?}"))),
        }
    }
}

/// Projects the rows `ids` (in the given order) to the plane.
pub fn reduce_to_2d<R: Rng + ?Sized>(ps: &PointSet, ids: &[u32], reducer: Reducer, rng: &mut R) -> Vec<[f64; 2]> {
    let d = ps.dim();
    let axes: [Vec<f64>; 2] = match reducer {
        Reducer::RandomProjection => {
            let s = 1.0 / 2f64.sqrt();
            [(); 2].map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * s).collect())
        }
        Reducer::Pca => principal_axes(ps, ids, rng),
    };
    ids.iter()
        .map(|&id| {
            let row = ps.row(id);
            axes.each_ref()
                .map(|a| a.iter().zip(row).map(|(w, x)| w * f64::from(*x)).sum())
        })
        .collect()
}

fn principal_axes<R: Rng + ?Sized>(ps: &PointSet, ids: &[u32], rng: &mut R) -> [Vec<f64>; 2] {
    let d = ps.dim();
    let mut mean = vec![0.0; d];
    for &id in ids {
        for (m, x) in mean.iter_mut().zip(ps.row(id)) {
            *m += f64::from(*x);
        }
    }
    let count = ids.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for &id in ids {
        for ((c, x), m) in centered.iter_mut().zip(ps.row(id)).zip(&mean) {
            *c = f64::from(*x) - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    let first = power_iteration(&cov, d, None, rng);
    let second = power_iteration(&cov, d, Some(&first), rng);
    [first, second]
}

/// Dominant eigenvector of a symmetric matrix, optionally orthogonal to `avoid`.
fn power_iteration<R: Rng + ?Sized>(mat: &[f64], d: usize, avoid: Option<&[f64]>, rng: &mut R) -> Vec<f64> {
    let project_out = |v: &mut Vec<f64>| {
        if let Some(a) = avoid {
            let dot: f64 = v.iter().zip(a).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(a).for_each(|(x, y)| *x -= dot * y);
        }
    };
    let normalize = |v: &mut Vec<f64>| -> bool {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
            true
        } else {
            false
        }
    };
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    project_out(&mut v);
    if !normalize(&mut v) {
        return vec![0.0; d];
    }
    let mut next = vec![0.0; d];
    for _ in 0..200 {
        for (i, out) in next.iter_mut().enumerate() {
            *out = mat[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        project_out(&mut next);
        if !normalize(&mut next) {
            // rank-deficient: any unit vector orthogonal to `avoid` will do
            return v;
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        if delta < 1e-12 {
            break;
        }
    }
    v
}

/// Delaunay edges of the projected layer, made symmetric.
///
/// Fewer than three distinct projected points, or collinear projections,
/// fall back to a path through the points sorted by projected coordinates.
pub fn build_dimred_dt<R: Rng + ?Sized>(ps: &PointSet, ids: &[u32], reducer: Reducer, rng: &mut R) -> Result<NavGraph> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot build a graph over zero nodes"));
    }
    let mut nodes = ids.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let params = GraphParams::DimredDt { reducer };
    let n = nodes.len();
    let reduced = reduce_to_2d(ps, &nodes, reducer, rng);
    let tri = triangulate(&reduced);
    let mut g = NavGraph::empty(params, nodes);
    if tri.triangles.is_empty() {
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (reduced[a as usize], reduced[b as usize]);
            pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1])).then(a.cmp(&b))
        });
        for w in order.windows(2) {
            g.add_edge(w[0], w[1]);
            g.add_edge(w[1], w[0]);
        }
        return Ok(g);
    }
    for (a, b) in tri.edges.iter().chain(&tri.duplicates) {
        g.add_edge(*a, *b);
        g.add_edge(*b, *a);
    }
    Ok(g)
}

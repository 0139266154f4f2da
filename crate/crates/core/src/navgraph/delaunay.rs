// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Incremental Bowyer–Watson triangulation in the plane.
//!
//! Points are scaled into the unit box and inserted in Morton order inside a
//! large super-triangle. Each insertion walks to the containing triangle,
//! grows the cavity of triangles whose circumcircle holds the new point, and
//! re-fans the cavity boundary around it.

use std::collections::{HashMap, HashSet};

/// Output of [`triangulate`]; all indices refer to the input slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Triangulation {
    /// Counter-clockwise triangles over input points.
    pub triangles: Vec<[u32; 3]>,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(u32, u32)>,
    /// `(duplicate, representative)` pairs for coincident inputs.
    pub duplicates: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
struct Tri {
    v: [usize; 3],
    /// `nb[i]` is across the edge opposite `v[i]`.
    nb: [Option<usize>; 3],
    alive: bool,
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` is strictly inside the circumcircle of CCW `a, b, c`.
#[inline]
pub(crate) fn incircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

fn morton(x: f64, y: f64) -> u64 {
    fn spread(v: u32) -> u64 {
        let mut v = u64::from(v);
        v = (v | (v << 16)) & 0x0000_FFFF_0000_FFFF;
        v = (v | (v << 8)) & 0x00FF_00FF_00FF_00FF;
        v = (v | (v << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
        v = (v | (v << 2)) & 0x3333_3333_3333_3333;
        v = (v | (v << 1)) & 0x5555_5555_5555_5555;
        v
    }
    let q = |t: f64| (t.clamp(0.0, 1.0) * 65535.0) as u32;
    spread(q(x)) | (spread(q(y)) << 1)
}

struct Mesh {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    last: usize,
}

impl Mesh {
    fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let mut t = self.last;
        let cap = 4 * self.tris.len() + 64;
        'walk: for step in 0..cap {
            let tri = &self.tris[t];
            // rotate the starting edge to avoid cycling on degenerate input
            for k in 0..3 {
                let i = (k + step) % 3;
                let a = self.pts[tri.v[(i + 1) % 3]];
                let b = self.pts[tri.v[(i + 2) % 3]];
                if orient(a, b, p) < 0.0 {
                    t = tri.nb[i]?;
                    continue 'walk;
                }
            }
            return Some(t);
        }
        None
    }

    fn in_circumcircle(&self, t: usize, p: [f64; 2]) -> bool {
        let v = self.tris[t].v;
        incircle(self.pts[v[0]], self.pts[v[1]], self.pts[v[2]], p) > 0.0
    }

    fn insert(&mut self, pi: usize) {
        let p = self.pts[pi];
        let seed = self
            .locate(p)
            .or_else(|| (0..self.tris.len()).find(|&t| self.tris[t].alive && self.in_circumcircle(t, p)));
        let Some(seed) = seed else {
            return;
        };
        let mut in_cavity: HashSet<usize> = HashSet::new();
        let mut stack = vec![seed];
        in_cavity.insert(seed);
        let mut cavity = Vec::new();
        while let Some(t) = stack.pop() {
            cavity.push(t);
            for n in self.tris[t].nb.into_iter().flatten() {
                if !in_cavity.contains(&n) && self.in_circumcircle(n, p) {
                    in_cavity.insert(n);
                    stack.push(n);
                }
            }
        }
        // boundary edges (a, b) in CCW order with the triangle beyond them
        let mut boundary = Vec::new();
        for &t in &cavity {
            let tri = &self.tris[t];
            for i in 0..3 {
                let outside = tri.nb[i].filter(|n| !in_cavity.contains(n));
                if tri.nb[i].is_none() || outside.is_some() {
                    boundary.push((tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], outside));
                }
            }
        }
        for &t in &cavity {
            self.tris[t].alive = false;
        }
        let mut by_start: HashMap<usize, usize> = HashMap::with_capacity(boundary.len());
        let first_new = self.tris.len();
        for &(a, b, outside) in &boundary {
            let id = self.tris.len();
            self.tris.push(Tri {
                v: [a, b, pi],
                nb: [None, None, outside],
                alive: true,
            });
            by_start.insert(a, id);
            if let Some(o) = outside {
                let ot = &mut self.tris[o];
                for j in 0..3 {
                    let (x, y) = (ot.v[(j + 1) % 3], ot.v[(j + 2) % 3]);
                    if x == b && y == a {
                        ot.nb[j] = Some(id);
                    }
                }
            }
        }
        for id in first_new..self.tris.len() {
            let b = self.tris[id].v[1];
            if let Some(&next) = by_start.get(&b) {
                self.tris[id].nb[0] = Some(next);
                self.tris[next].nb[1] = Some(id);
            }
        }
        if first_new < self.tris.len() {
            self.last = first_new;
        }
    }
}

/// All points within round-off of the line through the two extreme ones.
fn collinear(pts: &[[f64; 2]], order: &[usize]) -> bool {
    let a = pts[order[0]];
    let far = order
        .iter()
        .copied()
        .max_by(|&i, &j| {
            let di = (pts[i][0] - a[0]).powi(2) + (pts[i][1] - a[1]).powi(2);
            let dj = (pts[j][0] - a[0]).powi(2) + (pts[j][1] - a[1]).powi(2);
            di.total_cmp(&dj)
        })
        .unwrap();
    let b = pts[far];
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    order
        .iter()
        .all(|&i| orient(a, b, pts[i]).abs() <= 1e-12 * len.max(1e-300))
}

/// Delaunay triangulation of `points`.
///
/// Coincident inputs are reported in `duplicates` and left out of the mesh.
/// Collinear input yields no triangles.
pub fn triangulate(points: &[[f64; 2]]) -> Triangulation {
    let n = points.len();
    let mut out = Triangulation::default();
    if n == 0 {
        return out;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ext = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if ext > 0.0 { 1.0 / ext } else { 1.0 };
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - lo[0]) * scale, (p[1] - lo[1]) * scale])
        .collect();

    let mut first_at: HashMap<(u64, u64), usize> = HashMap::new();
    let mut order = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        match first_at.get(&(p[0].to_bits(), p[1].to_bits())) {
            Some(&rep) => out.duplicates.push((i as u32, rep as u32)),
            None => {
                first_at.insert((p[0].to_bits(), p[1].to_bits()), i);
                order.push(i);
            }
        }
    }
    if order.len() < 3 || collinear(&pts, &order) {
        return out;
    }
    order.sort_by_key(|&i| (morton(pts[i][0], pts[i][1]), i));

    const BIG: f64 = 1.0e4;
    pts.push([-BIG, -BIG]);
    pts.push([BIG, -BIG]);
    pts.push([0.5, BIG]);
    let mut mesh = Mesh {
        pts,
        tris: vec![Tri {
            v: [n, n + 1, n + 2],
            nb: [None; 3],
            alive: true,
        }],
        last: 0,
    };
    for &i in &order {
        mesh.insert(i);
    }

    let mut edges = Vec::new();
    for tri in mesh.tris.iter().filter(|t| t.alive) {
        if tri.v.iter().all(|&v| v < n) {
            out.triangles.push(tri.v.map(|v| v as u32));
        }
        for i in 0..3 {
            let (a, b) = (tri.v[i], tri.v[(i + 1) % 3]);
            if a < n && b < n {
                edges.push((a.min(b) as u32, a.max(b) as u32));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    out.edges = edges;
    out
}

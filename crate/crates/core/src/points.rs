// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Dense point storage and distance metrics.
//!
//! Coordinates are stored as `f32`; every distance is accumulated in `f64`
//! so the brute-force oracle and the graph searches agree on ordering.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance function over `R^d`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    L2,
    /// Minkowski distance with exponent `p > 0`.
    Lp(f64),
    /// `1 - <a, b>` over unit-normalized vectors.
    Cosine,
}

impl Metric {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Metric::Lp(p) if !(p.is_finite() && p > 0.0) => {
                Err(Error::invalid(format!("Lp exponent must be finite and > 0, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    #[inline]
    pub fn eval(&self, a: &[f32], b: &[f32]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match *self {
            Metric::L2 => {
                let mut acc = 0.0f64;
                for (x, y) in a.iter().zip(b) {
                    let t = f64::from(*x) - f64::from(*y);
                    acc += t * t;
                }
                acc.sqrt()
            }
            Metric::Lp(p) => {
                if p == 1.0 {
                    return a
                        .iter()
                        .zip(b)
                        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs())
                        .sum();
                }
                let acc: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs().powf(p))
                    .sum();
                acc.powf(1.0 / p)
            }
            Metric::Cosine => {
                // renormalize in f64 so that dist(a, a) is zero up to round-off
                let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = (f64::from(*x), f64::from(*y));
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                let norm = (na * nb).sqrt();
                if norm == 0.0 {
                    return 1.0;
                }
                (1.0 - dot / norm).max(0.0)
            }
        }
    }

    pub(crate) fn tag(&self) -> (u8, f64) {
        match *self {
            Metric::L2 => (0, 2.0),
            Metric::Lp(p) => (1, p),
            Metric::Cosine => (2, 0.0),
        }
    }

    pub(crate) fn from_tag(tag: u8, p: f64) -> Option<Metric> {
        match tag {
            0 => Some(Metric::L2),
            1 => Some(Metric::Lp(p)),
            2 => Some(Metric::Cosine),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::L2 => f.write_str("l2"),
            Metric::Lp(p) => write!(f, "lp:{p}"),
            Metric::Cosine => f.write_str("cosine"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let metric = match lower.as_str() {
            "l2" | "euclidean" => Metric::L2,
            "cosine" | "angular" => Metric::Cosine,
            other => match other.strip_prefix("lp:") {
                Some(p) => Metric::Lp(
                    p.parse()
                        .map_err(|_| Error::invalid(format!("bad Lp exponent {p:?}")))?,
                ),
                None => return Err(Error::invalid(format!("unknown metric {s:?}"))),
            },
        };
        metric.validate()?;
        Ok(metric)
    }
}

/// Checked distance between two points.
pub fn distance(metric: Metric, a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(metric.eval(a, b))
}

/// Scales `v` to unit length in place.
pub fn normalize(v: &mut [f32]) -> Result<()> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::invalid("cannot normalize a zero-length vector"));
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(())
}

/// Row-major `n x d` matrix of finite coordinates, ids `0..n`.
///
/// Rows are append-only: once an id is handed out its coordinates never
/// change, so indexes can hold ids into a shared set.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f32>,
    metric: Metric,
}

impl PointSet {
    /// Builds a published point set; requires `n >= 1`.
    pub fn new(dim: usize, data: Vec<f32>, metric: Metric) -> Result<Self> {
        let ps = Self::from_flat(dim, data, metric)?;
        if ps.is_empty() {
            return Err(Error::invalid("point set must contain at least one point"));
        }
        Ok(ps)
    }

    /// Empty set that rows can be pushed into.
    pub fn empty(dim: usize, metric: Metric) -> Result<Self> {
        Self::from_flat(dim, Vec::new(), metric)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], metric: Metric) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::invalid("point set must contain at least one point"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data, metric)
    }

    fn from_flat(dim: usize, mut data: Vec<f32>, metric: Metric) -> Result<Self> {
        metric.validate()?;
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in row {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        if metric == Metric::Cosine {
            for row in data.chunks_mut(dim) {
                normalize(row)?;
            }
        }
        Ok(Self { dim, data, metric })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    #[inline]
    pub fn dist_to(&self, id: u32, q: &[f32]) -> f64 {
        self.metric.eval(self.row(id), q)
    }

    #[inline]
    pub fn dist_between(&self, a: u32, b: u32) -> f64 {
        self.metric.eval(self.row(a), self.row(b))
    }

    /// Validates a query and normalizes it for cosine.
    pub fn prepare_query<'q>(&self, q: &'q [f32]) -> Result<Cow<'q, [f32]>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("query has a non-finite coordinate"));
        }
        if self.metric == Metric::Cosine {
            let mut owned = q.to_vec();
            normalize(&mut owned)?;
            Ok(Cow::Owned(owned))
        } else {
            Ok(Cow::Borrowed(q))
        }
    }

    /// Appends a row and returns its id.
    pub fn push(&mut self, x: &[f32]) -> Result<u32> {
        let x = self.prepare_query(x)?.into_owned();
        let id = u32::try_from(self.len()).map_err(|_| Error::invalid("point set is full"))?;
        self.data.extend_from_slice(&x);
        Ok(id)
    }
}

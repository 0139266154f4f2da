// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Synthetic data, recall and latency measurement, trend fits, CSV rows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::henn::HennIndex;
use crate::navgraph::measure_recall_bound;
use crate::points::{Metric, PointSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Each coordinate uniform on `[0, 1)`.
    Uniform,
    /// Each coordinate exponential with rate `lambda`.
    Exponential { lambda: f64 },
}

impl Distribution {
    /// Rate for exponential data, 0 for uniform.
    pub fn lambda(&self) -> f64 {
        match *self {
            Distribution::Uniform => 0.0,
            Distribution::Exponential { lambda } => lambda,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f32 {
        let u: f64 = rng.random();
        match *self {
            Distribution::Uniform => u as f32,
            Distribution::Exponential { lambda } => (-(1.0 - u).ln() / lambda) as f32,
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Exponential { lambda } => write!(f, "exp:{lambda}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "uniform" {
            return Ok(Distribution::Uniform);
        }
        let lambda = s
            .strip_prefix("exp:")
            .or_else(|| s.strip_prefix("exponential:"))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::invalid(format!("unknown distribution {s:?}")))?;
        Ok(Distribution::Exponential { lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub distribution: Distribution,
    pub seed: u64,
    pub n_queries: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.d < 1 {
            return Err(Error::invalid(format!(
                "n and d must be >= 1, got n={} d={}",
                self.n, self.d
            )));
        }
        if let Distribution::Exponential { lambda } = self.distribution {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
            }
        }
        Ok(())
    }
}

/// Base points and queries drawn from the same distribution on separate
/// random streams.
pub fn gen_synthetic(spec: &SyntheticSpec, metric: Metric) -> Result<(PointSet, Vec<Vec<f32>>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = (0..spec.n * spec.d)
        .map(|_| spec.distribution.sample(&mut rng))
        .collect();
    let ps = PointSet::new(spec.d, data, metric)?;
    let mut qrng = ChaCha8Rng::seed_from_u64(spec.seed);
    qrng.set_stream(1);
    let queries = (0..spec.n_queries)
        .map(|_| (0..spec.d).map(|_| spec.distribution.sample(&mut qrng)).collect())
        .collect();
    Ok((ps, queries))
}

/// `|returned[..k] ∩ truth[..k]| / k`.
pub fn recall_at_k(returned: &[u32], truth: &[u32], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let truth = &truth[..k.min(truth.len())];
    let hits = returned.iter().take(k).filter(|id| truth.contains(id)).count();
    hits as f64 / k as f64
}

/// Aggregates for one (index, k, ef) configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub recall: f64,
    pub qps: f64,
    /// Slowest repetition's total query time.
    pub worst_case_ms: f64,
    /// Mean single-query latency over all repetitions.
    pub mean_latency_ms: f64,
    pub mean_hops: f64,
    pub max_hops: usize,
    /// Total query time of each repetition.
    pub rep_ms: Vec<f64>,
}

/// Runs every query `reps` times, sequentially, with the same start seeds
/// each time, so repetitions differ only in timing.
pub fn run_bench(
    index: &HennIndex,
    queries: &[Vec<f32>],
    truth: &[Vec<u32>],
    k: usize,
    ef: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchResult> {
    if reps < 1 {
        return Err(Error::invalid("reps must be >= 1"));
    }
    if queries.is_empty() || truth.len() != queries.len() {
        return Err(Error::invalid(format!(
            "need one ground-truth row per query ({} queries, {} rows)",
            queries.len(),
            truth.len()
        )));
    }
    let ef = ef.max(k);
    let mut rep_ms = Vec::with_capacity(reps);
    let mut recall = 0.0;
    let mut hops = Vec::with_capacity(queries.len());
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut results = Vec::with_capacity(queries.len());
        let t = Instant::now();
        for q in queries {
            results.push(index.query_knn(q, k, ef, &mut rng)?);
        }
        rep_ms.push(t.elapsed().as_secs_f64() * 1e3);
        if rep == 0 {
            for ((found, stats), row) in results.iter().zip(truth) {
                let ids: Vec<u32> = found.iter().map(|nb| nb.id).collect();
                recall += recall_at_k(&ids, row, k);
                hops.push(stats.hops);
            }
        }
    }
    let nq = queries.len() as f64;
    let worst = rep_ms.iter().copied().fold(0.0, f64::max);
    let best = rep_ms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BenchResult {
        recall: recall / nq,
        qps: if best > 0.0 { nq / (best / 1e3) } else { f64::INFINITY },
        worst_case_ms: worst,
        mean_latency_ms: rep_ms.iter().sum::<f64>() / (reps as f64 * nq),
        mean_hops: hops.iter().sum::<usize>() as f64 / nq,
        max_hops: hops.iter().copied().max().unwrap_or(0),
        rep_ms,
    })
}

/// Greedy-descent hop counts (no beam) over a query set.
#[derive(Debug, Clone, PartialEq)]
pub struct HopProfile {
    pub mean: f64,
    pub max: usize,
    /// Mean hops per layer, indexed by layer.
    pub per_layer_mean: Vec<f64>,
}

pub fn hop_profile(index: &HennIndex, queries: &[Vec<f32>], seed: u64) -> Result<HopProfile> {
    if queries.is_empty() {
        return Err(Error::invalid("hop profile needs at least one query"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0usize;
    let mut max = 0usize;
    let mut per_layer = vec![0usize; index.layers().len()];
    for q in queries {
        let (_, st) = index.query(q, &mut rng)?;
        total += st.hops;
        max = max.max(st.hops);
        for (acc, h) in per_layer.iter_mut().zip(&st.per_layer_hops) {
            *acc += h;
        }
    }
    let nq = queries.len() as f64;
    Ok(HopProfile {
        mean: total as f64 / nq,
        max,
        per_layer_mean: per_layer.into_iter().map(|h| h as f64 / nq).collect(),
    })
}

/// Recall bound of the bottom layer's graph.
pub fn layer0_recall_bound(
    index: &HennIndex,
    queries: &[Vec<f32>],
    delta: f64,
    n_starts: usize,
    seed: u64,
) -> Result<usize> {
    let g = index.graphs().first().ok_or_else(|| Error::invalid("index is empty"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(measure_recall_bound(g, index.points(), queries, delta, n_starts, &mut rng)?.rho)
}

/// Least-squares fit `y = a * f(x) + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub a: f64,
    pub b: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    /// `f(x) = log2(x)^2`.
    pub polylog: LineFit,
    /// `f(x) = x`.
    pub linear: LineFit,
}

fn fit_line(fs: &[f64], ys: &[f64]) -> LineFit {
    let n = fs.len() as f64;
    let mf = fs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sff: f64 = fs.iter().map(|f| (f - mf) * (f - mf)).sum();
    let sfy: f64 = fs.iter().zip(ys).map(|(f, y)| (f - mf) * (y - my)).sum();
    let a = if sff > 0.0 { sfy / sff } else { 0.0 };
    let b = my - a * mf;
    let sse: f64 = fs.iter().zip(ys).map(|(f, y)| (y - (a * f + b)).powi(2)).sum();
    LineFit {
        a,
        b,
        rmse: (sse / n).sqrt(),
    }
}

pub fn fit_trends(xs: &[f64], ys: &[f64]) -> Result<TrendFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("xs and ys differ in length"));
    }
    if xs.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 points, got {}", xs.len())));
    }
    if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("xs must be positive and all values finite"));
    }
    let logs: Vec<f64> = xs.iter().map(|x| x.log2().powi(2)).collect();
    Ok(TrendFit {
        polylog: fit_line(&logs, ys),
        linear: fit_line(xs, ys),
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub graph: String,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub ef: usize,
    pub k: usize,
    pub recall: f64,
    pub qps: f64,
    pub worst_case_ms: f64,
    pub mean_hops: f64,
    pub max_hops: usize,
    pub rho_delta: usize,
    pub build_s: f64,
    pub index_bytes: usize,
}

pub const CSV_HEADER: &str =
    "method,graph,n,d,lambda,ef,k,recall,qps,worst_case_ms,mean_hops,max_hops,rho_delta,build_s,index_bytes";

/// Writes `# <comment>` then the rows; the header is written only when
/// `with_header` is set.
pub fn write_csv<W: Write>(out: W, comment: &str, rows: &[BenchRow], with_header: bool) -> Result<()> {
    let mut out = out;
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(with_header).from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows whose recall is not beaten by any row with at least the same QPS.
pub fn pareto_frontier(rows: &[BenchRow]) -> Vec<&BenchRow> {
    let mut out: Vec<&BenchRow> = rows
        .iter()
        .filter(|r| {
            !rows
                .iter()
                .any(|o| o.qps >= r.qps && o.recall > r.recall || o.qps > r.qps && o.recall >= r.recall)
        })
        .collect();
    out.sort_by(|a, b| a.recall.total_cmp(&b.recall));
    out
}

// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! ε-nets over the ring range space.
//!
//! A ring `<p, r1, r2>` holds every point whose distance to `p` lies in
//! `[r1, r2]`. A subset is an ε-net when it hits every ring holding at least
//! an ε fraction of the base set. Exhaustive verification would enumerate
//! `O(n^δ)` rings, so nets are checked against a battery of randomly drawn
//! heavy rings instead.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{Metric, PointSet};

/// Ring range `r1 <= dist(x, center) <= r2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingRange {
    pub center: Vec<f32>,
    pub r1: f64,
    pub r2: f64,
}

impl RingRange {
    pub fn new(center: Vec<f32>, r1: f64, r2: f64) -> Result<Self> {
        if !(r1 >= 0.0 && r1 <= r2) {
            return Err(Error::invalid(format!(
                "ring radii must satisfy 0 <= r1 <= r2, got {r1}, {r2}"
            )));
        }
        Ok(Self { center, r1, r2 })
    }

    #[inline]
    pub fn contains(&self, x: &[f32], metric: Metric) -> bool {
        let d = metric.eval(x, &self.center);
        self.r1 <= d && d <= self.r2
    }
}

/// Boundary-inclusive ring membership with a dimension check.
pub fn ring_contains(ring: &RingRange, x: &[f32], metric: Metric) -> Result<bool> {
    if x.len() != ring.center.len() {
        return Err(Error::DimensionMismatch {
            expected: ring.center.len(),
            got: x.len(),
        });
    }
    Ok(ring.contains(x, metric))
}

/// Knobs of the sampling-based construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsNetParams {
    /// Multiplier in the ε schedule; larger means lighter verification.
    pub c0: f64,
    /// Exponential decay: each layer is `2^m` times smaller than the last.
    pub m: u32,
    /// Failure probability of a single Monte-Carlo draw.
    pub phi: f64,
    /// Rings per verification battery.
    pub r_ranges: usize,
    pub max_trials: usize,
}

impl Default for EpsNetParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            m: 4,
            phi: 0.5,
            r_ranges: 64,
            max_trials: 32,
        }
    }
}

impl EpsNetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::invalid(format!("c0 must be positive, got {}", self.c0)));
        }
        if self.m < 1 || self.m > 20 {
            return Err(Error::invalid(format!("m must be in 1..=20, got {}", self.m)));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::invalid(format!("phi must be in (0, 1), got {}", self.phi)));
        }
        if self.r_ranges < 1 {
            return Err(Error::invalid("r_ranges must be >= 1"));
        }
        if self.max_trials < 1 {
            return Err(Error::invalid("max_trials must be >= 1"));
        }
        Ok(())
    }

    /// Target layer size `min(s, ceil(s / 2^m))`.
    pub fn decay_target(&self, s: usize) -> usize {
        decay_target(s, self.m)
    }
}

pub(crate) fn decay_target(s: usize, m: u32) -> usize {
    s.div_ceil(1usize << m).min(s)
}

/// `ε(s) = c0 · d · log2(s) / s · 2^m`, clamped to `(0, 1]`.
pub fn epsilon_of(s: usize, d: usize, params: &EpsNetParams) -> Result<f64> {
    if s < 2 {
        return Err(Error::invalid(format!("layer size must be >= 2, got {s}")));
    }
    let s = s as f64;
    let raw = params.c0 * d as f64 * s.log2() / s * 2f64.powi(params.m as i32);
    Ok(raw.min(1.0))
}

/// Sample size after which a random sample is an ε-net with probability
/// `1 - phi`: `ceil(1/ε · log2(1/φ) + δ/ε · log2(δ/ε))`.
pub fn sample_size(eps: f64, vc_dim: f64, phi: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must be in (0, 1], got {eps}")));
    }
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::invalid(format!("phi must be in (0, 1), got {phi}")));
    }
    if !(vc_dim >= 1.0 && vc_dim.is_finite()) {
        return Err(Error::invalid(format!("vc_dim must be >= 1, got {vc_dim}")));
    }
    let s = (1.0 / eps) * (1.0 / phi).log2() + (vc_dim / eps) * (vc_dim / eps).log2();
    Ok(s.ceil() as usize)
}

/// Smallest ring weight counted as heavy: `ceil(ε · n)`.
pub fn heavy_threshold(eps: f64, n: usize) -> usize {
    // the epsilon absorbs round-off in products like 0.1 * 100
    ((eps * n as f64) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRing {
    pub ring: RingRange,
    /// Base points inside the ring.
    pub weight: usize,
}

/// Verification rings; each holds at least `threshold` base points.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeBattery {
    pub rings: Vec<WeightedRing>,
    pub threshold: usize,
}

/// Draws `r_ranges` heavy rings over `base`.
///
/// Each ring is centered on a random base point and spans a random window of
/// `ceil(ε·|base|)` consecutive distance ranks, so it is heavy by
/// construction (ties at the window edges can only add weight).
pub fn sample_heavy_rings<R: Rng + ?Sized>(
    ps: &PointSet,
    base: &[u32],
    eps: f64,
    r_ranges: usize,
    rng: &mut R,
) -> Result<RangeBattery> {
    if base.is_empty() {
        return Err(Error::invalid("base set is empty"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must be in (0, 1], got {eps}")));
    }
    let w = heavy_threshold(eps, base.len());
    if w > base.len() {
        return Err(Error::invalid(format!(
            "ring weight {w} exceeds base size {}",
            base.len()
        )));
    }
    let mut dists = vec![0.0f64; base.len()];
    let mut scratch = vec![0.0f64; base.len()];
    let mut rings = Vec::with_capacity(r_ranges);
    for _ in 0..r_ranges {
        let center = ps.row(base[rng.random_range(0..base.len())]);
        for (d, &id) in dists.iter_mut().zip(base) {
            *d = ps.dist_to(id, center);
        }
        let j = rng.random_range(0..=base.len() - w);
        scratch.copy_from_slice(&dists);
        let (_, lo, rest) = scratch.select_nth_unstable_by(j, f64::total_cmp);
        let r1 = *lo;
        let r2 = if w == 1 {
            r1
        } else {
            *rest.select_nth_unstable_by(w - 2, f64::total_cmp).1
        };
        let weight = dists.iter().filter(|&&d| r1 <= d && d <= r2).count();
        rings.push(WeightedRing {
            ring: RingRange::new(center.to_vec(), r1, r2)?,
            weight,
        });
    }
    Ok(RangeBattery { rings, threshold: w })
}

/// True iff every ring of the battery holds at least one candidate.
pub fn is_eps_net(ps: &PointSet, candidate: &[u32], battery: &RangeBattery) -> bool {
    let metric = ps.metric();
    battery
        .rings
        .iter()
        .all(|wr| candidate.iter().any(|&id| wr.ring.contains(ps.row(id), metric)))
}

/// Result of a Las-Vegas construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSample {
    /// Sorted ascending.
    pub ids: Vec<u32>,
    pub trials: usize,
}

/// `target` distinct ids from `pool`: uniform draws with replacement,
/// duplicates discarded and replaced by fresh draws. Output is sorted.
pub fn sample_distinct<R: Rng + ?Sized>(pool: &[u32], target: usize, rng: &mut R) -> Vec<u32> {
    let target = target.min(pool.len());
    let mut taken = vec![false; pool.len()];
    let mut out = Vec::with_capacity(target);
    while out.len() < target {
        let pos = rng.random_range(0..pool.len());
        if !taken[pos] {
            taken[pos] = true;
            out.push(pool[pos]);
        }
    }
    out.sort_unstable();
    out
}

/// Sampling-based ε-net of `base` with the decay-driven target size.
pub fn build_eps_net_sampling<R: Rng + ?Sized>(
    ps: &PointSet,
    base: &[u32],
    eps: f64,
    params: &EpsNetParams,
    rng: &mut R,
) -> Result<NetSample> {
    let target = params.decay_target(base.len());
    build_net_from_pool(ps, base, base, eps, target, params, rng)
}

/// Las-Vegas loop: candidates come from `pool`, rings from `base`.
///
/// Trials use independent ChaCha streams keyed by trial index and run in
/// parallel waves; the lowest accepted index wins, so the outcome does not
/// depend on the thread count.
pub(crate) fn build_net_from_pool<R: Rng + ?Sized>(
    ps: &PointSet,
    pool: &[u32],
    base: &[u32],
    eps: f64,
    target: usize,
    params: &EpsNetParams,
    rng: &mut R,
) -> Result<NetSample> {
    params.validate()?;
    if pool.is_empty() || base.is_empty() {
        return Err(Error::invalid("cannot build a net over an empty set"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must be in (0, 1], got {eps}")));
    }
    let seed: u64 = rng.random();
    let run_trial = |t: usize| -> Option<Vec<u32>> {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(seed);
        trial_rng.set_stream(t as u64);
        let sample = sample_distinct(pool, target, &mut trial_rng);
        let battery = sample_heavy_rings(ps, base, eps, params.r_ranges, &mut trial_rng).ok()?;
        is_eps_net(ps, &sample, &battery).then_some(sample)
    };
    let wave = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < params.max_trials {
        let end = (start + wave).min(params.max_trials);
        let accepted = (start..end)
            .into_par_iter()
            .filter_map(|t| run_trial(t).map(|s| (t, s)))
            .min_by_key(|(t, _)| *t);
        if let Some((t, ids)) = accepted {
            return Ok(NetSample { ids, trials: t + 1 });
        }
        start = end;
    }
    Err(Error::ConstructionFailure {
        trials: params.max_trials,
    })
}

/// Discrepancy-style halving: `m` rounds, each pairing the current set by a
/// random matching and keeping one random endpoint per pair. An odd element
/// passes through. Output size is `ceil(|base| / 2^m)`, sorted.
pub fn build_eps_net_halving<R: Rng + ?Sized>(base: &[u32], m: u32, rng: &mut R) -> Result<Vec<u32>> {
    if m >= usize::BITS || base.len() < (1usize << m) {
        return Err(Error::invalid(format!(
            "halving {m} times needs at least 2^{m} points, got {}",
            base.len()
        )));
    }
    Ok(halve_rounds(base, m, rng))
}

pub(crate) fn halve_rounds<R: Rng + ?Sized>(base: &[u32], rounds: u32, rng: &mut R) -> Vec<u32> {
    let mut cur = base.to_vec();
    for _ in 0..rounds {
        if cur.len() <= 1 {
            break;
        }
        cur.shuffle(rng);
        let mut next = Vec::with_capacity(cur.len().div_ceil(2));
        for pair in cur.chunks(2) {
            match *pair {
                [a, b] => next.push(if rng.random::<bool>() { a } else { b }),
                [a] => next.push(a),
                _ => unreachable!(),
            }
        }
        cur = next;
    }
    cur.sort_unstable();
    cur
}

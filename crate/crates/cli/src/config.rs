// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Flag parsing, optional TOML config, and the resolved run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use henn_core::bench::{Distribution, SyntheticSpec};
use henn_core::epsnet::EpsNetParams;
use henn_core::navgraph::{GraphKind, GraphParams, Reducer};
use henn_core::{HennParams, LayerMode, Metric};
use serde::Deserialize;

use crate::usage;

pub const DEFAULT_EFS: [usize; 6] = [10, 20, 50, 100, 200, 400];

/// Flags shared by every command. Each one may also come from `--config`;
/// flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// Base vectors: a point dump, an fvecs file, or a directory written by `gen`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic data as `n,d,lambda` (`lambda` may be `uniform`).
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Query vectors (fvecs); defaults to `queries.fvecs` beside the dataset.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Ground truth (ivecs); defaults to `groundtruth.ivecs` beside the dataset.
    #[arg(long)]
    pub groundtruth: Option<PathBuf>,
    /// `l2`, `lp:<p>` or `cosine`.
    #[arg(long)]
    pub metric: Option<String>,
    /// Layer decay exponent.
    #[arg(long)]
    pub m: Option<u32>,
    /// Multiplier in the per-layer epsilon schedule.
    #[arg(long)]
    pub c0: Option<f64>,
    /// Rings per verification battery.
    #[arg(long)]
    pub ranges: Option<usize>,
    /// Failure probability of one sampling trial.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Sampling trials per layer before the halving fallback.
    #[arg(long)]
    pub max_trials: Option<usize>,
    /// Highest layer index; 0 derives it from n and m.
    #[arg(long)]
    pub l_max: Option<usize>,
    /// `nsw`, `knn` or `dimred`.
    #[arg(long)]
    pub graph: Option<String>,
    /// NSW out-degree parameter.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub big_m: Option<usize>,
    /// NSW construction beam width.
    #[arg(long)]
    pub efc: Option<usize>,
    /// Out-degree of `knn` graphs.
    #[arg(long)]
    pub knn_k: Option<usize>,
    /// Projection for `dimred` graphs: `pca` or `rp`.
    #[arg(long)]
    pub reducer: Option<String>,
    /// Search beam widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ef: Option<Vec<usize>>,
    /// Neighbors returned per query.
    #[arg(long)]
    pub k: Option<usize>,
    /// Timed repetitions of each query pass.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Number of synthetic queries.
    #[arg(long)]
    pub n_queries: Option<usize>,
    /// Ground-truth depth written by `gen`.
    #[arg(long)]
    pub gt_k: Option<usize>,
    /// `henn` or `baseline`; `bench` runs both when omitted.
    #[arg(long)]
    pub mode: Option<String>,
    /// Sample each layer from the one below (true) or from all points.
    #[arg(long, action = clap::ArgAction::Set)]
    pub nested: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output: directory for `gen`, index file for `build`, CSV for `bench`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recall-bound quantile.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Greedy starts per query for recall bounds.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Graph kinds for `recall-bound`, comma separated (`complete` adds a control).
    #[arg(long, value_delimiter = ',')]
    pub graphs: Option<Vec<String>>,
    /// Largest k in the average-hits table.
    #[arg(long)]
    pub max_k: Option<usize>,
    /// TOML file with any of the flags above (keys use underscores).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl RunArgs {
    /// Fills unset flags from the config file, if any.
    pub fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        let file: RunArgs = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        overlay!(
            self,
            file,
            dataset,
            synthetic,
            queries,
            groundtruth,
            metric,
            m,
            c0,
            ranges,
            phi,
            max_trials,
            l_max,
            graph,
            big_m,
            efc,
            knn_k,
            reducer,
            ef,
            k,
            reps,
            n_queries,
            gt_k,
            mode,
            nested,
            seed,
            out,
            delta,
            starts,
            graphs,
            max_k
        );
        Ok(self)
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Dataset(PathBuf),
    Synthetic(SyntheticSpec),
}

/// Everything a command needs, with defaults applied and values checked.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub source: Source,
    pub metric: Metric,
    pub params: HennParams,
    pub mode: Option<LayerMode>,
    pub efs: Vec<usize>,
    pub k: usize,
    pub reps: usize,
    pub gt_k: usize,
    pub queries: Option<PathBuf>,
    pub groundtruth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub delta: f64,
    pub starts: usize,
    pub graphs: Vec<String>,
    pub max_k: usize,
}

pub fn parse_metric(s: &str) -> Result<Metric> {
    let s = s.trim().to_ascii_lowercase();
    let metric = match s.as_str() {
        "l2" => Metric::L2,
        "cosine" => Metric::Cosine,
        other => {
            let p = other
                .strip_prefix("lp:")
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| usage(format!("unknown metric {other:?}; use l2, lp:<p> or cosine")))?;
            Metric::Lp(p)
        }
    };
    metric.validate().map_err(|e| usage(e.to_string()))?;
    Ok(metric)
}

pub fn metric_name(m: Metric) -> String {
    match m {
        Metric::L2 => "l2".into(),
        Metric::Lp(p) => format!("lp:{p}"),
        Metric::Cosine => "cosine".into(),
    }
}

fn parse_synthetic(s: &str, seed: u64, n_queries: usize) -> Result<SyntheticSpec> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n, d, lambda] = parts[..] else {
        return Err(usage(format!("--synthetic expects n,d,lambda, got {s:?}")));
    };
    let n: usize = n.parse().map_err(|_| usage(format!("bad n {n:?}")))?;
    let d: usize = d.parse().map_err(|_| usage(format!("bad d {d:?}")))?;
    let distribution = if lambda.eq_ignore_ascii_case("uniform") {
        Distribution::Uniform
    } else {
        let lambda: f64 = lambda.parse().map_err(|_| usage(format!("bad lambda {lambda:?}")))?;
        Distribution::Exponential { lambda }
    };
    let spec = SyntheticSpec {
        n,
        d,
        distribution,
        seed,
        n_queries,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn graph_params(args: &RunArgs) -> Result<GraphParams> {
    let kind: GraphKind = args
        .graph
        .as_deref()
        .unwrap_or("nsw")
        .parse()
        .map_err(|e: henn_core::Error| usage(e.to_string()))?;
    Ok(match kind {
        GraphKind::Nsw => {
            let m = args.big_m.unwrap_or(16);
            GraphParams::nsw(m, args.efc.unwrap_or(100).max(m))
        }
        GraphKind::Knn => GraphParams::Knn {
            k: args.knn_k.unwrap_or(16),
        },
        GraphKind::DimredDt => GraphParams::DimredDt {
            reducer: args
                .reducer
                .as_deref()
                .unwrap_or("pca")
                .parse::<Reducer>()
                .map_err(|e| usage(e.to_string()))?,
        },
    })
}

impl RunConfig {
    pub fn resolve(command: &'static str, args: RunArgs, default_queries: usize) -> Result<Self> {
        let args = args.merged()?;
        let seed = args.seed.unwrap_or(0);
        let source = match (&args.dataset, &args.synthetic) {
            (Some(_), Some(_)) => return Err(usage("give either --dataset or --synthetic, not both")),
            (None, None) => {
                return Err(usage(
                    "a dataset is required: --dataset <path> or --synthetic n,d,lambda",
                ))
            }
            (Some(p), None) => Source::Dataset(p.clone()),
            (None, Some(s)) => Source::Synthetic(parse_synthetic(s, seed, args.n_queries.unwrap_or(default_queries))?),
        };
        let metric = parse_metric(args.metric.as_deref().unwrap_or("l2"))?;
        let mode = args
            .mode
            .as_deref()
            .map(str::parse::<LayerMode>)
            .transpose()
            .map_err(|e| usage(e.to_string()))?;
        let defaults = EpsNetParams::default();
        let m = args.m.unwrap_or(4);
        let efs = args.ef.clone().unwrap_or_else(|| DEFAULT_EFS.to_vec());
        if efs.is_empty() || efs.contains(&0) {
            return Err(usage("--ef values must be >= 1"));
        }
        let params = HennParams {
            m,
            l_max: args.l_max.unwrap_or(0),
            eps: EpsNetParams {
                c0: args.c0.unwrap_or(defaults.c0),
                m,
                phi: args.phi.unwrap_or(defaults.phi),
                r_ranges: args.ranges.unwrap_or(defaults.r_ranges),
                max_trials: args.max_trials.unwrap_or(defaults.max_trials),
            },
            graph: graph_params(&args)?,
            ef_search: efs[0],
            layer_mode: mode.unwrap_or(LayerMode::EpsNet),
            nested: args.nested.unwrap_or(true),
            seed,
            ..HennParams::default()
        };
        params.validate().map_err(|e| usage(e.to_string()))?;
        let k = args.k.unwrap_or(10);
        let reps = args.reps.unwrap_or(3);
        let gt_k = args.gt_k.unwrap_or(100);
        if k < 1 || reps < 1 || gt_k < 1 {
            return Err(usage("--k, --reps and --gt-k must be >= 1"));
        }
        let delta = args.delta.unwrap_or(0.9);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(usage(format!("--delta must be in (0, 1), got {delta}")));
        }
        let starts = args.starts.unwrap_or(10);
        let max_k = args.max_k.unwrap_or(20);
        if starts < 1 || max_k < 1 {
            return Err(usage("--starts and --max-k must be >= 1"));
        }
        let cfg = Self {
            command,
            source,
            metric,
            params,
            mode,
            efs,
            k,
            reps,
            gt_k,
            queries: args.queries,
            groundtruth: args.groundtruth,
            out: args.out,
            seed,
            delta,
            starts,
            graphs: args.graphs.unwrap_or_else(|| vec!["nsw".into(), "knn".into()]),
            max_k,
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        if let Source::Dataset(p) = &self.source {
            must_exist(p, "dataset")?;
        }
        for (p, what) in [(&self.queries, "queries"), (&self.groundtruth, "ground truth")] {
            if let Some(p) = p {
                must_exist(p, what)?;
            }
        }
        if let Some(out) = &self.out {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                if !parent.exists() && self.command != "gen" {
                    anyhow::bail!(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("output directory {} does not exist", parent.display())
                    ));
                }
            }
        }
        Ok(())
    }

    /// Directory holding the dataset's companion files.
    pub fn dataset_dir(&self) -> Option<PathBuf> {
        match &self.source {
            Source::Dataset(p) if p.is_dir() => Some(p.clone()),
            Source::Dataset(p) => Some(p.parent().map(Path::to_path_buf).unwrap_or_default()),
            Source::Synthetic(_) => None,
        }
    }
}

fn must_exist(p: &Path, what: &str) -> Result<()> {
    if !p.exists() {
        anyhow::bail!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what} path {} does not exist", p.display())
        ));
    }
    Ok(())
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        write!(f, "command={}", self.command)?;
        match &self.source {
            Source::Dataset(path) => write!(f, " dataset={}", path.display())?,
            Source::Synthetic(s) => write!(
                f,
                " synthetic={},{},{} n_queries={}",
                s.n, s.d, s.distribution, s.n_queries
            )?,
        }
        write!(
            f,
            " metric={} m={} c0={} ranges={} phi={} max_trials={} l_max={} nested={}",
            metric_name(self.metric),
            p.m,
            p.eps.c0,
            p.eps.r_ranges,
            p.eps.phi,
            p.eps.max_trials,
            p.l_max,
            p.nested
        )?;
        match p.graph {
            GraphParams::Nsw { m, ef_construction, .. } => write!(f, " graph=nsw M={m} efc={ef_construction}")?,
            GraphParams::Knn { k } => write!(f, " graph=knn knn_k={k}")?,
            GraphParams::DimredDt { reducer } => write!(f, " graph=dimred reducer={reducer}")?,
        }
        let efs: Vec<String> = self.efs.iter().map(ToString::to_string).collect();
        let mode = self.mode.map_or("henn+baseline".to_string(), |m| m.to_string());
        write!(
            f,
            " mode={mode} ef={} k={} reps={} delta={} starts={} seed={}",
            efs.join(","),
            self.k,
            self.reps,
            self.delta,
            self.starts,
            self.seed
        )
    }
}

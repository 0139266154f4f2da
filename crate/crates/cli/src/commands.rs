// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use henn_core::bench::{gen_synthetic, layer0_recall_bound, pareto_frontier, run_bench, write_csv, BenchRow};
use henn_core::henn::INDEX_MAGIC;
use henn_core::io::{load_dataset, load_fvecs_rows, load_ivecs, save_fvecs, save_ivecs, save_points};
use henn_core::navgraph::{
    build_dimred_dt, build_knn_graph, build_nsw, measure_recall_bound, GraphParams, NavGraph, Reducer,
};
use henn_core::{ground_truth, HennIndex, LayerMode, PointSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{metric_name, RunArgs, RunConfig, Source};
use crate::usage;

pub const BASE_FILE: &str = "base.pts";
pub const QUERIES_FILE: &str = "queries.fvecs";
pub const GT_FILE: &str = "groundtruth.ivecs";
pub const MANIFEST_FILE: &str = "gen.toml";

/// Largest point count accepted for the complete-graph control.
const COMPLETE_MAX_N: usize = 4096;

/// Describes a generated dataset directory.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    d: usize,
    distribution: String,
    lambda: f64,
    seed: u64,
    n_queries: usize,
    gt_k: usize,
    metric: String,
}

fn not_found(msg: String) -> anyhow::Error {
    io::Error::new(io::ErrorKind::NotFound, msg).into()
}

fn ids_of(rows: Vec<Vec<henn_core::Neighbor>>) -> Vec<Vec<u32>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(|nb| nb.id).collect())
        .collect()
}

pub fn gen(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve("gen", args, 1000)?;
    let Source::Synthetic(spec) = cfg.source else {
        return Err(usage("gen needs --synthetic n,d,lambda"));
    };
    let dir = cfg.out.clone().ok_or_else(|| usage("gen needs --out <dir>"))?;
    if spec.n_queries < 1 {
        return Err(usage("--n-queries must be >= 1"));
    }
    let (ps, queries) = gen_synthetic(&spec, cfg.metric)?;
    let gt_k = cfg.gt_k.min(ps.len());
    let truth = ids_of(ground_truth(&ps, &queries, gt_k)?);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    save_points(dir.join(BASE_FILE), &ps)?;
    save_fvecs(dir.join(QUERIES_FILE), &queries)?;
    save_ivecs(dir.join(GT_FILE), &truth)?;
    let manifest = Manifest {
        n: spec.n,
        d: spec.d,
        distribution: spec.distribution.to_string(),
        lambda: spec.distribution.lambda(),
        seed: spec.seed,
        n_queries: spec.n_queries,
        gt_k,
        metric: metric_name(cfg.metric),
    };
    fs::write(dir.join(MANIFEST_FILE), toml::to_string(&manifest)?)?;
    println!(
        "wrote {} points, {} queries and top-{gt_k} ground truth to {}",
        ps.len(),
        queries.len(),
        dir.display()
    );
    Ok(())
}

fn base_path(cfg: &RunConfig) -> Option<PathBuf> {
    match &cfg.source {
        Source::Dataset(p) if p.is_dir() => Some(p.join(BASE_FILE)),
        Source::Dataset(p) => Some(p.clone()),
        Source::Synthetic(_) => None,
    }
}

/// Base points plus, for synthetic sources, the generated queries.
fn load_base(cfg: &RunConfig) -> Result<(PointSet, Option<Vec<Vec<f32>>>)> {
    match &cfg.source {
        Source::Synthetic(spec) => {
            let (ps, qs) = gen_synthetic(spec, cfg.metric)?;
            Ok((ps, Some(qs)))
        }
        Source::Dataset(_) => {
            let path = base_path(cfg).expect("dataset source");
            if !path.exists() {
                return Err(not_found(format!("base vectors not found at {}", path.display())));
            }
            let ps = if is_index_file(&path) {
                HennIndex::load(&path)
                    .with_context(|| format!("loading {}", path.display()))?
                    .points()
                    .clone()
            } else {
                load_dataset(&path, cfg.metric).with_context(|| format!("loading {}", path.display()))?
            };
            Ok((ps, None))
        }
    }
}

fn is_index_file(path: &Path) -> bool {
    let mut magic = [0u8; 8];
    fs::File::open(path)
        .and_then(|mut f| io::Read::read_exact(&mut f, &mut magic))
        .is_ok_and(|()| &magic == INDEX_MAGIC)
}

fn companion(cfg: &RunConfig, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    explicit.clone().or_else(|| cfg.dataset_dir().map(|d| d.join(name)))
}

fn load_queries(cfg: &RunConfig, generated: Option<Vec<Vec<f32>>>) -> Result<Vec<Vec<f32>>> {
    let queries = match generated {
        Some(qs) => qs,
        None => {
            let path = companion(cfg, &cfg.queries, QUERIES_FILE).expect("dataset source");
            if !path.exists() {
                return Err(not_found(format!(
                    "queries not found at {}; pass --queries or run `henn gen` first",
                    path.display()
                )));
            }
            load_fvecs_rows(&path).with_context(|| format!("loading {}", path.display()))?
        }
    };
    if queries.is_empty() {
        return Err(usage("the query set is empty"));
    }
    Ok(queries)
}

fn lambda_of(cfg: &RunConfig) -> f64 {
    match &cfg.source {
        Source::Synthetic(spec) => spec.distribution.lambda(),
        Source::Dataset(_) => cfg
            .dataset_dir()
            .and_then(|d| fs::read_to_string(d.join(MANIFEST_FILE)).ok())
            .and_then(|t| toml::from_str::<Manifest>(&t).ok())
            .map_or(0.0, |m| m.lambda),
    }
}

fn build_index(ps: PointSet, cfg: &RunConfig, mode: LayerMode) -> Result<HennIndex> {
    let params = henn_core::HennParams {
        layer_mode: mode,
        ..cfg.params
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(HennIndex::build(ps, params, &mut rng)?)
}

fn stats_report(idx: &HennIndex) -> String {
    let p = idx.params();
    let s = idx.stats();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "points {} dim {} metric {} mode {} graph {} m {}",
        idx.len(),
        idx.dim(),
        metric_name(idx.points().metric()),
        p.layer_mode,
        idx.graph_kind(),
        p.m
    );
    let _ = writeln!(out, "layers {}", idx.layers().len());
    for (i, l) in s.layers.iter().enumerate() {
        let _ = writeln!(
            out,
            "  layer {i}: size {} eps {:.6} trials {}{}",
            l.size,
            l.eps,
            l.trials,
            if l.fallback { " (halving fallback)" } else { "" }
        );
    }
    let _ = writeln!(
        out,
        "build {:.3}s (sampling {:.3}s, graphs {:.3}s)",
        s.build_s, s.sampling_s, s.graph_s
    );
    let _ = writeln!(
        out,
        "inserts {} deletes {} rebuilds {}",
        s.inserts, s.deletes, s.rebuilds
    );
    let _ = write!(out, "index bytes {}", idx.index_bytes());
    out
}

pub fn build(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve("build", args, 0)?;
    let (ps, _) = load_base(&cfg)?;
    let idx = build_index(ps, &cfg, cfg.params.layer_mode)?;
    println!("{}", stats_report(&idx));
    if let Some(out) = &cfg.out {
        idx.save(out).with_context(|| format!("writing {}", out.display()))?;
        eprintln!("saved index to {}", out.display());
    }
    Ok(())
}

pub fn info(path: &Path) -> Result<()> {
    let idx = HennIndex::load(path).with_context(|| format!("loading {}", path.display()))?;
    println!("{}", stats_report(&idx));
    Ok(())
}

pub fn bench(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve("bench", args, 200)?;
    let (ps, generated) = load_base(&cfg)?;
    let synthetic = generated.is_some();
    let queries = load_queries(&cfg, generated)?;
    let truth = if synthetic {
        ids_of(ground_truth(&ps, &queries, cfg.k.min(ps.len()))?)
    } else {
        let path = companion(&cfg, &cfg.groundtruth, GT_FILE).expect("dataset source");
        if !path.exists() {
            return Err(not_found(format!(
                "ground truth not found at {}; run `henn gen --out <dir>` first or pass --groundtruth",
                path.display()
            )));
        }
        load_ivecs(&path).with_context(|| format!("loading {}", path.display()))?
    };
    if truth.len() != queries.len() {
        return Err(usage(format!(
            "{} queries but {} ground-truth rows",
            queries.len(),
            truth.len()
        )));
    }
    if cfg.k > ps.len() {
        return Err(usage(format!("--k {} exceeds the {} base points", cfg.k, ps.len())));
    }
    if let Some(short) = truth.iter().find(|r| r.len() < cfg.k) {
        return Err(usage(format!(
            "ground truth has depth {} but --k is {}",
            short.len(),
            cfg.k
        )));
    }
    let modes = match cfg.mode {
        Some(m) => vec![m],
        None => vec![LayerMode::EpsNet, LayerMode::Random],
    };
    let rb_queries = &queries[..queries.len().min(100)];
    let lambda = lambda_of(&cfg);
    let mut rows = Vec::new();
    for mode in modes {
        let idx = build_index(ps.clone(), &cfg, mode)?;
        let rho = layer0_recall_bound(&idx, rb_queries, cfg.delta, cfg.starts, cfg.seed)?;
        for &ef in &cfg.efs {
            let r = run_bench(&idx, &queries, &truth, cfg.k, ef, cfg.reps, cfg.seed.wrapping_add(1))?;
            rows.push(BenchRow {
                method: mode.to_string(),
                graph: idx.graph_kind().to_string(),
                n: idx.len(),
                d: idx.dim(),
                lambda,
                ef,
                k: cfg.k,
                recall: r.recall,
                qps: r.qps,
                worst_case_ms: r.worst_case_ms,
                mean_hops: r.mean_hops,
                max_hops: r.max_hops,
                rho_delta: rho,
                build_s: idx.stats().build_s,
                index_bytes: idx.index_bytes(),
            });
        }
    }
    let comment = cfg.to_string();
    match &cfg.out {
        Some(path) => {
            let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            write_csv(file, &comment, &rows, fresh)?;
        }
        None => write_csv(io::stdout().lock(), &comment, &rows, true)?,
    }
    let mut summary = String::from("frontier (recall@k vs QPS):\n");
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.dedup();
    for method in methods {
        let own: Vec<BenchRow> = rows.iter().filter(|r| r.method == method).cloned().collect();
        for r in pareto_frontier(&own) {
            let _ = writeln!(
                summary,
                "  {method:<8} ef {:>5} recall {:.4} qps {:>10.1} mean hops {:.2} rho {}",
                r.ef, r.recall, r.qps, r.mean_hops, r.rho_delta
            );
        }
    }
    if cfg.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn complete_graph(n: usize) -> Result<NavGraph> {
    if n > COMPLETE_MAX_N {
        return Err(usage(format!(
            "the complete-graph control supports at most {COMPLETE_MAX_N} points, got {n}"
        )));
    }
    let nodes: Vec<u32> = (0..n as u32).collect();
    let adj = nodes
        .iter()
        .map(|&u| nodes.iter().copied().filter(|&v| v != u).collect())
        .collect();
    Ok(NavGraph::from_parts(
        GraphParams::Knn {
            k: n.saturating_sub(1).max(1),
        },
        nodes,
        adj,
    )?)
}

pub fn recall_bound(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve("recall-bound", args, 100)?;
    let (ps, generated) = load_base(&cfg)?;
    let queries = load_queries(&cfg, generated)?;
    let ids: Vec<u32> = (0..ps.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut estimates = Vec::new();
    for name in &cfg.graphs {
        let g = match name.trim().to_ascii_lowercase().as_str() {
            "nsw" => {
                let p = match cfg.params.graph {
                    p @ GraphParams::Nsw { .. } => p,
                    _ => GraphParams::nsw(16, 100),
                };
                build_nsw(&ps, &ids, p, &mut rng)?
            }
            "knn" => {
                let k = match cfg.params.graph {
                    GraphParams::Knn { k } => k,
                    _ => 16,
                };
                build_knn_graph(&ps, &ids, k.min(ps.len().saturating_sub(1)).max(1))?
            }
            "dimred" | "dt" => {
                let reducer = match cfg.params.graph {
                    GraphParams::DimredDt { reducer } => reducer,
                    _ => Reducer::Pca,
                };
                build_dimred_dt(&ps, &ids, reducer, &mut rng)?
            }
            "complete" => complete_graph(ps.len())?,
            other => {
                return Err(usage(format!(
                    "unknown graph {other:?}; use nsw, knn, dimred or complete"
                )))
            }
        };
        let est = measure_recall_bound(&g, &ps, &queries, cfg.delta, cfg.starts, &mut rng)?;
        estimates.push((name.trim().to_ascii_lowercase(), est));
    }
    println!("# {cfg}");
    println!("{:<10} {:>10} {:>10}", "graph", format!("rho_{}", cfg.delta), "pooled");
    for (name, est) in &estimates {
        println!("{name:<10} {:>10} {:>10}", est.rho, est.pooled_rho());
    }
    println!();
    print!("{:>4}", "k");
    for (name, _) in &estimates {
        print!(" {name:>10}");
    }
    println!();
    let max_k = cfg.max_k.min(ps.len());
    let curves: Vec<Vec<(usize, f64)>> = estimates.iter().map(|(_, e)| e.hits_curve(max_k)).collect();
    for i in 0..max_k {
        print!("{:>4}", i + 1);
        for c in &curves {
            print!(" {:>10.4}", c[i].1);
        }
        println!();
    }
    io::stdout().flush()?;
    Ok(())
}

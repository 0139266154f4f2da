// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Hierarchical ε-net navigation graphs for approximate nearest-neighbor
//! search, with an HNSW-style random-layer baseline and a benchmark harness.

pub mod bench;
pub mod epsnet;
pub mod error;
pub mod henn;
pub mod io;
pub mod knn;
pub mod navgraph;
pub mod points;

pub use error::{Error, Result};
pub use henn::{build_baseline, build_henn, HennIndex, HennParams, LayerMode, QueryStats};
pub use knn::{brute_force_knn, ground_truth, GroundTruthRow, Neighbor};
pub use points::{distance, Metric, PointSet};

//! Probability masks to vector features, plus DBSCAN clustering and the
//! two-stage tiling used for dataset splits.

mod components;
mod dbscan;
mod extract;
mod trace;

pub use components::{connected_components, Components, Connectivity, UnionFind};
pub use dbscan::{dbscan, local_distance_m, two_stage_tiling, Split, Tiling, LOCAL_EPS_M, TILE_EPS_M};
pub use extract::{extract_solar, extract_turbines, global_window, merged_blobs, Blob, DetectedSolar, DetectedTurbine};
pub use trace::{shoelace, trace_polygon, trace_rings};

//! DBSCAN on lon/lat points with local equirectangular distances, and the
//! two-stage (200 m, then 2 km) clustering that groups turbines into
//! non-overlapping dataset tiles.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{GeoError, LonLat, EARTH_RADIUS_M};

/// Meters between two nearby points (equirectangular at their mean latitude).
pub fn local_distance_m(a: LonLat, b: LonLat) -> f64 {
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let mid = ((a[1] + b[1]) / 2.0).to_radians().cos();
    let dx = (a[0] - b[0]) * mid * k;
    let dy = (a[1] - b[1]) * k;
    dx.hypot(dy)
}

/// Grid bucketing wide enough that every pair within `eps` shares or
/// neighbours a cell.
struct Buckets {
    cells: HashMap<(i64, i64), Vec<usize>>,
    dlat: f64,
    dlon: f64,
}

impl Buckets {
    fn new(points: &[LonLat], eps_m: f64) -> Self {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let dlat = eps_m / k;
        let max_lat = points.iter().map(|p| p[1].abs()).fold(0.0, f64::max) + dlat;
        let dlon = (eps_m / (k * max_lat.min(89.0).to_radians().cos())).min(360.0);
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(((p[0] / dlon).floor() as i64, (p[1] / dlat).floor() as i64)).or_default().push(i);
        }
        Self { cells, dlat, dlon }
    }

    fn neighbours(&self, points: &[LonLat], i: usize, eps_m: f64) -> Vec<usize> {
        let p = points[i];
        let (cx, cy) = ((p[0] / self.dlon).floor() as i64, (p[1] / self.dlat).floor() as i64);
        let mut out = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(v) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(v.iter().copied().filter(|&j| local_distance_m(p, points[j]) <= eps_m));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Cluster ids per point (`None` for noise), numbered in discovery order
/// scanning points by index. With `min_points = 1` every point is a core
/// point and clusters are the components of the eps-neighbourhood graph.
pub fn dbscan(points: &[LonLat], eps_m: f64, min_points: usize) -> Result<Vec<Option<usize>>, GeoError> {
    if !(eps_m > 0.0) {
        return Err(GeoError::Domain(format!("eps {eps_m} must be positive")));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(GeoError::Domain("non-finite point".into()));
    }
    let min_points = min_points.max(1);
    let buckets = Buckets::new(points, eps_m);
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = buckets.neighbours(points, i, eps_m);
        if nb.len() < min_points {
            continue;
        }
        let id = next;
        next += 1;
        label[i] = Some(id);
        let mut stack = nb;
        while let Some(j) = stack.pop() {
            if label[j].is_none() {
                label[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = buckets.neighbours(points, j, eps_m);
            if nb.len() >= min_points {
                stack.extend(nb.into_iter().filter(|&k| !visited[k] || label[k].is_none()));
            }
        }
    }
    Ok(label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiling {
    /// Stage-one group of every point.
    pub group: Vec<usize>,
    /// Tile of every point.
    pub tile: Vec<usize>,
    /// Split of every tile.
    pub splits: Vec<Split>,
}

impl Tiling {
    pub fn tile_count(&self) -> usize {
        self.splits.len()
    }
}

pub const LOCAL_EPS_M: f64 = 200.0;
pub const TILE_EPS_M: f64 = 2000.0;

/// Groups points within 200 m, clusters the group centroids within 2 km into
/// tiles, then draws each tile's split (80/10/10) from a seeded stream.
pub fn two_stage_tiling(points: &[LonLat], seed: u64) -> Result<Tiling, GeoError> {
    let group: Vec<usize> = dbscan(points, LOCAL_EPS_M, 1)?.into_iter().map(|g| g.expect("no noise")).collect();
    let n_groups = group.iter().map(|g| g + 1).max().unwrap_or(0);
    let mut sums = vec![(0.0, 0.0, 0usize); n_groups];
    for (p, &g) in points.iter().zip(&group) {
        sums[g].0 += p[0];
        sums[g].1 += p[1];
        sums[g].2 += 1;
    }
    let centroids: Vec<LonLat> = sums.iter().map(|&(x, y, n)| [x / n as f64, y / n as f64]).collect();
    let group_tile: Vec<usize> =
        dbscan(&centroids, TILE_EPS_M, 1)?.into_iter().map(|g| g.expect("no noise")).collect();
    let n_tiles = group_tile.iter().map(|g| g + 1).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = (0..n_tiles)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.8 {
                Split::Train
            } else if u < 0.9 {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect();
    let tile = group.iter().map(|&g| group_tile[g]).collect();
    Ok(Tiling { group, tile, splits })
}

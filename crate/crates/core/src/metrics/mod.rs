//! Evaluation: pixel and object precision/recall/F2, rank and linear
//! agreement statistics.

mod capacity;

pub use capacity::{
    aggregate_by_country, compare_to_reference, read_reference_table, solar_capacity_mw, wind_capacity_mw,
    CapacityError, CountryAggregate, PowerDensitySchedule, ReferenceComparison, ReferenceRow, Technology, WIND_MW_PER_TURBINE,
};

use serde::{Deserialize, Serialize};

use crate::geo::{lonlat_to_mercator, BitMask, GeoError, GeoPolygon, GeoTransform, LonLat};
use crate::vectorize::local_distance_m;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("inputs differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("{0} has no variation")]
    Degenerate(&'static str),
    #[error("non-finite value")]
    NonFinite,
}

/// F-beta with beta = 2; zero when both inputs are zero.
pub fn f2(precision: f64, recall: f64) -> f64 {
    let d = 4.0 * precision + recall;
    if d == 0.0 {
        0.0
    } else {
        5.0 * precision * recall / d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
}

impl Scores {
    /// Precision is 0 without predictions and recall 0 without truth, except
    /// that two empty sets agree perfectly.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        if tp + fp + fn_ == 0 {
            return Self { tp, fp, fn_, precision: 1.0, recall: 1.0, f2: 1.0 };
        }
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let (precision, recall) = (ratio(tp, fp), ratio(tp, fn_));
        Self { tp, fp, fn_, precision, recall, f2: f2(precision, recall) }
    }

    /// Sums counts of several evaluations.
    pub fn pooled(parts: &[Scores]) -> Self {
        let (tp, fp, fn_) = parts.iter().fold((0, 0, 0), |a, s| (a.0 + s.tp, a.1 + s.fp, a.2 + s.fn_));
        Self::from_counts(tp, fp, fn_)
    }
}

pub fn pixel_metrics(pred: &BitMask, truth: &BitMask) -> Result<Scores, GeoError> {
    let tp = pred.intersection_count(truth)?;
    Ok(Scores::from_counts(tp, pred.count_ones() - tp, truth.count_ones() - tp))
}

/// Pixels across the longer side of the grid used to compare two polygons.
const IOU_GRID: f64 = 512.0;

fn merc_bbox(p: &GeoPolygon) -> [f64; 4] {
    let [x0, y0, x1, y1] = p.bbox();
    let (a, b) = lonlat_to_mercator(x0, y0);
    let (c, d) = lonlat_to_mercator(x1, y1);
    [a, b, c, d]
}

/// Intersection over union of two polygons, measured by rasterizing both onto
/// a shared grid of about 512 pixels across their joint extent.
pub fn polygon_iou(a: &GeoPolygon, b: &GeoPolygon) -> f64 {
    let (ba, bb) = (merc_bbox(a), merc_bbox(b));
    if ba[2] < bb[0] || bb[2] < ba[0] || ba[3] < bb[1] || bb[3] < ba[1] {
        return 0.0;
    }
    let (x0, y0) = (ba[0].min(bb[0]), ba[1].min(bb[1]));
    let (x1, y1) = (ba[2].max(bb[2]), ba[3].max(bb[3]));
    let px = ((x1 - x0).max(y1 - y0) / IOU_GRID).max(1e-9);
    let w = ((x1 - x0) / px).ceil() as usize + 1;
    let h = ((y1 - y0) / px).ceil() as usize + 1;
    let t = GeoTransform { origin_x: x0, origin_y: y1, pixel_size: px, width: w, height: h };
    let (ma, mb) = (a.rasterize(&t), b.rasterize(&t));
    let union = ma.union_count(&mb).expect("same grid");
    if union == 0 {
        return 0.0;
    }
    ma.intersection_count(&mb).expect("same grid") as f64 / union as f64
}

/// Greedy one-to-one matching over candidate pairs sorted by key (smaller
/// is better); returns matched (pred, truth) pairs.
fn greedy_match(mut pairs: Vec<(f64, usize, usize)>, n_pred: usize, n_truth: usize) -> Vec<(usize, usize)> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_p, mut used_t) = (vec![false; n_pred], vec![false; n_truth]);
    let mut out = Vec::new();
    for (_, p, t) in pairs {
        if !used_p[p] && !used_t[t] {
            used_p[p] = true;
            used_t[t] = true;
            out.push((p, t));
        }
    }
    out
}

/// Solar object matching: pairs with polygon IoU of at least `min_iou`,
/// best first, one-to-one.
pub fn match_polygons(pred: &[GeoPolygon], truth: &[GeoPolygon], min_iou: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let v = polygon_iou(p, t);
            if v >= min_iou && v > 0.0 {
                pairs.push((-v, i, j));
            }
        }
    }
    greedy_match(pairs, pred.len(), truth.len())
}

/// Wind object matching: pairs within `max_m` meters, nearest first,
/// one-to-one.
pub fn match_points(pred: &[LonLat], truth: &[LonLat], max_m: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, &p) in pred.iter().enumerate() {
        for (j, &t) in truth.iter().enumerate() {
            let d = local_distance_m(p, t);
            if d <= max_m {
                pairs.push((d, i, j));
            }
        }
    }
    greedy_match(pairs, pred.len(), truth.len())
}

pub fn object_scores(matched: usize, n_pred: usize, n_truth: usize) -> Scores {
    Scores::from_counts(matched, n_pred - matched, n_truth - matched)
}

pub const SOLAR_MATCH_IOU: f64 = 0.5;
pub const WIND_MATCH_M: f64 = 200.0;

pub fn solar_object_metrics(pred: &[GeoPolygon], truth: &[GeoPolygon], min_iou: f64) -> Scores {
    object_scores(match_polygons(pred, truth, min_iou).len(), pred.len(), truth.len())
}

pub fn wind_object_metrics(pred: &[LonLat], truth: &[LonLat], max_m: f64) -> Scores {
    object_scores(match_points(pred, truth, max_m).len(), pred.len(), truth.len())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Length(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort { need: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Pairs tied within runs of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}

/// Merge sort counting inversions (strictly decreasing pairs).
fn sort_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count(&mut v[..mid], &mut buf[..mid]) + sort_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = n * (n - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    if n1 == n0 {
        return Err(StatsError::Degenerate("x"));
    }
    if n2 == n0 {
        return Err(StatsError::Degenerate("y"));
    }
    // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok(num / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt())
}

/// Squared Pearson correlation.
pub fn pearson_r2(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::Degenerate("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::Degenerate("y"));
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f2_examples() {
        assert!((f2(0.5719, 0.8059) - 0.7450).abs() < 5e-4);
        assert!((f2(0.2121, 0.8349) - 0.5260).abs() < 5e-4);
        assert_eq!(f2(0.0, 0.0), 0.0);
    }

    #[test]
    fn kendall_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(kendall_tau(&x, &[1.0; 4]).is_err());
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson_r2(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pearson_r2(&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]).unwrap(), 0.0);
        assert!(pearson_r2(&x, &[2.0; 5]).is_err());
    }

    #[test]
    fn polygon_iou_of_offset_squares() {
        let a = GeoPolygon::rectangle([0.0, 0.0], [0.02, 0.02]).unwrap();
        let b = GeoPolygon::rectangle([0.01, 0.0], [0.03, 0.02]).unwrap();
        assert!((polygon_iou(&a, &a) - 1.0).abs() < 1e-9);
        assert!((polygon_iou(&a, &b) - 1.0 / 3.0).abs() < 0.01);
        let far = GeoPolygon::rectangle([1.0, 1.0], [1.01, 1.01]).unwrap();
        assert_eq!(polygon_iou(&a, &far), 0.0);
    }

    #[test]
    fn greedy_takes_best_first() {
        let a = [0.0, 0.0];
        let near = [0.0005, 0.0];
        let mid = [0.001, 0.0];
        // both predictions are equally near; ties go to the lower index
        let m = match_points(&[a, mid], &[near], 200.0);
        assert_eq!(m, vec![(0, 0)]);
        assert_eq!(wind_object_metrics(&[a, mid], &[near], 200.0).precision, 0.5);
    }
}

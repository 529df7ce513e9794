//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use renewwatch::geo::{BitMask, LonLat};
use renewwatch::vectorize::{local_distance_m, Connectivity};

/// Relabels a partition by first occurrence so equal partitions compare
/// equal regardless of id numbering. `None` entries stay `None`.
pub fn canonical<T: Copy + Eq + std::hash::Hash>(labels: &[Option<T>]) -> Vec<Option<usize>> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|v| {
                let n = map.len();
                *map.entry(v).or_insert(n)
            })
        })
        .collect()
}

/// Breadth-first flood fill from every unvisited set pixel.
pub fn flood_fill(mask: &BitMask, conn: Connectivity) -> Vec<Option<usize>> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = vec![None; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !mask.get_index(start) || out[start].is_some() {
            continue;
        }
        out[start] = Some(next);
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            let (c, r) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in conn.offsets() {
                let (x, y) = (c + dx, r + dy);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let j = y as usize * w + x as usize;
                if mask.get_index(j) && out[j].is_none() {
                    out[j] = Some(next);
                    q.push_back(j);
                }
            }
        }
        next += 1;
    }
    out
}

/// Components of the graph joining every pair within `eps_m`, by brute force.
pub fn eps_graph_components(points: &[LonLat], eps_m: f64) -> Vec<Option<usize>> {
    let n = points.len();
    let mut out = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if out[s].is_some() {
            continue;
        }
        out[s] = Some(next);
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if out[j].is_none() && local_distance_m(points[i], points[j]) <= eps_m {
                    out[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    out
}

/// Kendall's tau-b from all O(n²) pairs.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    let n = x.len();
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() as i64 * i64::from(x[i] != x[j]);
            let dy = (y[i] - y[j]).signum() as i64 * i64::from(y[i] != y[j]);
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tx += 1,
                (_, 0) => ty += 1,
                _ if dx == dy => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let a = (conc + disc + tx) as f64;
    let b = (conc + disc + ty) as f64;
    (conc - disc) as f64 / (a * b).sqrt()
}

/// Squared Pearson correlation from the textbook sums.
pub fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

/// Index of the nearest seed for every pixel, ties to the lower index.
pub fn nearest_seed(width: usize, height: usize, seeds: &[(usize, usize)]) -> Vec<u32> {
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let mut best = (u64::MAX, 0u32);
            for (k, &(sc, sr)) in seeds.iter().enumerate() {
                let dx = c as i64 - sc as i64;
                let dy = r as i64 - sr as i64;
                let d = (dx * dx + dy * dy) as u64;
                if d < best.0 {
                    best = (d, k as u32);
                }
            }
            out.push(best.1);
        }
    }
    out
}

/// Central finite difference of `f` at every coordinate of `x`.
pub fn central_gradient(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            v[i] = x[i] + h;
            let up = f(&v);
            v[i] = x[i] - h;
            let down = f(&v);
            v[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

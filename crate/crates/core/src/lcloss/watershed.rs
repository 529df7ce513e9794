//! Marker-based watershed on the Euclidean distance to point seeds.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::geo::BitMask;

use super::{LcError, PointAnnotation};

#[derive(Debug, Clone, PartialEq)]
pub struct WatershedResult {
    pub width: usize,
    pub height: usize,
    /// Basin (annotation index) of every pixel, boundary pixels included.
    pub basin: Vec<u32>,
    /// Pixels where two basins meet; they belong to no region.
    pub boundary: BitMask,
}

impl WatershedResult {
    /// Region id of a pixel, `None` on the boundary.
    pub fn region(&self, col: usize, row: usize) -> Option<u32> {
        (!self.boundary.get(col, row)).then(|| self.basin[row * self.width + col])
    }

    /// Distinct basins among a pixel and its 4-neighbours.
    pub fn adjoining_basins(&self, col: usize, row: usize) -> usize {
        let mut seen = [u32::MAX; 5];
        let mut n = 0;
        for (c, r) in neighbours4(col, row, self.width, self.height).chain(std::iter::once((col, row))) {
            let b = self.basin[r * self.width + c];
            if !seen[..n].contains(&b) {
                seen[n] = b;
                n += 1;
            }
        }
        n
    }
}

pub(crate) fn neighbours4(col: usize, row: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (c, r) = (col as i64, row as i64);
    [(c - 1, r), (c + 1, r), (c, r - 1), (c, r + 1)]
        .into_iter()
        .filter(move |&(x, y)| x >= 0 && y >= 0 && x < w as i64 && y < h as i64)
        .map(|(x, y)| (x as usize, y as usize))
}

fn d2(a: (usize, usize), b: (usize, usize)) -> u64 {
    let dx = a.0 as i64 - b.0 as i64;
    let dy = a.1 as i64 - b.1 as i64;
    (dx * dx + dy * dy) as u64
}

/// Basins of the Euclidean distance field seeded at the annotations.
///
/// Basin membership is the exact feature transform: each pixel joins its
/// nearest seed, ties going to the lower id. A priority flood from the seeds
/// then visits pixels in order of (squared distance, basin, index); a pixel
/// is a boundary pixel when a 4-neighbour visited before it lies in another
/// basin. Seeds themselves are never boundary pixels, even when two
/// annotations touch. Every pixel has a neighbour strictly closer to its
/// seed, so the flood order is the global key order.
pub fn watershed_split(ann: &PointAnnotation) -> Result<WatershedResult, LcError> {
    if ann.points.is_empty() {
        return Err(LcError::NoAnnotations);
    }
    let (w, h) = (ann.width, ann.height);
    let mut basin = vec![0u32; w * h];
    let mut dist = vec![u64::MAX; w * h];
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            for (id, &s) in ann.points.iter().enumerate() {
                let d = d2((col, row), s);
                if d < dist[i] {
                    dist[i] = d;
                    basin[i] = id as u32;
                }
            }
        }
    }
    let mut visited = vec![false; w * h];
    let mut queued = vec![false; w * h];
    let mut boundary = BitMask::new(w, h);
    let mut heap = BinaryHeap::new();
    for &(c, r) in &ann.points {
        let i = r * w + c;
        queued[i] = true;
        heap.push(Reverse((0u64, basin[i], i)));
    }
    while let Some(Reverse((_, id, idx))) = heap.pop() {
        visited[idx] = true;
        let (col, row) = (idx % w, idx / w);
        for (c, r) in neighbours4(col, row, w, h) {
            let j = r * w + c;
            if visited[j] {
                if basin[j] != id && dist[idx] > 0 {
                    boundary.set(col, row, true);
                }
            } else if !queued[j] {
                queued[j] = true;
                heap.push(Reverse((dist[j], basin[j], j)));
            }
        }
    }
    Ok(WatershedResult { width: w, height: h, basin, boundary })
}

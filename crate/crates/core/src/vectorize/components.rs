//! Connected-component labeling with a two-pass union-find.

use serde::{Deserialize, Serialize};

use crate::geo::BitMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    /// Already-visited neighbours in raster order.
    fn backward(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
        }
    }

    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        }
    }
}

/// Disjoint-set forest with path halving; `union` keeps the smaller root so
/// representatives are the minimum member.
#[derive(Debug, Clone, Default)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn push(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Region labels: 0 for unset pixels, 1..=count numbered in raster order of
/// each region's first pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl Components {
    pub fn label(&self, col: usize, row: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Mask of one region.
    pub fn region_mask(&self, label: u32) -> BitMask {
        BitMask::from_fn(self.width, self.height, |c, r| self.labels[r * self.width + c] == label)
    }

    /// Pixel count per label (index 0 unused).
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count + 1];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }
}

pub fn connected_components(mask: &BitMask, conn: Connectivity) -> Components {
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = vec![0usize; w * h];
    let mut uf = UnionFind::new(1);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(c, r) {
                continue;
            }
            let mut label = 0;
            for &(dx, dy) in conn.backward() {
                let (x, y) = (c as i64 + dx, r as i64 + dy);
                if x < 0 || y < 0 || x >= w as i64 {
                    continue;
                }
                let l = provisional[y as usize * w + x as usize];
                if l == 0 {
                    continue;
                }
                if label == 0 {
                    label = l;
                } else {
                    uf.union(label, l);
                }
            }
            if label == 0 {
                label = uf.push();
            }
            provisional[r * w + c] = label;
        }
    }
    // provisional labels are created in raster order and roots are minima,
    // so numbering roots on first sight keeps raster order
    let mut map = vec![0u32; uf.len()];
    let mut count = 0u32;
    let mut labels = vec![0u32; w * h];
    for (i, &p) in provisional.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let root = uf.find(p);
        if map[root] == 0 {
            count += 1;
            map[root] = count;
        }
        labels[i] = map[root];
    }
    Components { width: w, height: h, labels, count: count as usize }
}

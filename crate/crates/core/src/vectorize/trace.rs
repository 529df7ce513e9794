//! Pixel-boundary tracing of a region into polygon rings.
//!
//! Boundary edges run along pixel sides with the region on their left (in
//! y-down pixel space). Where two region pixels touch only diagonally the
//! vertex has two outgoing edges; the turn is chosen to match the region's
//! connectivity, and the corner is cut by a quarter pixel on both passes so
//! the ring never touches itself.

use std::collections::HashMap;

use crate::geo::{BitMask, GeoError, GeoPolygon, GeoTransform, LonLat, Properties};

use super::Connectivity;

/// Corner cut at diagonal contacts, in pixels.
const CHAMFER: f64 = 0.25;

type Pt = (i64, i64);

#[derive(Debug, Clone, Copy)]
struct Edge {
    from: Pt,
    dir: Pt,
}

fn right(d: Pt) -> Pt {
    (-d.1, d.0)
}

fn left(d: Pt) -> Pt {
    (d.1, -d.0)
}

/// Rings in pixel-corner coordinates: outer rings have negative shoelace area
/// in y-down space, holes positive.
pub fn trace_rings(mask: &BitMask, conn: Connectivity) -> Vec<Vec<(f64, f64)>> {
    let inside = |c: i64, r: i64| mask.get_checked(c, r);
    let mut edges = Vec::new();
    for (c, r) in mask.iter_pixels() {
        let (c, r) = (c as i64, r as i64);
        if !inside(c, r - 1) {
            edges.push(Edge { from: (c + 1, r), dir: (-1, 0) });
        }
        if !inside(c - 1, r) {
            edges.push(Edge { from: (c, r), dir: (0, 1) });
        }
        if !inside(c, r + 1) {
            edges.push(Edge { from: (c, r + 1), dir: (1, 0) });
        }
        if !inside(c + 1, r) {
            edges.push(Edge { from: (c + 1, r + 1), dir: (0, -1) });
        }
    }
    let mut outgoing: HashMap<Pt, Vec<usize>> = HashMap::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        outgoing.entry(e.from).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let e = edges[cur];
            let v = (e.from.0 + e.dir.0, e.from.1 + e.dir.1);
            let outs = &outgoing[&v];
            let next = if outs.len() == 1 {
                outs[0]
            } else {
                let want = match conn {
                    Connectivity::Eight => right(e.dir),
                    Connectivity::Four => left(e.dir),
                };
                *outs.iter().find(|&&i| edges[i].dir == want).expect("saddle has both turns")
            };
            let d_out = edges[next].dir;
            let (vx, vy) = (v.0 as f64, v.1 as f64);
            if outs.len() > 1 {
                ring.push((vx - CHAMFER * e.dir.0 as f64, vy - CHAMFER * e.dir.1 as f64));
                ring.push((vx + CHAMFER * d_out.0 as f64, vy + CHAMFER * d_out.1 as f64));
            } else if d_out != e.dir {
                ring.push((vx, vy));
            }
            cur = next;
            if cur == start {
                break;
            }
        }
        rings.push(ring);
    }
    rings
}

/// Signed shoelace area of an open ring.
pub fn shoelace(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

/// Polygon of a single connected region (holes preserved) with vertices in
/// lon/lat through `transform`.
pub fn trace_polygon(
    region: &BitMask,
    transform: &GeoTransform,
    conn: Connectivity,
    properties: Properties,
) -> Result<GeoPolygon, GeoError> {
    if region.is_empty() {
        return Err(GeoError::InvalidGeometry("cannot trace an empty region".into()));
    }
    let rings = trace_rings(region, conn);
    let to_ll = |ring: &[(f64, f64)]| -> Vec<LonLat> {
        ring.iter()
            .map(|&(x, y)| {
                let (lon, lat) = transform.pixel_to_lonlat(x, y);
                [lon, lat]
            })
            .collect()
    };
    let (outer, holes): (Vec<_>, Vec<_>) = rings.iter().partition(|r| shoelace(r) < 0.0);
    if outer.len() != 1 {
        return Err(GeoError::InvalidGeometry(format!("region has {} outer boundaries", outer.len())));
    }
    let mut poly = GeoPolygon::new(to_ll(outer[0]), holes.iter().map(|r| to_ll(r)).collect())?;
    poly.properties = properties;
    Ok(poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_block_is_a_square() {
        let m = BitMask::from_fn(5, 5, |c, r| (1..4).contains(&c) && (1..4).contains(&r));
        let rings = trace_rings(&m, Connectivity::Eight);
        assert_eq!(rings.len(), 1);
        assert_eq!(rings[0].len(), 4);
        assert_eq!(shoelace(&rings[0]), -9.0);
    }

    #[test]
    fn ring_has_a_hole() {
        let m = BitMask::from_fn(5, 5, |c, r| c >= 1 && c <= 3 && r >= 1 && r <= 3 && !(c == 2 && r == 2));
        let rings = trace_rings(&m, Connectivity::Eight);
        let mut areas: Vec<f64> = rings.iter().map(|r| shoelace(r)).collect();
        areas.sort_by(f64::total_cmp);
        assert_eq!(areas, vec![-9.0, 1.0]);
    }

    #[test]
    fn diagonal_contact_is_chamfered() {
        let m = BitMask::from_pixels(3, 3, [(0, 0), (1, 1)]);
        let eight = trace_rings(&m, Connectivity::Eight);
        assert_eq!(eight.len(), 1);
        // two pixels plus the two small triangles bridging the contact
        assert!((shoelace(&eight[0]) + 2.0 + CHAMFER * CHAMFER).abs() < 1e-12);
        let four = trace_rings(&m, Connectivity::Four);
        assert_eq!(four.len(), 2);
    }
}

//! Localization-based counting loss for point-supervised turbine
//! segmentation: patch, point, split and false-positive terms, with the
//! analytic gradient with respect to the pre-sigmoid scores.

mod watershed;

pub use watershed::{watershed_split, WatershedResult};

use serde::{Deserialize, Serialize};

pub const EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LcError {
    #[error("annotation ({0}, {1}) outside a {2}x{3} patch")]
    OutOfBounds(usize, usize, usize, usize),
    #[error("duplicate annotation at ({0}, {1})")]
    Duplicate(usize, usize),
    #[error("watershed needs at least one annotation")]
    NoAnnotations,
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
}

/// Annotated turbine pixels (col, row) of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PointAnnotation {
    pub width: usize,
    pub height: usize,
    pub points: Vec<(usize, usize)>,
}

impl PointAnnotation {
    pub fn new(width: usize, height: usize, points: Vec<(usize, usize)>) -> Result<Self, LcError> {
        let mut seen = std::collections::HashSet::new();
        for &(c, r) in &points {
            if c >= width || r >= height {
                return Err(LcError::OutOfBounds(c, r, width, height));
            }
            if !seen.insert((c, r)) {
                return Err(LcError::Duplicate(c, r));
            }
        }
        Ok(Self { width, height, points })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// How the patch term reduces per-pixel probabilities to one presence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchReduction {
    /// At least one pixel must fire.
    #[default]
    Max,
    /// Mean probability over the patch.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub patch_term: f64,
    pub point_term: f64,
    pub split_term: f64,
    pub fp_term: f64,
    pub total: f64,
    /// Multiplier applied to each pixel in the false-positive term (0 on
    /// annotated pixels).
    pub fp_weight_map: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn nll(p: f64) -> f64 {
    -p.max(EPS).ln()
}

/// Per-pixel false-positive multipliers: `fp_weights` (default 1) with
/// annotated pixels zeroed.
fn fp_map(ann: &PointAnnotation, fp_weights: Option<&[f64]>) -> Result<Vec<f64>, LcError> {
    let mut m = match fp_weights {
        Some(w) if w.len() != ann.len() => return Err(LcError::Length { expected: ann.len(), got: w.len() }),
        Some(w) => w.to_vec(),
        None => vec![1.0; ann.len()],
    };
    for &(c, r) in &ann.points {
        m[r * ann.width + c] = 0.0;
    }
    Ok(m)
}

/// Boundary pixels with their split weights.
fn split_pixels(ann: &PointAnnotation) -> Vec<(usize, f64)> {
    if ann.points.len() < 2 {
        return Vec::new();
    }
    let ws = watershed_split(ann).expect("non-empty annotations");
    ws.boundary
        .iter_pixels()
        .map(|(c, r)| (r * ann.width + c, ws.adjoining_basins(c, r) as f64))
        .collect()
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn breakdown(
    probs: &[f64],
    ann: &PointAnnotation,
    fp_weights: Option<&[f64]>,
    reduction: PatchReduction,
) -> Result<(LossBreakdown, Vec<(usize, f64)>), LcError> {
    if probs.len() != ann.len() {
        return Err(LcError::Length { expected: ann.len(), got: probs.len() });
    }
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(LcError::Probability(bad));
    }
    let presence = match reduction {
        PatchReduction::Max => probs[argmax(probs)],
        PatchReduction::Mean => probs.iter().sum::<f64>() / probs.len() as f64,
    };
    let patch_term = if ann.is_empty() { nll(1.0 - presence) } else { nll(presence) };
    let point_term: f64 = ann.points.iter().map(|&(c, r)| nll(probs[r * ann.width + c])).sum();
    let split = split_pixels(ann);
    let split_term: f64 = split.iter().map(|&(i, w)| w * nll(1.0 - probs[i])).sum();
    let fp_weight_map = fp_map(ann, fp_weights)?;
    let fp_term: f64 = probs.iter().zip(&fp_weight_map).map(|(&p, &m)| if m == 0.0 { 0.0 } else { m * nll(1.0 - p) }).sum();
    let total = patch_term + point_term + split_term + fp_term;
    Ok((LossBreakdown { patch_term, point_term, split_term, fp_term, total, fp_weight_map }, split))
}

/// Loss on target-class probabilities (row-major, one per pixel).
pub fn lc_loss(
    probs: &[f64],
    ann: &PointAnnotation,
    fp_weights: Option<&[f64]>,
    reduction: PatchReduction,
) -> Result<LossBreakdown, LcError> {
    breakdown(probs, ann, fp_weights, reduction).map(|(b, _)| b)
}

/// Loss and its gradient with respect to the logits `scores`, where the
/// target probability is `sigmoid(score)`.
pub fn lc_loss_gradient(
    scores: &[f64],
    ann: &PointAnnotation,
    fp_weights: Option<&[f64]>,
    reduction: PatchReduction,
) -> Result<(LossBreakdown, Vec<f64>), LcError> {
    let probs: Vec<f64> = scores.iter().map(|&z| sigmoid(z)).collect();
    let (b, split) = breakdown(&probs, ann, fp_weights, reduction)?;
    let mut g = vec![0.0; probs.len()];
    // d(-log p)/dz = -(1-p) and d(-log(1-p))/dz = p, zero where the clamp is active
    let pos = |p: f64| if p > EPS { -(1.0 - p) } else { 0.0 };
    let neg = |p: f64| if 1.0 - p > EPS { p } else { 0.0 };
    match reduction {
        PatchReduction::Max => {
            let j = argmax(&probs);
            g[j] += if ann.is_empty() { neg(probs[j]) } else { pos(probs[j]) };
        }
        PatchReduction::Mean => {
            let n = probs.len() as f64;
            let m = probs.iter().sum::<f64>() / n;
            let outer = if ann.is_empty() {
                if 1.0 - m > EPS { 1.0 / (1.0 - m) } else { 0.0 }
            } else if m > EPS {
                -1.0 / m
            } else {
                0.0
            };
            for (gi, &p) in g.iter_mut().zip(&probs) {
                *gi += outer * p * (1.0 - p) / n;
            }
        }
    }
    for &(c, r) in &ann.points {
        let i = r * ann.width + c;
        g[i] += pos(probs[i]);
    }
    for &(i, w) in &split {
        g[i] += w * neg(probs[i]);
    }
    for (i, &m) in b.fp_weight_map.iter().enumerate() {
        if m != 0.0 {
            g[i] += m * neg(probs[i]);
        }
    }
    Ok((b, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_cost_nothing() {
        let none = PointAnnotation::new(4, 4, vec![]).unwrap();
        assert_eq!(lc_loss(&[0.0; 16], &none, None, PatchReduction::Max).unwrap().total, 0.0);
        let one = PointAnnotation::new(4, 4, vec![(1, 2)]).unwrap();
        let mut p = vec![0.0; 16];
        p[9] = 1.0;
        assert_eq!(lc_loss(&p, &one, None, PatchReduction::Max).unwrap().total, 0.0);
    }

    #[test]
    fn split_term_needs_two_points() {
        let one = PointAnnotation::new(8, 8, vec![(3, 3)]).unwrap();
        assert_eq!(lc_loss(&[0.5; 64], &one, None, PatchReduction::Max).unwrap().split_term, 0.0);
    }

    #[test]
    fn fp_weights_scale_linearly() {
        let ann = PointAnnotation::new(4, 4, vec![(0, 0)]).unwrap();
        let z: Vec<f64> = (0..16).map(|i| i as f64 * 0.3 - 2.0).collect();
        let one = vec![1.0; 16];
        let two = vec![2.0; 16];
        let (b1, g1) = lc_loss_gradient(&z, &ann, Some(&one), PatchReduction::Max).unwrap();
        let (b2, g2) = lc_loss_gradient(&z, &ann, Some(&two), PatchReduction::Max).unwrap();
        assert!((b2.fp_term - 2.0 * b1.fp_term).abs() < 1e-12);
        // pixel 5 is neither annotated, argmax nor boundary
        assert!((g2[5] - 2.0 * g1[5]).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(PointAnnotation::new(4, 4, vec![(4, 0)]).is_err());
        assert!(PointAnnotation::new(4, 4, vec![(1, 1), (1, 1)]).is_err());
        let ann = PointAnnotation::new(2, 2, vec![]).unwrap();
        assert!(matches!(lc_loss(&[0.1, 1.2, 0.0, 0.0], &ann, None, PatchReduction::Max), Err(LcError::Probability(_))));
        assert!(lc_loss(&[0.1; 3], &ann, None, PatchReduction::Max).is_err());
    }
}

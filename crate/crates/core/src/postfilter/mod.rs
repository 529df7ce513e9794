//! Second-stage false-positive filter: a linear SVM over pooled object
//! features, class-weighted and thresholded for precision on a held-out fold.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cleaning::Verdict;
use crate::dataset::{coverage, global_transform};
use crate::geo::{atomic_write, BitMask, GeoError, GeoFeature, ImagerySource, Quarter};
use crate::scoring::{MosaiksBank, ScoreError};

const FORMAT: &str = "renewwatch-filter-model";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("filter training needs both verdicts; got {keep} true and {reject} false positives")]
    SingleClass { keep: usize, reject: usize },
    #[error("feature dimension {got} does not match {want}")]
    Dimension { got: usize, want: usize },
    #[error("no features for labeled object {0}")]
    MissingFeatures(String),
    #[error("non-finite feature in {0}")]
    NonFinite(String),
    #[error("{path}: {msg}")]
    Persist { path: PathBuf, msg: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Multipliers on the hinge loss of each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassWeights {
    pub keep: f64,
    pub reject: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self { keep: 1.0, reject: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub class_weights: ClassWeights,
    /// L2 strength on the weights (the bias is not regularized).
    pub l2: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Fraction of labeled objects held out to place the threshold.
    pub holdout_fraction: f64,
    /// Keep-precision the threshold must reach on the held-out fold.
    pub target_precision: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            class_weights: ClassWeights::default(),
            l2: 1e-3,
            iterations: 2000,
            learning_rate: 0.5,
            holdout_fraction: 0.25,
            target_precision: 0.95,
            seed: 29,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::Config(m.into()));
        if !(self.class_weights.keep > 0.0 && self.class_weights.reject > 0.0)
            || !self.class_weights.keep.is_finite()
            || !self.class_weights.reject.is_finite()
        {
            return bad("class weights must be positive and finite");
        }
        if !(self.l2 > 0.0 && self.l2.is_finite()) {
            return bad("l2 must be positive");
        }
        if self.iterations == 0 || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("need at least one iteration and a positive learning rate");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must be in [0, 1)");
        }
        if !(self.target_precision > 0.0 && self.target_precision <= 1.0) {
            return bad("target_precision must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTraining {
    pub samples: usize,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub seed: u64,
    pub target_precision: f64,
    /// Keep-precision on the held-out fold at the chosen threshold, if the
    /// fold had any kept objects.
    pub holdout_precision: Option<f64>,
    pub target_met: bool,
    /// Fraction of training objects on the wrong side of the zero margin.
    pub training_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub decision_threshold: f64,
    pub class_weights: ClassWeights,
    pub training: FilterTraining,
}

impl FilterModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Signed SVM score; objects with score ≥ threshold are kept.
    pub fn score(&self, features: &[f32]) -> Result<f64, FilterError> {
        if features.len() != self.dim() {
            return Err(FilterError::Dimension { got: features.len(), want: self.dim() });
        }
        Ok(self.bias
            + features
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((&x, m), s), w)| w * (f64::from(x) - m) / s)
                .sum::<f64>())
    }

    pub fn keeps(&self, features: &[f32]) -> Result<bool, FilterError> {
        Ok(self.score(features)? >= self.decision_threshold)
    }

    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            version: u32,
            #[serde(flatten)]
            model: &'a FilterModel,
        }
        let bytes = serde_json::to_vec_pretty(&Doc { format: FORMAT, version: VERSION, model: self })
            .expect("filter serializes");
        atomic_write(path, &bytes).map_err(|e| FilterError::Persist { path: path.into(), msg: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            #[serde(flatten)]
            model: FilterModel,
        }
        let err = |msg: String| FilterError::Persist { path: path.into(), msg };
        let bytes = fs::read(path).map_err(|e| err(e.to_string()))?;
        let doc: Doc = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(err(format!("unsupported format {} v{}", doc.format, doc.version)));
        }
        let m = doc.model;
        let d = m.weights.len();
        if m.mean.len() != d || m.scale.len() != d || m.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(err("inconsistent model vectors".into()));
        }
        Ok(m)
    }
}

/// Whether an object id falls in the held-out fold; hashing the id keeps
/// the split independent of input order and of duplicated rows.
fn in_holdout(id: &str, seed: u64, fraction: f64) -> bool {
    if fraction <= 0.0 {
        return false;
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    let u = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) >> 11;
    (u as f64 / (1u64 << 53) as f64) < fraction
}

struct Labeled<'a> {
    x: &'a [f32],
    keep: bool,
}

fn standardization(rows: &[&Labeled], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(r.x) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, &x), m) in var.iter_mut().zip(r.x).zip(&mean) {
            *v += (f64::from(x) - m).powi(2);
        }
    }
    let scale = var.into_iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
    (mean, scale)
}

/// Full-batch subgradient descent on the class-weighted hinge loss (averaged
/// over total weight) plus L2, with a 1/√t step and iterate averaging over
/// the second half of the run.
fn fit_hinge(z: &[Vec<f64>], y: &[f64], c: &[f64], cfg: &FilterConfig) -> (Vec<f64>, f64) {
    let dim = z.first().map_or(0, Vec::len);
    let total: f64 = c.iter().sum();
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let (mut w_avg, mut b_avg, mut n_avg) = (vec![0.0; dim], 0.0, 0usize);
    let mut grad = vec![0.0; dim];
    let half = cfg.iterations / 2;
    for t in 1..=cfg.iterations {
        grad.iter_mut().zip(&w).for_each(|(g, wi)| *g = cfg.l2 * wi);
        let mut gb = 0.0;
        for ((zi, &yi), &ci) in z.iter().zip(y).zip(c) {
            let f = b + zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if yi * f < 1.0 {
                let k = ci * yi / total;
                grad.iter_mut().zip(zi).for_each(|(g, x)| *g -= k * x);
                gb -= k;
            }
        }
        let eta = cfg.learning_rate / (t as f64).sqrt();
        w.iter_mut().zip(&grad).for_each(|(wi, g)| *wi -= eta * g);
        b -= eta * gb;
        if t > half {
            w_avg.iter_mut().zip(&w).for_each(|(a, wi)| *a += wi);
            b_avg += b;
            n_avg += 1;
        }
    }
    w_avg.iter_mut().for_each(|a| *a /= n_avg as f64);
    (w_avg, b_avg / n_avg as f64)
}

/// Smallest threshold (not below zero) whose kept set on the held-out scores
/// reaches the target precision. When no threshold does, the one with the
/// best precision is used and the target is reported as missed.
fn choose_threshold(holdout: &[(f64, bool)], target: f64) -> (f64, Option<f64>, bool) {
    let mut s: Vec<(f64, bool)> = holdout.iter().copied().filter(|p| p.0 >= 0.0).collect();
    if s.is_empty() {
        return (0.0, None, true);
    }
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    // precision of {score ≥ s[i].0} for each distinct cut, highest cut first
    let mut best: Option<(f64, f64)> = None;
    let mut lowest_ok: Option<(f64, f64)> = None;
    let (mut tp, mut n) = (0usize, 0usize);
    let mut i = 0;
    while i < s.len() {
        let cut = s[i].0;
        while i < s.len() && s[i].0 == cut {
            tp += usize::from(s[i].1);
            n += 1;
            i += 1;
        }
        let p = tp as f64 / n as f64;
        if p >= target {
            lowest_ok = Some((cut, p));
        }
        if best.is_none_or(|b| p >= b.1) {
            best = Some((cut, p));
        }
    }
    let all_p = tp as f64 / n as f64;
    if all_p >= target {
        return (0.0, Some(all_p), true);
    }
    match lowest_ok {
        Some((cut, p)) => (cut, Some(p), true),
        None => {
            let (cut, p) = best.expect("non-empty");
            (cut, Some(p), false)
        }
    }
}

/// Trains the filter on `features` (object id → pooled features) labeled by
/// `verdicts`. Objects without a verdict are ignored.
pub fn train_filter(
    features: &BTreeMap<String, Vec<f32>>,
    verdicts: &[(String, Verdict)],
    cfg: &FilterConfig,
) -> Result<FilterModel, FilterError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(verdicts.len());
    let mut ids = Vec::with_capacity(verdicts.len());
    let mut dim = None;
    for (id, v) in verdicts {
        let x = features.get(id).ok_or_else(|| FilterError::MissingFeatures(id.clone()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::NonFinite(id.clone()));
        }
        match dim {
            None => dim = Some(x.len()),
            Some(d) if d != x.len() => return Err(FilterError::Dimension { got: x.len(), want: d }),
            _ => {}
        }
        rows.push(Labeled { x, keep: *v == Verdict::TruePositive });
        ids.push(id.as_str());
    }
    let keep = rows.iter().filter(|r| r.keep).count();
    let reject = rows.len() - keep;
    if keep == 0 || reject == 0 {
        return Err(FilterError::SingleClass { keep, reject });
    }
    let dim = dim.expect("non-empty");

    let mut fold: Vec<bool> = ids.iter().map(|id| in_holdout(id, cfg.seed, cfg.holdout_fraction)).collect();
    // the training fold must still hold both classes
    let train_has = |f: &[bool], k: bool| rows.iter().zip(f).any(|(r, h)| !h && r.keep == k);
    if !train_has(&fold, true) || !train_has(&fold, false) {
        fold.iter_mut().for_each(|h| *h = false);
    }
    let train: Vec<&Labeled> = rows.iter().zip(&fold).filter(|(_, h)| !**h).map(|(r, _)| r).collect();
    let (mean, scale) = standardization(&train, dim);
    let standardize = |x: &[f32]| -> Vec<f64> {
        x.iter().zip(&mean).zip(&scale).map(|((&v, m), s)| (f64::from(v) - m) / s).collect()
    };
    let z: Vec<Vec<f64>> = train.iter().map(|r| standardize(r.x)).collect();
    let y: Vec<f64> = train.iter().map(|r| if r.keep { 1.0 } else { -1.0 }).collect();
    let c: Vec<f64> =
        train.iter().map(|r| if r.keep { cfg.class_weights.keep } else { cfg.class_weights.reject }).collect();
    let (weights, bias) = fit_hinge(&z, &y, &c, cfg);

    let score = |zi: &[f64]| bias + zi.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
    let wrong = z.iter().zip(&y).filter(|(zi, &yi)| (score(zi) >= 0.0) != (yi > 0.0)).count();
    let holdout: Vec<(f64, bool)> =
        rows.iter().zip(&fold).filter(|(_, h)| **h).map(|(r, _)| (score(&standardize(r.x)), r.keep)).collect();
    let (decision_threshold, holdout_precision, target_met) = choose_threshold(&holdout, cfg.target_precision);

    Ok(FilterModel {
        mean,
        scale,
        weights,
        bias,
        decision_threshold,
        class_weights: cfg.class_weights,
        training: FilterTraining {
            samples: rows.len(),
            train_samples: train.len(),
            holdout_samples: holdout.len(),
            seed: cfg.seed,
            target_precision: cfg.target_precision,
            holdout_precision,
            target_met,
            training_error: wrong as f64 / train.len() as f64,
        },
    })
}

/// Pixels of context kept around an object when pooling its features.
const CONTEXT_PX: i64 = 2;

/// Pooled features of a detected object: the mean pixel features over its
/// footprint at `quarter`. Polygons use their rasterized pixels, points the
/// 3x3 block around them.
pub fn detection_features<S: ImagerySource + ?Sized>(
    src: &S,
    quarter: Quarter,
    feature: &GeoFeature,
    bank: &MosaiksBank,
) -> Result<Vec<f32>, FilterError> {
    let gt = global_transform(src);
    let [bx0, by0, bx1, by1] = coverage(src)?;
    let (x0, y0, x1, y1) = match feature {
        GeoFeature::Polygon(p) => {
            let [lon0, lat0, lon1, lat1] = p.bbox();
            let (ax, ay) = gt.lonlat_to_pixel(lon0, lat1);
            let (bx, by) = gt.lonlat_to_pixel(lon1, lat0);
            (ax.floor() as i64, ay.floor() as i64, bx.ceil() as i64, by.ceil() as i64)
        }
        GeoFeature::Point(p) => {
            let (x, y) = gt.lonlat_to_pixel(p.lon, p.lat);
            let (c, r) = (x.floor() as i64, y.floor() as i64);
            (c - 1, r - 1, c + 2, r + 2)
        }
    };
    let (gx, gy) = ((x0 - CONTEXT_PX).max(bx0), (y0 - CONTEXT_PX).max(by0));
    let (ex, ey) = ((x1 + CONTEXT_PX).min(bx1), (y1 + CONTEXT_PX).min(by1));
    if ex <= gx || ey <= gy {
        return Err(GeoError::Domain("object lies outside the imagery".into()).into());
    }
    let (w, h) = ((ex - gx) as usize, (ey - gy) as usize);
    let image = src.window(quarter, gx, gy, w, h)?;
    let mask = match feature {
        GeoFeature::Polygon(p) => p.rasterize(&gt.window(gx, gy, w, h)),
        GeoFeature::Point(_) => BitMask::from_fn(w, h, |c, r| {
            let (c, r) = (c as i64 + gx, r as i64 + gy);
            c >= x0 && c < x1 && r >= y0 && r < y1
        }),
    };
    Ok(bank.object_features(&image, &mask)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub id: String,
    /// Score minus the decision threshold.
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<FilterDecision>,
    pub rejected: Vec<FilterDecision>,
}

/// Partitions detections by the model's keep decision, preserving input order
/// within each side.
pub fn apply_filter<S: AsRef<str> + Sync, F: AsRef<[f32]> + Sync>(
    model: &FilterModel,
    detections: &[(S, F)],
) -> Result<FilterOutcome, FilterError> {
    let scored: Vec<f64> =
        detections.par_iter().map(|(_, f)| model.score(f.as_ref())).collect::<Result<_, _>>()?;
    let mut out = FilterOutcome::default();
    for ((id, _), s) in detections.iter().zip(scored) {
        let d = FilterDecision { id: id.as_ref().to_string(), margin: s - model.decision_threshold };
        if s >= model.decision_threshold {
            out.kept.push(d);
        } else {
            out.rejected.push(d);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> (BTreeMap<String, Vec<f32>>, Vec<(String, Verdict)>) {
        let mut f = BTreeMap::new();
        let mut v = Vec::new();
        for i in 0..n {
            let keep = i % 3 != 0;
            let base = if keep { 2.0 } else { -2.0 };
            let id = format!("o{i:03}");
            f.insert(id.clone(), vec![base + (i % 7) as f32 * 0.1, (i % 5) as f32, 1.0]);
            v.push((id, if keep { Verdict::TruePositive } else { Verdict::FalsePositive }));
        }
        (f, v)
    }

    #[test]
    fn separable_toy_has_no_training_error() {
        let (f, v) = toy(60);
        let m = train_filter(&f, &v, &FilterConfig::default()).unwrap();
        assert_eq!(m.training.training_error, 0.0);
        for (id, verdict) in &v {
            assert_eq!(m.keeps(&f[id]).unwrap(), *verdict == Verdict::TruePositive, "{id}");
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let (f, v) = toy(9);
        let only: Vec<_> = v.into_iter().filter(|p| p.1 == Verdict::TruePositive).collect();
        assert!(matches!(train_filter(&f, &only, &FilterConfig::default()), Err(FilterError::SingleClass { .. })));
    }

    #[test]
    fn empty_and_open_threshold() {
        let (f, v) = toy(30);
        let mut m = train_filter(&f, &v, &FilterConfig::default()).unwrap();
        let none: Vec<(String, Vec<f32>)> = Vec::new();
        assert_eq!(apply_filter(&m, &none).unwrap(), FilterOutcome::default());
        m.decision_threshold = f64::NEG_INFINITY;
        let all: Vec<_> = f.iter().map(|(k, x)| (k.clone(), x.clone())).collect();
        let out = apply_filter(&m, &all).unwrap();
        assert_eq!(out.kept.len(), all.len());
        assert!(apply_filter(&m, &[("x", vec![1.0f32])]).is_err());
    }

    #[test]
    fn threshold_selection() {
        // held-out scores: the top two are true, then a false one
        let h = [(3.0, true), (2.0, true), (1.0, false), (0.5, true)];
        assert_eq!(choose_threshold(&h, 0.95), (2.0, Some(1.0), true));
        assert_eq!(choose_threshold(&h, 0.7), (0.0, Some(0.75), true));
        let (t, p, met) = choose_threshold(&[(1.0, false), (0.5, true)], 0.95);
        assert_eq!((t, p, met), (0.5, Some(0.5), false));
        assert_eq!(choose_threshold(&[(-1.0, true)], 0.95), (0.0, None, true));
    }

    #[test]
    fn save_load_round_trip() {
        let (f, v) = toy(30);
        let m = train_filter(&f, &v, &FilterConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("filter.json");
        m.save(&p).unwrap();
        assert_eq!(FilterModel::load(&p).unwrap(), m);
    }
}

//! Reference trainable scorer: a per-pixel logistic model over MOSAIKS
//! features, trained by SGD on weighted cross-entropy (dense masks) or on the
//! counting loss (point annotations).

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo::{atomic_write, BitMask, Dihedral, RasterTile};
use crate::lcloss::{lc_loss_gradient, PatchReduction, PointAnnotation};

use super::{BankParams, MosaiksBank, ScoreError, Scorer};

const FORMAT: &str = "renewwatch-linear-scorer";
const VERSION: u32 = 1;
/// Logit of a degenerate constant scorer.
const CONSTANT_LOGIT: f64 = 6.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cross-entropy weights of background and target pixels.
    pub class_weights: [f64; 2],
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Relative loss improvement below which the rate is halved.
    pub plateau_tolerance: f64,
    pub l2: f64,
    pub batch_size: usize,
    /// Pixels drawn per mask sample (all pixels when 0).
    pub pixels_per_sample: usize,
    pub augment: bool,
    pub seed: u64,
    pub patch_reduction: PatchReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            class_weights: [0.3, 0.7],
            epochs: 30,
            learning_rate: 0.5,
            min_learning_rate: 1e-4,
            plateau_tolerance: 1e-4,
            l2: 1e-4,
            batch_size: 256,
            pixels_per_sample: 256,
            augment: true,
            seed: 17,
            patch_reduction: PatchReduction::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Dense pixel labels with the patch's dims.
    Mask(BitMask),
    /// Point annotations, trained with the counting loss.
    Points(PointAnnotation),
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub image: RasterTile,
    pub target: Target,
    /// Per-pixel false-positive multipliers for point samples.
    pub fp_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub objective: String,
    pub samples: usize,
    pub rows: usize,
    pub epochs_run: usize,
    /// Objective after initialization and after every accepted epoch.
    pub loss_history: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub final_loss: f64,
    /// Only one class present: the scorer is constant.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    bank: MosaiksBank,
    weights: Vec<f32>,
    bias: f32,
    report: TrainingReport,
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    format: String,
    version: u32,
    bank: BankParams,
    weights: Vec<f32>,
    bias: f32,
    report: TrainingReport,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearScorer {
    pub fn new(bank: MosaiksBank, weights: Vec<f32>, bias: f32) -> Result<Self, ScoreError> {
        if weights.len() != bank.filter_count() {
            return Err(ScoreError::Config(format!(
                "{} weights for {} filters",
                weights.len(),
                bank.filter_count()
            )));
        }
        Ok(Self { bank, weights, bias, report: TrainingReport::default() })
    }

    pub fn bank(&self) -> &MosaiksBank {
        &self.bank
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> f32 {
        self.bias
    }

    pub fn report(&self) -> &TrainingReport {
        &self.report
    }

    /// Pre-sigmoid scores per pixel.
    pub fn logits(&self, tile: &RasterTile) -> Result<Vec<f32>, ScoreError> {
        let nf = self.bank.filter_count();
        let mut out = vec![0f32; tile.width() * tile.height()];
        self.bank.for_each_block(tile, |start, block| {
            for (p, row) in block.chunks_exact(nf).enumerate() {
                let z: f32 = row.iter().zip(&self.weights).map(|(x, w)| x * w).sum();
                out[start + p] = z + self.bias;
            }
        })?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoreError> {
        let doc = Persisted {
            format: FORMAT.into(),
            version: VERSION,
            bank: self.bank.params(),
            weights: self.weights.clone(),
            bias: self.bias,
            report: self.report.clone(),
        };
        let bytes = serde_json::to_vec_pretty(&doc).expect("scorer serializes");
        atomic_write(path, &bytes).map_err(|e| ScoreError::Persist { path: path.into(), msg: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let err = |msg: String| ScoreError::Persist { path: path.into(), msg };
        let bytes = fs::read(path).map_err(|e| err(e.to_string()))?;
        let doc: Persisted = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(err(format!("unsupported format {} v{}", doc.format, doc.version)));
        }
        let mut s = Self::new(MosaiksBank::new(doc.bank)?, doc.weights, doc.bias)?;
        s.report = doc.report;
        Ok(s)
    }
}

impl Scorer for LinearScorer {
    fn score(&self, tile: &RasterTile) -> Result<RasterTile, ScoreError> {
        let p: Vec<f32> = self.logits(tile)?.into_iter().map(|z| sigmoid(f64::from(z)) as f32).collect();
        Ok(RasterTile::probability(tile.tile_id, tile.transform, &p, tile.quarter)?)
    }
}

fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let d = Sha256::digest(id.as_bytes());
    let h = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// 90-degree rotation and a flip, each with probability 0.5.
fn draw_augmentation(rng: &mut ChaCha8Rng) -> Dihedral {
    let rotate = rng.random_bool(0.5);
    let flip = rng.random_bool(0.5);
    Dihedral { transpose: rotate, flip_x: rotate, flip_y: flip }
}

/// Output index of every source index under `t`.
fn forward_index(t: Dihedral, w: usize, h: usize) -> Vec<usize> {
    let (ow, oh) = t.output_dims(w, h);
    let mut fwd = vec![0; w * h];
    for r in 0..oh {
        for c in 0..ow {
            let (sc, sr) = t.source_pixel(c, r, w, h);
            fwd[sr * w + sc] = r * ow + c;
        }
    }
    fwd
}

/// Feature rows of one augmented sample.
struct Prepared {
    rows: Vec<f32>,
    labels: Vec<bool>,
    points: Option<PointAnnotation>,
    fp_weights: Option<Vec<f64>>,
}

fn prepare(bank: &MosaiksBank, s: &TrainSample, cfg: &TrainConfig) -> Result<Prepared, ScoreError> {
    let (w, h) = (s.image.width(), s.image.height());
    let mut rng = sample_rng(cfg.seed, &s.id);
    let t = if cfg.augment { draw_augmentation(&mut rng) } else { Dihedral::IDENTITY };
    let image = s.image.transformed(t);
    let (ow, oh) = t.output_dims(w, h);
    let nf = bank.filter_count();
    match &s.target {
        Target::Mask(m) => {
            if m.width() != w || m.height() != h {
                return Err(ScoreError::Input(format!("sample {}: mask and image dims differ", s.id)));
            }
            let mask = m.transformed(t);
            let feats = bank.pixel_features(&image)?;
            let n = ow * oh;
            let picks: Vec<usize> = if cfg.pixels_per_sample == 0 || cfg.pixels_per_sample >= n {
                (0..n).collect()
            } else {
                let mut v = index::sample(&mut rng, n, cfg.pixels_per_sample).into_vec();
                v.sort_unstable();
                v
            };
            let mut rows = Vec::with_capacity(picks.len() * nf);
            for &i in &picks {
                rows.extend_from_slice(&feats[i * nf..(i + 1) * nf]);
            }
            let labels = picks.iter().map(|&i| mask.get_index(i)).collect();
            Ok(Prepared { rows, labels, points: None, fp_weights: None })
        }
        Target::Points(ann) => {
            if ann.width != w || ann.height != h {
                return Err(ScoreError::Input(format!("sample {}: annotation and image dims differ", s.id)));
            }
            let fwd = forward_index(t, w, h);
            let points = ann.points.iter().map(|&(c, r)| {
                let o = fwd[r * w + c];
                (o % ow, o / ow)
            });
            let points = PointAnnotation::new(ow, oh, points.collect())
                .map_err(|e| ScoreError::Input(format!("sample {}: {e}", s.id)))?;
            let fp_weights = match &s.fp_weights {
                Some(v) if v.len() != w * h => {
                    return Err(ScoreError::Input(format!("sample {}: fp weights length", s.id)))
                }
                Some(v) => {
                    let mut out = vec![0.0; v.len()];
                    for (i, &x) in v.iter().enumerate() {
                        out[fwd[i]] = x;
                    }
                    Some(out)
                }
                None => None,
            };
            let labels = {
                let mut l = vec![false; ow * oh];
                for &(c, r) in &points.points {
                    l[r * ow + c] = true;
                }
                l
            };
            let rows = bank.pixel_features(&image)?;
            Ok(Prepared { rows, labels, points: Some(points), fp_weights })
        }
    }
}

/// Per-dimension mean and standard deviation (1 where constant).
fn moments(parts: &[Prepared], nf: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0f64; nf];
    let mut sq = vec![0f64; nf];
    let mut n = 0usize;
    for p in parts {
        for row in p.rows.chunks_exact(nf) {
            for j in 0..nf {
                let x = f64::from(row[j]);
                sum[j] += x;
                sq[j] += x * x;
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let sd = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let v = (q / n - m * m).max(0.0).sqrt();
            if v > 1e-12 {
                v
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

fn dot(x: &[f32], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(&a, &b)| f64::from(a) * b).sum()
}

fn ce_objective(parts: &[Prepared], nf: usize, w: &[f64], b: f64, cfg: &TrainConfig) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in parts {
        for (row, &y) in p.rows.chunks_exact(nf).zip(&p.labels) {
            let q = sigmoid(dot(row, w) + b);
            let cw = cfg.class_weights[usize::from(y)];
            let l = if y { -q.max(1e-12).ln() } else { -(1.0 - q).max(1e-12).ln() };
            num += cw * l;
            den += cw;
        }
    }
    num / den.max(f64::MIN_POSITIVE) + 0.5 * cfg.l2 * w.iter().map(|v| v * v).sum::<f64>()
}

fn lc_objective(parts: &[Prepared], nf: usize, w: &[f64], b: f64, cfg: &TrainConfig) -> Result<f64, ScoreError> {
    let (mut num, mut den) = (0.0, 0.0);
    for p in parts {
        let z: Vec<f64> = p.rows.chunks_exact(nf).map(|r| dot(r, w) + b).collect();
        let ann = p.points.as_ref().expect("point sample");
        let (bd, _) = lc_loss_gradient(&z, ann, p.fp_weights.as_deref(), cfg.patch_reduction)
            .map_err(|e| ScoreError::Input(e.to_string()))?;
        num += bd.total;
        den += z.len() as f64;
    }
    Ok(num / den.max(1.0) + 0.5 * cfg.l2 * w.iter().map(|v| v * v).sum::<f64>())
}

fn ce_epoch(parts: &[Prepared], nf: usize, w: &mut [f64], b: &mut f64, lr: f64, cfg: &TrainConfig, rng: &mut ChaCha8Rng) {
    let mut order: Vec<(usize, usize)> =
        parts.iter().enumerate().flat_map(|(s, p)| (0..p.labels.len()).map(move |i| (s, i))).collect();
    order.shuffle(rng);
    let mut gw = vec![0f64; nf];
    for batch in order.chunks(cfg.batch_size.max(1)) {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let (mut gb, mut wsum) = (0.0, 0.0);
        for &(s, i) in batch {
            let row = &parts[s].rows[i * nf..(i + 1) * nf];
            let y = parts[s].labels[i];
            let cw = cfg.class_weights[usize::from(y)];
            let g = cw * (sigmoid(dot(row, w) + *b) - if y { 1.0 } else { 0.0 });
            for (gj, &x) in gw.iter_mut().zip(row) {
                *gj += g * f64::from(x);
            }
            gb += g;
            wsum += cw;
        }
        for (wj, gj) in w.iter_mut().zip(&gw) {
            *wj -= lr * (gj / wsum + cfg.l2 * *wj);
        }
        *b -= lr * gb / wsum;
    }
}

fn lc_epoch(
    parts: &[Prepared],
    nf: usize,
    w: &mut [f64],
    b: &mut f64,
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), ScoreError> {
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.shuffle(rng);
    let mut gw = vec![0f64; nf];
    for s in order {
        let p = &parts[s];
        let z: Vec<f64> = p.rows.chunks_exact(nf).map(|r| dot(r, w) + *b).collect();
        let ann = p.points.as_ref().expect("point sample");
        let (_, g) = lc_loss_gradient(&z, ann, p.fp_weights.as_deref(), cfg.patch_reduction)
            .map_err(|e| ScoreError::Input(e.to_string()))?;
        let n = z.len() as f64;
        gw.iter_mut().for_each(|v| *v = 0.0);
        for (row, &gi) in p.rows.chunks_exact(nf).zip(&g) {
            if gi != 0.0 {
                for (gj, &x) in gw.iter_mut().zip(row) {
                    *gj += gi * f64::from(x);
                }
            }
        }
        for (wj, gj) in w.iter_mut().zip(&gw) {
            *wj -= lr * (gj / n + cfg.l2 * *wj);
        }
        *b -= lr * g.iter().sum::<f64>() / n;
    }
    Ok(())
}

/// Trains a logistic per-pixel scorer over a fixed MOSAIKS bank.
///
/// Mask samples use class-weighted cross-entropy on a random subset of
/// pixels; point samples use the counting loss over whole patches. Features
/// are standardized during training and the scaling is folded into the
/// returned weights. When an epoch raises the objective its update is undone
/// and the learning rate halved; a stalled epoch also halves the rate. The
/// recorded loss history is therefore non-increasing.
///
/// Results do not depend on sample order: samples are processed sorted by id
/// and per-sample randomness is keyed by id.
pub fn train_linear_scorer(bank: MosaiksBank, samples: &[TrainSample], cfg: &TrainConfig) -> Result<LinearScorer, ScoreError> {
    if samples.is_empty() {
        return Err(ScoreError::Input("no training samples".into()));
    }
    if cfg.class_weights.iter().any(|w| !(*w > 0.0)) || !(cfg.learning_rate > 0.0) || cfg.l2 < 0.0 {
        return Err(ScoreError::Config(format!("invalid training config {cfg:?}")));
    }
    let points = matches!(samples[0].target, Target::Points(_));
    if samples.iter().any(|s| matches!(s.target, Target::Points(_)) != points) {
        return Err(ScoreError::Input("mask and point samples cannot be mixed".into()));
    }
    let mut sorted: Vec<&TrainSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let nf = bank.filter_count();
    let mut parts = sorted.par_iter().map(|s| prepare(&bank, s, cfg)).collect::<Result<Vec<_>, _>>()?;
    let (mean, sd) = moments(&parts, nf);
    for p in &mut parts {
        for row in p.rows.chunks_exact_mut(nf) {
            for j in 0..nf {
                row[j] = ((f64::from(row[j]) - mean[j]) / sd[j]) as f32;
            }
        }
    }
    let rows: usize = parts.iter().map(|p| p.labels.len()).sum();
    let positives: usize = parts.iter().map(|p| p.labels.iter().filter(|&&y| y).count()).sum();
    let mut report = TrainingReport {
        objective: if points { "counting".into() } else { "weighted_cross_entropy".into() },
        samples: parts.len(),
        rows,
        ..TrainingReport::default()
    };
    let objective = |w: &[f64], b: f64| -> Result<f64, ScoreError> {
        if points {
            lc_objective(&parts, nf, w, b, cfg)
        } else {
            Ok(ce_objective(&parts, nf, w, b, cfg))
        }
    };

    let mut w = vec![0f64; nf];
    let mut b = 0.0;
    if positives == 0 || positives == rows {
        report.degenerate = true;
        b = if positives == 0 { -CONSTANT_LOGIT } else { CONSTANT_LOGIT };
        let loss = objective(&w, b)?;
        report.loss_history.push(loss);
        report.final_loss = loss;
        log::warn!("training data holds a single class; returning a constant scorer");
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut lr = cfg.learning_rate;
        let mut loss = objective(&w, b)?;
        report.loss_history.push(loss);
        for epoch in 0..cfg.epochs {
            if lr < cfg.min_learning_rate {
                break;
            }
            let (mut w2, mut b2) = (w.clone(), b);
            if points {
                lc_epoch(&parts, nf, &mut w2, &mut b2, lr, cfg, &mut rng)?;
            } else {
                ce_epoch(&parts, nf, &mut w2, &mut b2, lr, cfg, &mut rng);
            }
            let next = objective(&w2, b2)?;
            report.epochs_run = epoch + 1;
            report.learning_rates.push(lr);
            if !next.is_finite() || next > loss {
                lr *= 0.5;
                continue;
            }
            if loss - next < cfg.plateau_tolerance * loss {
                lr *= 0.5;
            }
            w = w2;
            b = b2;
            loss = next;
            report.loss_history.push(loss);
            log::debug!("epoch {epoch}: loss {loss:.6} lr {lr}");
        }
        report.final_loss = loss;
    }

    let mut bias = b;
    let weights: Vec<f32> = (0..nf)
        .map(|j| {
            bias -= w[j] * mean[j] / sd[j];
            (w[j] / sd[j]) as f32
        })
        .collect();
    let mut scorer = LinearScorer::new(bank, weights, bias as f32)?;
    scorer.report = report;
    Ok(scorer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Bands, GeoTransform, Quarter, TileId};

    fn bank() -> MosaiksBank {
        MosaiksBank::new(BankParams { seed: 5, filter_count: 32, patch_size: 3, channels: 3 }).unwrap()
    }

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> RasterTile {
        let id = TileId::new(15, 9, 9).unwrap();
        let mut v = Vec::with_capacity(w * h * 3);
        for r in 0..h {
            for c in 0..w {
                v.extend_from_slice(&f(c, r));
            }
        }
        RasterTile::new(id, GeoTransform::for_tile(id, 512).window(0, 0, w, h), 3, Bands::U8(v), Quarter::SERIES_END).unwrap()
    }

    #[test]
    fn forward_index_inverts_source_pixel() {
        for bits in 0..8u8 {
            let t = Dihedral { transpose: bits & 1 != 0, flip_x: bits & 2 != 0, flip_y: bits & 4 != 0 };
            let fwd = forward_index(t, 5, 3);
            let (ow, _) = t.output_dims(5, 3);
            for (src, &o) in fwd.iter().enumerate() {
                assert_eq!(t.source_pixel(o % ow, o / ow, 5, 3), (src % 5, src / 5));
            }
        }
    }

    #[test]
    fn single_class_is_flagged_degenerate() {
        let img = image(8, 8, |c, r| [(c * 20) as u8, (r * 20) as u8, 50]);
        let s = TrainSample { id: "a".into(), image: img.clone(), target: Target::Mask(BitMask::new(8, 8)), fp_weights: None };
        let sc = train_linear_scorer(bank(), &[s], &TrainConfig::default()).unwrap();
        assert!(sc.report().degenerate);
        let p = sc.score(&img).unwrap().target_probabilities().unwrap();
        assert!(p.iter().all(|&v| v < 0.01 && (v - p[0]).abs() < 1e-6));
    }

    #[test]
    fn save_load_round_trip() {
        let sc = LinearScorer::new(bank(), (0..32).map(|i| i as f32 * 0.1 - 1.3).collect(), 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        sc.save(&path).unwrap();
        assert_eq!(LinearScorer::load(&path).unwrap(), sc);
        std::fs::write(&path, b"{\"format\":\"x\"}").unwrap();
        assert!(LinearScorer::load(&path).is_err());
    }

    #[test]
    fn mixed_targets_rejected() {
        let img = image(4, 4, |_, _| [0, 0, 0]);
        let a = TrainSample { id: "a".into(), image: img.clone(), target: Target::Mask(BitMask::new(4, 4)), fp_weights: None };
        let b = TrainSample {
            id: "b".into(),
            image: img,
            target: Target::Points(PointAnnotation::new(4, 4, vec![]).unwrap()),
            fp_weights: None,
        };
        assert!(train_linear_scorer(bank(), &[a, b], &TrainConfig::default()).is_err());
    }
}

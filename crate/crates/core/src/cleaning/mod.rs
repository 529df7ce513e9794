//! Data-centric label cleaning: train, measure how well each sample is fit,
//! drop the unfittable ones, repeat. Also turns reviewed false positives into
//! hard-negative samples.

mod verdicts;

pub use verdicts::{parse_verdicts, read_verdicts, write_verdicts, Verdict, VerdictError};

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::{BitMask, GeoError, RasterTile};
use crate::lcloss::PointAnnotation;
use crate::scoring::{binarize, ScoreError, Scorer, Target, TrainSample};

#[derive(Debug, thiserror::Error)]
pub enum CleanError {
    #[error("cleaning configuration: {0}")]
    Config(String),
    #[error("no samples to clean")]
    NoSamples,
    #[error("every sample was dropped after {} iteration(s)", .0.iterations.len())]
    EmptyDataset(Box<CleaningReport>),
    #[error("verdict for unknown object {0}")]
    UnknownObject(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Active,
    DroppedIou,
    DroppedCoverage,
    HardNegative,
}

impl SampleStatus {
    pub fn in_training(self) -> bool {
        matches!(self, SampleStatus::Active | SampleStatus::HardNegative)
    }
}

#[derive(Debug, Clone)]
pub struct CleaningSample {
    pub sample: TrainSample,
    pub status: SampleStatus,
    /// Fit measured in the last iteration that evaluated this sample.
    pub fit_iou: Option<f64>,
}

impl CleaningSample {
    pub fn new(sample: TrainSample) -> Self {
        Self { sample, status: SampleStatus::Active, fit_iou: None }
    }

    pub fn id(&self) -> &str {
        &self.sample.id
    }

    /// Whether the label holds anything to fit.
    fn has_target(&self) -> bool {
        match &self.sample.target {
            Target::Mask(m) => !m.is_empty(),
            Target::Points(p) => !p.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub iou_threshold: f64,
    pub coverage_threshold: f64,
    pub max_iterations: usize,
    /// Probability cut used to binarize predictions before measuring fit.
    pub binarize_threshold: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.1, coverage_threshold: 0.9, max_iterations: 10, binarize_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Samples trained on in this iteration.
    pub active: usize,
    /// Samples dropped after this iteration's fit check.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub initial: usize,
    pub dropped_coverage: usize,
    pub iterations: Vec<IterationStats>,
    /// Fit per sample, one entry per iteration that evaluated it.
    pub fit_history: BTreeMap<String, Vec<f64>>,
    pub converged: bool,
    pub final_active: usize,
}

impl CleaningReport {
    /// Active counts: initial, after the coverage pass, then after each
    /// iteration.
    pub fn active_trace(&self) -> Vec<usize> {
        let mut v = vec![self.initial, self.initial - self.dropped_coverage];
        let mut cur = self.initial - self.dropped_coverage;
        for it in &self.iterations {
            cur -= it.dropped;
            v.push(cur);
        }
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(a: &BitMask, b: &BitMask) -> Result<f64, GeoError> {
    let union = a.union_count(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(a.intersection_count(b)? as f64 / union as f64)
}

/// Share of pixels set.
pub fn coverage_fraction(y: &BitMask) -> f64 {
    if y.len() == 0 {
        return 0.0;
    }
    y.count_ones() as f64 / y.len() as f64
}

/// Fraction of annotated points whose pixel lies in a predicted blob; 1 for
/// no annotations.
pub fn point_recovery(ann: &PointAnnotation, pred: &BitMask) -> f64 {
    if ann.points.is_empty() {
        return 1.0;
    }
    let hit = ann.points.iter().filter(|&&(c, r)| pred.get(c, r)).count();
    hit as f64 / ann.points.len() as f64
}

/// Produces a scorer from the samples it is given. Must be deterministic.
pub trait Trainer: Sync {
    fn train(&self, samples: &[TrainSample]) -> Result<Box<dyn Scorer>, ScoreError>;
}

impl<F> Trainer for F
where
    F: Fn(&[TrainSample]) -> Result<Box<dyn Scorer>, ScoreError> + Sync,
{
    fn train(&self, samples: &[TrainSample]) -> Result<Box<dyn Scorer>, ScoreError> {
        self(samples)
    }
}

/// Fit of one sample under a scorer: mask IoU, or point recovery for point
/// labels.
pub fn sample_fit(scorer: &dyn Scorer, sample: &TrainSample, threshold: f64) -> Result<f64, CleanError> {
    let pred = binarize(&scorer.score(&sample.image)?, threshold)?;
    Ok(match &sample.target {
        Target::Mask(m) => iou(m, &pred)?,
        Target::Points(p) => point_recovery(p, &pred),
    })
}

/// Iteratively drops samples the retrained scorer cannot fit.
///
/// Masks covering more than the coverage threshold are dropped once before
/// training. Each iteration trains from scratch on the active samples and
/// hard negatives, then measures the fit of every active sample with a
/// non-empty label; samples below the IoU threshold are dropped. The loop
/// stops when an iteration drops nothing or after `max_iterations`.
pub fn clean_dataset(
    mut samples: Vec<CleaningSample>,
    trainer: &dyn Trainer,
    cfg: &CleanConfig,
) -> Result<(Vec<CleaningSample>, CleaningReport), CleanError> {
    if samples.is_empty() {
        return Err(CleanError::NoSamples);
    }
    if !(0.0..=1.0).contains(&cfg.iou_threshold) || !(0.0..=1.0).contains(&cfg.coverage_threshold) {
        return Err(CleanError::Config(format!("thresholds out of range in {cfg:?}")));
    }
    let active_at = |s: &[CleaningSample]| s.iter().filter(|s| s.status == SampleStatus::Active).count();
    // samples dropped by an earlier run stay dropped and are not counted
    let mut report = CleaningReport { initial: active_at(&samples), ..CleaningReport::default() };
    for s in &mut samples {
        if s.status != SampleStatus::Active {
            continue;
        }
        if let Target::Mask(m) = &s.sample.target {
            if coverage_fraction(m) > cfg.coverage_threshold {
                s.status = SampleStatus::DroppedCoverage;
                report.dropped_coverage += 1;
            }
        }
    }

    for iteration in 1..=cfg.max_iterations {
        let active = active_at(&samples);
        if active == 0 {
            return Err(CleanError::EmptyDataset(Box::new(report)));
        }
        let training: Vec<TrainSample> =
            samples.iter().filter(|s| s.status.in_training()).map(|s| s.sample.clone()).collect();
        let scorer = trainer.train(&training)?;
        let fits: Vec<(usize, f64)> = samples
            .par_iter()
            .enumerate()
            .filter(|(_, s)| s.status == SampleStatus::Active && s.has_target())
            .map(|(i, s)| sample_fit(scorer.as_ref(), &s.sample, cfg.binarize_threshold).map(|f| (i, f)))
            .collect::<Result<_, _>>()?;
        let mut dropped = 0;
        for (i, fit) in fits {
            let s = &mut samples[i];
            s.fit_iou = Some(fit);
            report.fit_history.entry(s.sample.id.clone()).or_default().push(fit);
            if fit < cfg.iou_threshold {
                s.status = SampleStatus::DroppedIou;
                dropped += 1;
            }
        }
        log::info!("cleaning iteration {iteration}: {active} active, {dropped} dropped");
        report.iterations.push(IterationStats { iteration, active, dropped });
        if dropped == 0 {
            report.converged = true;
            break;
        }
    }
    report.final_active = active_at(&samples);
    if report.final_active == 0 {
        return Err(CleanError::EmptyDataset(Box::new(report)));
    }
    Ok((samples, report))
}

/// Reviewed false positives become empty-label hard negatives appended to
/// the dataset. `candidates` maps predicted-object ids to their image patch;
/// accepted objects are ignored.
pub fn mine_hard_negatives(
    mut samples: Vec<CleaningSample>,
    candidates: &[(String, RasterTile)],
    verdicts: &[(String, Verdict)],
    points: bool,
) -> Result<Vec<CleaningSample>, CleanError> {
    let index: HashMap<&str, &RasterTile> = candidates.iter().map(|(id, t)| (id.as_str(), t)).collect();
    for (id, v) in verdicts {
        let tile = index.get(id.as_str()).ok_or_else(|| CleanError::UnknownObject(id.clone()))?;
        if *v != Verdict::FalsePositive {
            continue;
        }
        let (w, h) = (tile.width(), tile.height());
        let target = if points {
            Target::Points(PointAnnotation::new(w, h, vec![]).expect("empty annotation"))
        } else {
            Target::Mask(BitMask::new(w, h))
        };
        samples.push(CleaningSample {
            sample: TrainSample { id: format!("hn-{id}"), image: (*tile).clone(), target, fp_weights: None },
            status: SampleStatus::HardNegative,
            fit_iou: None,
        });
    }
    Ok(samples)
}

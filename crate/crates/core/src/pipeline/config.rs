//! Run configuration: one TOML document; every section and field is
//! optional and falls back to the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cleaning::CleanConfig;
use crate::dataset::PatchConfig;
use crate::geo::Quarter;
use crate::metrics::PowerDensitySchedule;
use crate::metrics::{SOLAR_MATCH_IOU, WIND_MATCH_M};
use crate::postfilter::FilterConfig;
use crate::scoring::{BankParams, TrainConfig};
use crate::synth::WorldSpec;
use crate::temporal::DEFAULT_FRACTION;

use super::PipelineError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "RENEWWATCH_CONFIG";

/// External inputs. Unset entries are taken from the `synth` stage output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root of `<quarter>/<z_x_y>.{json,bin}` imagery quads.
    pub imagery: Option<PathBuf>,
    pub solar_labels: Option<PathBuf>,
    pub wind_labels: Option<PathBuf>,
    /// Points of known towers whose neighborhood is up-weighted in the
    /// counting loss.
    pub confusers: Option<PathBuf>,
    /// Land-cover grid stem (`.json` + `.bin`).
    pub landcover: Option<PathBuf>,
    /// Country polygons with an `iso3` property.
    pub boundaries: Option<PathBuf>,
    /// `iso3,technology,year,capacity_mw` table.
    pub reference: Option<PathBuf>,
    pub solar_truth: Option<PathBuf>,
    pub wind_truth: Option<PathBuf>,
    /// Precomputed probability rasters (same layout as imagery) used instead
    /// of the trained scorers.
    pub solar_probabilities: Option<PathBuf>,
    pub wind_probabilities: Option<PathBuf>,
}

/// Where reviewer verdicts come from for hard-negative mining and the
/// false-positive filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    /// Verdicts on the detections listed by the clean stage.
    pub solar_hard_negatives: Option<PathBuf>,
    pub wind_hard_negatives: Option<PathBuf>,
    /// Verdicts on the detections of the vectorize stage.
    pub solar_filter: Option<PathBuf>,
    pub wind_filter: Option<PathBuf>,
    /// Without a verdict file, judge detections against ground truth when
    /// it is available (synthetic runs).
    pub truth_oracle: bool,
    /// A detected turbine within this distance of a real one is confirmed.
    pub oracle_wind_m: f64,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            solar_hard_negatives: None,
            wind_hard_negatives: None,
            solar_filter: None,
            wind_filter: None,
            truth_oracle: true,
            oracle_wind_m: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanStageConfig {
    pub solar: CleanConfig,
    pub wind: CleanConfig,
    pub hard_negatives: bool,
}

impl Default for CleanStageConfig {
    fn default() -> Self {
        Self { solar: CleanConfig::default(), wind: CleanConfig::default(), hard_negatives: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub quarter: Quarter,
    /// Probability cut for positive pixels.
    pub binarize: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { quarter: Quarter::SERIES_END, binarize: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizeConfig {
    pub min_area_m2: f64,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        Self { min_area_m2: 10_000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterStageConfig {
    pub enabled: bool,
    /// Detections sent for review per technology.
    pub budget: usize,
    pub model: FilterConfig,
}

impl Default for FilterStageConfig {
    fn default() -> Self {
        Self { enabled: true, budget: 300, model: FilterConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatingConfig {
    /// Share of the final extent that must test positive.
    pub fraction: f64,
    /// Context pixels scored around each feature.
    pub margin_px: i64,
    /// Half-width of the square extent around a turbine point.
    pub turbine_radius_px: i64,
}

impl Default for DatingConfig {
    fn default() -> Self {
        Self { fraction: DEFAULT_FRACTION, margin_px: 8, turbine_radius_px: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub schedule: PowerDensitySchedule,
    /// Reference year to compare against; latest per country when unset.
    pub reference_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub solar_match_iou: f64,
    pub wind_match_m: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { solar_match_iou: SOLAR_MATCH_IOU, wind_match_m: WIND_MATCH_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub worker_counts: Vec<usize>,
    pub quads: usize,
    pub quad_size: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { worker_counts: vec![1, 2, 4], quads: 256, quad_size: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the synthetic world; model seeds live in their sections.
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub stage_dir: PathBuf,
    pub paths: PathsConfig,
    /// Synthetic world. Its `quad_size` and `label_quarter` also describe
    /// external imagery.
    pub synth: WorldSpec,
    pub patches: PatchConfig,
    pub bank: BankParams,
    pub solar_training: TrainConfig,
    pub wind_training: TrainConfig,
    pub cleaning: CleanStageConfig,
    pub review: ReviewConfig,
    pub inference: InferenceConfig,
    pub vectorize: VectorizeConfig,
    pub filter: FilterStageConfig,
    pub dating: DatingConfig,
    pub capacity: CapacityConfig,
    pub evaluation: EvaluationConfig,
    pub bench: BenchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            stage_dir: PathBuf::from("run"),
            paths: PathsConfig::default(),
            synth: WorldSpec::default(),
            patches: PatchConfig::default(),
            bank: BankParams::default(),
            solar_training: TrainConfig::default(),
            wind_training: TrainConfig::default(),
            cleaning: CleanStageConfig::default(),
            review: ReviewConfig::default(),
            inference: InferenceConfig::default(),
            vectorize: VectorizeConfig::default(),
            filter: FilterStageConfig::default(),
            dating: DatingConfig::default(),
            capacity: CapacityConfig::default(),
            evaluation: EvaluationConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn unit_open(name: &str, v: f64) -> Result<(), PipelineError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{name} = {v} must lie in (0, 1)")))
    }
}

fn unit_closed(name: &str, v: f64) -> Result<(), PipelineError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{name} = {v} must lie in [0, 1]")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// World spec with the run seed applied.
    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec { seed: self.seed, ..self.synth.clone() }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }

    /// Range checks on every threshold and readability of every configured
    /// path.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.world_spec().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        unit_open("inference.binarize", self.inference.binarize)?;
        for (name, c) in [("cleaning.solar", &self.cleaning.solar), ("cleaning.wind", &self.cleaning.wind)] {
            unit_closed(&format!("{name}.iou_threshold"), c.iou_threshold)?;
            unit_closed(&format!("{name}.coverage_threshold"), c.coverage_threshold)?;
            unit_open(&format!("{name}.binarize_threshold"), c.binarize_threshold)?;
        }
        unit_open("dating.fraction", self.dating.fraction)?;
        if self.dating.margin_px < 0 || self.dating.turbine_radius_px < 0 {
            return Err(PipelineError::Config("dating margins must be non-negative".into()));
        }
        if !(self.vectorize.min_area_m2 >= 0.0 && self.vectorize.min_area_m2.is_finite()) {
            return Err(PipelineError::Config(format!("vectorize.min_area_m2 = {} must be >= 0", self.vectorize.min_area_m2)));
        }
        unit_closed("evaluation.solar_match_iou", self.evaluation.solar_match_iou)?;
        if !(self.evaluation.wind_match_m > 0.0 && self.review.oracle_wind_m > 0.0) {
            return Err(PipelineError::Config("match distances must be positive".into()));
        }
        self.filter.model.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.bench.worker_counts.is_empty() || self.bench.worker_counts.contains(&0) || self.bench.quads == 0 {
            return Err(PipelineError::Config("bench needs quads and positive worker counts".into()));
        }
        if self.patches.solar_patch < 8 || self.patches.wind_patch < 8 || !(self.patches.wind_background_ratio >= 0.0) {
            return Err(PipelineError::Config(format!("bad patch settings {:?}", self.patches)));
        }
        let s = &self.capacity.schedule;
        if !(s.base_density > 0.0 && s.final_density > 0.0 && s.wind_mw_per_turbine > 0.0) || s.base_year > s.final_year {
            return Err(PipelineError::Config(format!("bad power-density schedule {s:?}")));
        }
        let p = &self.paths;
        let r = &self.review;
        for path in [&p.imagery, &p.solar_labels, &p.wind_labels, &p.confusers, &p.boundaries, &p.reference]
            .into_iter()
            .chain([&p.solar_truth, &p.wind_truth, &p.solar_probabilities, &p.wind_probabilities])
            .chain([&r.solar_hard_negatives, &r.wind_hard_negatives, &r.solar_filter, &r.wind_filter])
            .flatten()
        {
            if std::fs::metadata(path).is_err() {
                return Err(PipelineError::Config(format!("cannot read {}", path.display())));
            }
        }
        if let Some(stem) = &p.landcover {
            if std::fs::metadata(stem.with_extension("json")).is_err() {
                return Err(PipelineError::Config(format!("cannot read land cover {}", stem.display())));
            }
        }
        Ok(())
    }
}

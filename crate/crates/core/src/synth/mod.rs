//! Seeded synthetic world: land cover, countries, planted solar arrays and
//! wind turbines, confusers, and OSM-style labels with injected noise.

mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{
    BitMask, BuiltDate, GeoError, GeoFeature, GeoPoint, GeoPolygon, GeoTransform, ImagerySource, Properties, QuadGrid,
    Quarter, RasterTile, TileId, Bands,
};
use crate::temporal::country::CountryIndex;
use crate::temporal::landcover::{esa_code, LandCoverGrid};


/// Legend index of open water; nothing is planted on it.
const WATER: u8 = 21;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("placement failed: {0}")]
    Placement(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Solar,
    Wind,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Solar => "solar",
            FeatureKind::Wind => "wind",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    None,
    Semantic,
    Spatial,
    Temporal,
}

impl NoiseMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseMode::None => "none",
            NoiseMode::Semantic => "semantic",
            NoiseMode::Spatial => "spatial",
            NoiseMode::Temporal => "temporal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(NoiseMode::None),
            "semantic" => Some(NoiseMode::Semantic),
            "spatial" => Some(NoiseMode::Spatial),
            "temporal" => Some(NoiseMode::Temporal),
            _ => None,
        }
    }
}

/// Per-label probabilities of each noise mode; the modes are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub semantic: f64,
    pub spatial: f64,
    pub temporal: f64,
}

impl NoiseRates {
    pub const ZERO: NoiseRates = NoiseRates { semantic: 0.0, spatial: 0.0, temporal: 0.0 };

    pub fn total(&self) -> f64 {
        self.semantic + self.spatial + self.temporal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub center_lon: f64,
    pub center_lat: f64,
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub quad_size: u32,
    pub start_quarter: Quarter,
    pub end_quarter: Quarter,
    /// Imagery quarter the labels were drawn against.
    pub label_quarter: Quarter,
    pub solar_count: usize,
    /// Number of turbines (grouped into farms).
    pub wind_count: usize,
    pub turbines_per_farm: (usize, usize),
    pub turbine_spacing_px: (i64, i64),
    pub solar_side_px: (i64, i64),
    /// Width of the graded facility ground around each array.
    pub apron_px: (i64, i64),
    /// Quarters of cleared ground shown before an array is built.
    pub construction_quarters: u32,
    pub decoy_count: usize,
    pub bright_roof_count: usize,
    pub dark_roof_count: usize,
    pub tower_count: usize,
    /// Graded lots (construction sites, yards) of at least 10,500 m2.
    pub bare_lot_count: usize,
    /// Striped glasshouse blocks of at least 10,500 m2.
    pub greenhouse_count: usize,
    pub noise: NoiseRates,
    /// Linear dilation range for semantic solar noise.
    pub semantic_scale: (f64, f64),
    pub spatial_shift_px: (f64, f64),
    pub pre_series_fraction: f64,
    pub unlabeled_fraction: f64,
    pub repower_fraction: f64,
    pub seam_farm: bool,
    pub countries_x: u32,
    pub countries_y: u32,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            center_lon: 31.2,
            center_lat: 17.4,
            tiles_x: 4,
            tiles_y: 4,
            quad_size: 512,
            start_quarter: Quarter::SERIES_START,
            end_quarter: Quarter::SERIES_END,
            label_quarter: Quarter::new(2023, 1).expect("valid quarter"),
            solar_count: 40,
            wind_count: 120,
            turbines_per_farm: (6, 16),
            turbine_spacing_px: (14, 22),
            solar_side_px: (26, 64),
            apron_px: (3, 8),
            construction_quarters: 3,
            decoy_count: 6,
            bright_roof_count: 40,
            dark_roof_count: 12,
            tower_count: 30,
            bare_lot_count: 12,
            greenhouse_count: 8,
            noise: NoiseRates { semantic: 0.1, spatial: 0.1, temporal: 0.1 },
            semantic_scale: (2.0, 5.0),
            spatial_shift_px: (5.0, 20.0),
            pre_series_fraction: 0.3,
            unlabeled_fraction: 0.1,
            repower_fraction: 0.2,
            seam_farm: true,
            countries_x: 2,
            countries_y: 2,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let n = self.noise;
        for (name, v) in [
            ("noise.semantic", n.semantic),
            ("noise.spatial", n.spatial),
            ("noise.temporal", n.temporal),
            ("pre_series_fraction", self.pre_series_fraction),
            ("unlabeled_fraction", self.unlabeled_fraction),
            ("repower_fraction", self.repower_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if n.total() > 1.0 + 1e-12 {
            return bad(format!("noise rates sum to {} > 1", n.total()));
        }
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return bad("world needs at least one tile".into());
        }
        if self.center_lat.abs() > 80.0 {
            return bad(format!("center latitude {} too close to the poles", self.center_lat));
        }
        if self.start_quarter > self.end_quarter {
            return bad(format!("start {} after end {}", self.start_quarter, self.end_quarter));
        }
        if self.label_quarter < self.start_quarter || self.label_quarter > self.end_quarter {
            return bad(format!("label quarter {} outside the world range", self.label_quarter));
        }
        let needs_later = n.temporal > 0.0 || self.unlabeled_fraction > 0.0 || self.repower_fraction > 0.0;
        if needs_later && self.label_quarter >= self.end_quarter {
            return bad("temporal noise, unlabeled or repowered features need quarters after label_quarter".into());
        }
        if self.solar_side_px.0 < 4 || self.solar_side_px.0 > self.solar_side_px.1 {
            return bad(format!("bad solar side range {:?}", self.solar_side_px));
        }
        let ps = self.pixel_ground_m();
        let min_area = (self.solar_side_px.0 as f64 * ps).powi(2);
        if min_area < 10_000.0 {
            return bad(format!("smallest array {min_area:.0} m2 is below 10,000 m2"));
        }
        if self.apron_px.0 < 0 || self.apron_px.0 > self.apron_px.1 {
            return bad(format!("bad apron range {:?}", self.apron_px));
        }
        if self.turbines_per_farm.0 == 0 || self.turbines_per_farm.0 > self.turbines_per_farm.1 {
            return bad(format!("bad turbines_per_farm {:?}", self.turbines_per_farm));
        }
        if self.turbine_spacing_px.0 < 9 || self.turbine_spacing_px.0 > self.turbine_spacing_px.1 {
            return bad(format!("bad turbine spacing {:?}", self.turbine_spacing_px));
        }
        if !(1.0..=10.0).contains(&self.semantic_scale.0) || self.semantic_scale.0 > self.semantic_scale.1 {
            return bad(format!("bad semantic scale {:?}", self.semantic_scale));
        }
        if self.spatial_shift_px.0 < 1.0 || self.spatial_shift_px.0 > self.spatial_shift_px.1 {
            return bad(format!("bad spatial shift {:?}", self.spatial_shift_px));
        }
        if self.countries_x == 0 || self.countries_y == 0 {
            return bad("need at least one country".into());
        }
        QuadGrid::new(self.quad_size).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    /// Ground meters per imagery pixel at the world's center latitude.
    pub fn pixel_ground_m(&self) -> f64 {
        crate::geo::ground_resolution(0.0, crate::geo::IMAGERY_ZOOM).expect("equator") * self.center_lat.to_radians().cos()
    }
}

/// Axis-aligned rectangle in world pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl PixelRect {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    /// Rectangle grown by `m` pixels on every side (shrunk if negative).
    pub fn grown(&self, m: i64) -> Self {
        Self { x: self.x - m, y: self.y - m, w: self.w + 2 * m, h: self.h + 2 * m }
    }

    pub fn intersects(&self, o: &PixelRect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    /// Rectangle scaled by `f` about its center.
    pub fn scaled(&self, f: f64) -> Self {
        let (cx, cy) = self.center();
        let (w, h) = ((self.w as f64 * f).round() as i64, (self.h as f64 * f).round() as i64);
        Self { x: (cx - w as f64 / 2.0).round() as i64, y: (cy - h as f64 / 2.0).round() as i64, w, h }
    }

    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFeature {
    pub id: u32,
    pub kind: FeatureKind,
    /// Array rectangle, or the 3x3 turbine blob.
    pub rect: PixelRect,
    /// Graded ground around an array, in pixels.
    pub apron: i64,
    pub orientation: u8,
    pub built: BuiltDate,
    /// Quarter from which a repowered turbine is gone.
    pub removed: Option<Quarter>,
    /// Sub-threshold array that the min-area filter must remove.
    pub decoy: bool,
    /// Wind farm id (turbines) or the feature's own id (arrays).
    pub group: u32,
    pub true_geometry: GeoFeature,
    /// Land-cover legend index.
    pub landcover_class: u8,
    pub country: String,
}

impl PlantedFeature {
    pub fn present_at(&self, q: Quarter) -> bool {
        self.built.present_at(q) && self.removed.is_none_or(|r| q < r)
    }

    /// True while the site is cleared but the array not yet built.
    pub fn under_construction(&self, q: Quarter, lead: u32) -> bool {
        match self.built {
            BuiltDate::Quarter(b) => self.kind == FeatureKind::Solar && q < b && q >= b.offset(-i64::from(lead)),
            BuiltDate::PreSeries => false,
        }
    }

    /// Turbine center pixel.
    pub fn center(&self) -> (i64, i64) {
        (self.rect.x + 1, self.rect.y + 1)
    }

    /// Every pixel the sprite may touch.
    pub fn footprint(&self) -> PixelRect {
        match self.kind {
            FeatureKind::Solar => self.rect.grown(self.apron),
            FeatureKind::Wind => PixelRect::new(self.rect.x, self.rect.y, 8, 8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfuserKind {
    BrightRoof,
    DarkRoof,
    Tower,
    BareLot,
    Greenhouse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confuser {
    pub kind: ConfuserKind,
    pub rect: PixelRect,
}

impl Confuser {
    pub fn footprint(&self) -> PixelRect {
        self.rect
    }

    pub fn center(&self) -> (i64, i64) {
        (self.rect.x + self.rect.w / 2, self.rect.y + self.rect.h / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelShape {
    Rect(PixelRect),
    /// Pixel (col, row) in world coordinates.
    Point(i64, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLabel {
    pub id: u32,
    pub kind: FeatureKind,
    pub shape: LabelShape,
    pub geometry: GeoFeature,
    pub noise_mode: NoiseMode,
    pub source_feature: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub grid: QuadGrid,
    /// North-west tile of the world.
    pub origin: TileId,
    /// World pixel grid (origin at the north-west tile corner).
    pub transform: GeoTransform,
    pub landcover: LandCoverGrid,
    pub countries: Vec<(String, GeoPolygon)>,
    pub features: Vec<PlantedFeature>,
    pub labels: Vec<NoisyLabel>,
    pub confusers: Vec<Confuser>,
    country_index: CountryIndex,
}

struct Placer {
    taken: Vec<PixelRect>,
    width: i64,
    height: i64,
}

impl Placer {
    fn fits(&self, r: &PixelRect, margin: i64) -> bool {
        let g = r.grown(margin);
        r.x >= 2 && r.y >= 2 && r.x + r.w <= self.width - 2 && r.y + r.h <= self.height - 2 && !self.taken.iter().any(|t| t.intersects(&g))
    }
}

enum Plan {
    Unlabeled,
    Labeled(NoiseMode),
}

pub fn generate_world(spec: &WorldSpec) -> Result<World, SynthError> {
    spec.validate()?;
    let grid = QuadGrid::new(spec.quad_size)?;
    let z = grid.zoom();
    let center = TileId::containing(spec.center_lon, spec.center_lat, z)?;
    let ox = center.x.checked_sub(spec.tiles_x / 2).ok_or_else(|| SynthError::InvalidSpec("world crosses the antimeridian".into()))?;
    let oy = center.y.checked_sub(spec.tiles_y / 2).ok_or_else(|| SynthError::InvalidSpec("world crosses the pole".into()))?;
    let origin = TileId::new(z, ox, oy)?;
    TileId::new(z, ox + spec.tiles_x - 1, oy + spec.tiles_y - 1)?;
    let (w, h) = ((spec.tiles_x * spec.quad_size) as usize, (spec.tiles_y * spec.quad_size) as usize);
    let base = GeoTransform::for_tile(origin, spec.quad_size as usize);
    let transform = GeoTransform::new(base.origin_x, base.origin_y, base.pixel_size, w, h)?;
    let landcover = build_landcover(spec, &transform)?;
    let countries = build_countries(spec, &transform)?;
    let country_index = CountryIndex::new(countries.clone());
    let mut world = World {
        spec: spec.clone(),
        grid,
        origin,
        transform,
        landcover,
        countries,
        features: Vec::new(),
        labels: Vec::new(),
        confusers: Vec::new(),
        country_index,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut placer = Placer { taken: Vec::new(), width: w as i64, height: h as i64 };
    world.plant_solar(&mut rng, &mut placer)?;
    world.plant_wind(&mut rng, &mut placer)?;
    world.plant_confusers(&mut rng, &mut placer)?;
    Ok(world)
}

fn build_landcover(spec: &WorldSpec, world: &GeoTransform) -> Result<LandCoverGrid, SynthError> {
    let cell = 300.0 / spec.center_lat.to_radians().cos();
    let gw = (world.width as f64 * world.pixel_size / cell).ceil() as usize;
    let gh = (world.height as f64 * world.pixel_size / cell).ceil() as usize;
    let t = GeoTransform::new(world.origin_x, world.origin_y, cell, gw, gh)?;
    let mut classes = Vec::with_capacity(gw * gh);
    for r in 0..gh {
        for c in 0..gw {
            let v = render::value_noise(spec.seed ^ 0x1C, c as f64, r as f64, 5.0);
            let u = render::value_noise(spec.seed ^ 0x2D, c as f64, r as f64, 3.0);
            let class = if u > 0.86 {
                19
            } else if v < 0.06 {
                WATER
            } else if v < 0.24 {
                6
            } else if v < 0.44 {
                1
            } else if v < 0.58 {
                3
            } else if v < 0.74 {
                13
            } else if v < 0.88 {
                12
            } else {
                20
            };
            classes.push(class);
        }
    }
    Ok(LandCoverGrid::new(t, 2018, classes)?)
}

fn iso3(i: usize) -> String {
    format!("X{}{}", (b'A' + (i / 26) as u8) as char, (b'A' + (i % 26) as u8) as char)
}

fn build_countries(spec: &WorldSpec, world: &GeoTransform) -> Result<Vec<(String, GeoPolygon)>, SynthError> {
    let (lon0, lat1) = world.pixel_to_lonlat(0.0, 0.0);
    let (lon1, lat0) = world.pixel_to_lonlat(world.width as f64, world.height as f64);
    let (nx, ny) = (spec.countries_x as usize, spec.countries_y as usize);
    let pad = 0.01;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let x = |k: usize| if k == 0 { lon0 - pad } else if k == nx { lon1 + pad } else { lon0 + (lon1 - lon0) * k as f64 / nx as f64 };
            let y = |k: usize| if k == 0 { lat0 - pad } else if k == ny { lat1 + pad } else { lat0 + (lat1 - lat0) * k as f64 / ny as f64 };
            out.push((iso3(j * nx + i), GeoPolygon::rectangle([x(i), y(j)], [x(i + 1), y(j + 1)])?));
        }
    }
    // an enclave inside the first country
    let (cx0, cy0) = (lon0 + (lon1 - lon0) * 0.35 / nx as f64, lat0 + (lat1 - lat0) * 0.35 / ny as f64);
    let (cx1, cy1) = (lon0 + (lon1 - lon0) * 0.65 / nx as f64, lat0 + (lat1 - lat0) * 0.65 / ny as f64);
    out.push(("XEN".to_string(), GeoPolygon::rectangle([cx0, cy0], [cx1, cy1])?));
    Ok(out)
}

fn uniform_quarter(rng: &mut ChaCha8Rng, lo: Quarter, hi: Quarter) -> Quarter {
    lo.offset(rng.random_range(0..=lo.quarters_until(hi)))
}

impl World {
    fn draw_plan(&self, rng: &mut ChaCha8Rng) -> Plan {
        if rng.random::<f64>() < self.spec.unlabeled_fraction {
            return Plan::Unlabeled;
        }
        self.draw_plan_labeled(rng)
    }

    /// Built date consistent with the label plan: labeled features exist by
    /// the label quarter unless their label is temporally wrong.
    fn draw_built(&self, rng: &mut ChaCha8Rng, plan: &Plan) -> BuiltDate {
        let s = &self.spec;
        match plan {
            Plan::Unlabeled | Plan::Labeled(NoiseMode::Temporal) => {
                BuiltDate::Quarter(uniform_quarter(rng, s.label_quarter.next(), s.end_quarter))
            }
            Plan::Labeled(_) => {
                if rng.random::<f64>() < s.pre_series_fraction || s.label_quarter == s.start_quarter {
                    BuiltDate::PreSeries
                } else {
                    BuiltDate::Quarter(uniform_quarter(rng, s.start_quarter.next(), s.label_quarter))
                }
            }
        }
    }

    fn on_land(&self, r: &PixelRect) -> bool {
        [(r.x, r.y), (r.x + r.w - 1, r.y), (r.x, r.y + r.h - 1), (r.x + r.w - 1, r.y + r.h - 1)].iter().all(|&(x, y)| {
            let (lon, lat) = self.transform.pixel_to_lonlat(x as f64 + 0.5, y as f64 + 0.5);
            self.landcover.class_at(lon, lat) != WATER
        })
    }

    pub fn rect_polygon(&self, r: &PixelRect) -> GeoPolygon {
        let (lon0, lat1) = self.transform.pixel_to_lonlat(r.x as f64, r.y as f64);
        let (lon1, lat0) = self.transform.pixel_to_lonlat((r.x + r.w) as f64, (r.y + r.h) as f64);
        GeoPolygon::rectangle([lon0, lat0], [lon1, lat1]).expect("non-degenerate rectangle")
    }

    pub fn pixel_point(&self, col: i64, row: i64) -> GeoPoint {
        let (lon, lat) = self.transform.pixel_to_lonlat(col as f64 + 0.5, row as f64 + 0.5);
        GeoPoint::new(lon, lat)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_feature(&mut self, kind: FeatureKind, rect: PixelRect, apron: i64, orientation: u8, built: BuiltDate, decoy: bool, group: Option<u32>) -> u32 {
        let id = self.features.len() as u32;
        let geometry = match kind {
            FeatureKind::Solar => GeoFeature::Polygon(self.rect_polygon(&rect)),
            FeatureKind::Wind => GeoFeature::Point(self.pixel_point(rect.x + 1, rect.y + 1)),
        };
        let landcover_class = self.landcover.class_for_feature(&geometry);
        let country = self.country_index.assign_feature(&geometry).to_string();
        self.features.push(PlantedFeature {
            id,
            kind,
            rect,
            apron,
            orientation,
            built,
            removed: None,
            decoy,
            group: group.unwrap_or(id),
            true_geometry: geometry,
            landcover_class,
            country,
        });
        id
    }

    fn push_label(&mut self, kind: FeatureKind, shape: LabelShape, mode: NoiseMode, source: Option<u32>) {
        let geometry = match shape {
            LabelShape::Rect(r) => GeoFeature::Polygon(self.rect_polygon(&r)),
            LabelShape::Point(c, r) => GeoFeature::Point(self.pixel_point(c, r)),
        };
        let id = self.labels.len() as u32;
        self.labels.push(NoisyLabel { id, kind, shape, geometry, noise_mode: mode, source_feature: source });
    }

    fn shift(&self, rng: &mut ChaCha8Rng) -> (i64, i64) {
        let (lo, hi) = self.spec.spatial_shift_px;
        loop {
            let d = rng.random_range(lo..=hi);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = ((d * a.cos()).round() as i64, (d * a.sin()).round() as i64);
            let len = ((dx * dx + dy * dy) as f64).sqrt();
            if len >= lo.floor() && len <= hi.ceil() && (dx, dy) != (0, 0) {
                return (dx, dy);
            }
        }
    }

    fn plant_solar(&mut self, rng: &mut ChaCha8Rng, placer: &mut Placer) -> Result<(), SynthError> {
        let s = self.spec.clone();
        let (lo, hi) = s.solar_side_px;
        let mut farms = Vec::new();
        if s.seam_farm && s.tiles_x >= 2 && s.solar_count > 0 {
            let (w, h) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            let a = rng.random_range(s.apron_px.0..=s.apron_px.1);
            let seam = i64::from(s.quad_size);
            let mut placed = false;
            for _ in 0..2000 {
                let y = rng.random_range(4..(placer.height - h - 2 * a - 4).max(5));
                let r = PixelRect::new(seam - w / 2 - a, y, w + 2 * a, h + 2 * a);
                if placer.fits(&r, 6) && self.on_land(&r) {
                    placer.taken.push(r);
                    farms.push((r.grown(-a), a));
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(SynthError::Placement("no room for the seam-straddling array".into()));
            }
        }
        while farms.len() < s.solar_count {
            let (w, h) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            let a = rng.random_range(s.apron_px.0..=s.apron_px.1);
            let r = self.place_rect(rng, placer, w + 2 * a, h + 2 * a, 6)?;
            farms.push((r.grown(-a), a));
        }
        for (r, apron) in farms {
            let plan = self.draw_plan(rng);
            let built = self.draw_built(rng, &plan);
            let orientation = rng.random_range(0..2u8);
            let id = self.push_feature(FeatureKind::Solar, r, apron, orientation, built, false, None);
            if let Plan::Labeled(mode) = plan {
                let shape = match mode {
                    NoiseMode::Semantic => {
                        let f = rng.random_range(s.semantic_scale.0..=s.semantic_scale.1);
                        let mut big = r.scaled(f);
                        if big.area() <= r.area() {
                            big = r.grown(1);
                        }
                        big
                    }
                    NoiseMode::Spatial => {
                        let (dx, dy) = self.shift(rng);
                        r.translated(dx, dy)
                    }
                    NoiseMode::None | NoiseMode::Temporal => r,
                };
                self.push_label(FeatureKind::Solar, LabelShape::Rect(shape), mode, Some(id));
            }
        }
        // small arrays below the area threshold, never labeled
        let ps = s.pixel_ground_m();
        for _ in 0..s.decoy_count {
            let area = rng.random_range(2_500.0..7_000.0);
            let side = (area as f64).sqrt() / ps;
            let aspect = rng.random_range(0.7..1.4);
            let (w, h) = (((side * aspect).round() as i64).max(3), ((side / aspect).round() as i64).max(3));
            let r = self.place_rect(rng, placer, w, h, 6)?;
            let orientation = rng.random_range(0..2u8);
            self.push_feature(FeatureKind::Solar, r, 0, orientation, BuiltDate::PreSeries, true, None);
        }
        Ok(())
    }

    fn place_rect(&self, rng: &mut ChaCha8Rng, placer: &mut Placer, w: i64, h: i64, margin: i64) -> Result<PixelRect, SynthError> {
        for _ in 0..5000 {
            let x = rng.random_range(4..(placer.width - w - 4).max(5));
            let y = rng.random_range(4..(placer.height - h - 4).max(5));
            let r = PixelRect::new(x, y, w, h);
            if placer.fits(&r, margin) && self.on_land(&r) {
                placer.taken.push(r);
                return Ok(r);
            }
        }
        Err(SynthError::Placement(format!("no room for a {w}x{h} object after 5000 attempts")))
    }

    fn plant_wind(&mut self, rng: &mut ChaCha8Rng, placer: &mut Placer) -> Result<(), SynthError> {
        let s = self.spec.clone();
        let mut left = s.wind_count;
        let mut farm_id = 1_000_000u32;
        while left > 0 {
            let n = rng.random_range(s.turbines_per_farm.0..=s.turbines_per_farm.1).min(left);
            let spacing = rng.random_range(s.turbine_spacing_px.0..=s.turbine_spacing_px.1);
            let cols = (n as f64).sqrt().ceil() as i64;
            let rows = (n as i64 + cols - 1) / cols;
            let repower = rng.random::<f64>() < s.repower_fraction;
            let offset = [(10, 0), (0, 10), (-10, 0), (0, -10), (8, 8), (-8, 8)][rng.random_range(0..6)];
            let mut sites = None;
            for _ in 0..3000 {
                let x0 = rng.random_range(12..(placer.width - cols * spacing - 12).max(13));
                let y0 = rng.random_range(12..(placer.height - rows * spacing - 12).max(13));
                let cand: Vec<PixelRect> = (0..n as i64)
                    .map(|k| {
                        let jx = rng.random_range(-2..=2);
                        let jy = rng.random_range(-2..=2);
                        PixelRect::new(x0 + (k % cols) * spacing + jx, y0 + (k / cols) * spacing + jy, 3, 3)
                    })
                    .collect();
                let reserve: Vec<PixelRect> = cand
                    .iter()
                    .flat_map(|r| {
                        let mut v = vec![PixelRect::new(r.x, r.y, 8, 8)];
                        if repower {
                            v.push(PixelRect::new(r.x + offset.0, r.y + offset.1, 8, 8));
                        }
                        v
                    })
                    .collect();
                let ok = reserve.iter().all(|r| placer.fits(r, 2) && self.on_land(r));
                if ok {
                    placer.taken.extend(reserve);
                    sites = Some(cand);
                    break;
                }
            }
            let sites = sites.ok_or_else(|| SynthError::Placement(format!("no room for a {n}-turbine farm")))?;
            let farm_plan_unlabeled = rng.random::<f64>() < s.unlabeled_fraction;
            let farm_built = self.draw_built(rng, &if farm_plan_unlabeled { Plan::Unlabeled } else { Plan::Labeled(NoiseMode::None) });
            let mut ids = Vec::new();
            for site in sites {
                let plan = if farm_plan_unlabeled { Plan::Unlabeled } else { self.draw_plan_labeled(rng) };
                let built = match plan {
                    Plan::Labeled(NoiseMode::Temporal) => self.draw_built(rng, &plan),
                    _ => farm_built,
                };
                let id = self.push_feature(FeatureKind::Wind, site, 0, 0, built, false, Some(farm_id));
                ids.push(id);
                let (cx, cy) = (site.x + 1, site.y + 1);
                if let Plan::Labeled(mode) = plan {
                    let (shape, mode) = match mode {
                        NoiseMode::Semantic => match self.place_tower_near(rng, placer, cx, cy) {
                            Some((tx, ty)) => (LabelShape::Point(tx, ty), NoiseMode::Semantic),
                            None => {
                                let (dx, dy) = self.shift(rng);
                                (LabelShape::Point(cx + dx, cy + dy), NoiseMode::Spatial)
                            }
                        },
                        NoiseMode::Spatial => {
                            let (dx, dy) = self.shift(rng);
                            (LabelShape::Point(cx + dx, cy + dy), NoiseMode::Spatial)
                        }
                        m => (LabelShape::Point(cx, cy), m),
                    };
                    self.push_label(FeatureKind::Wind, shape, mode, Some(id));
                }
            }
            if repower {
                let latest = ids
                    .iter()
                    .filter_map(|&i| match self.features[i as usize].built {
                        BuiltDate::Quarter(q) => Some(q),
                        BuiltDate::PreSeries => None,
                    })
                    .max()
                    .unwrap_or(s.start_quarter)
                    .max(s.label_quarter);
                if latest < s.end_quarter {
                    let at = uniform_quarter(rng, latest.next(), s.end_quarter);
                    for id in ids {
                        self.repower(id, at, offset)?;
                    }
                }
            }
            farm_id += 1;
            left -= n;
        }
        Ok(())
    }

    fn draw_plan_labeled(&self, rng: &mut ChaCha8Rng) -> Plan {
        let n = self.spec.noise;
        let u: f64 = rng.random();
        Plan::Labeled(if u < n.semantic {
            NoiseMode::Semantic
        } else if u < n.semantic + n.spatial {
            NoiseMode::Spatial
        } else if u < n.total() {
            NoiseMode::Temporal
        } else {
            NoiseMode::None
        })
    }

    fn place_tower_near(&mut self, rng: &mut ChaCha8Rng, placer: &mut Placer, cx: i64, cy: i64) -> Option<(i64, i64)> {
        for _ in 0..200 {
            let d = rng.random_range(8.0..20.0);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let (tx, ty) = (cx + (d * f64::cos(a)).round() as i64, cy + (d * f64::sin(a)).round() as i64);
            let r = PixelRect::new(tx - 2, ty - 2, 5, 5);
            if placer.fits(&r, 1) {
                placer.taken.push(r);
                self.confusers.push(Confuser { kind: ConfuserKind::Tower, rect: r });
                return Some((tx, ty));
            }
        }
        None
    }

    fn plant_confusers(&mut self, rng: &mut ChaCha8Rng, placer: &mut Placer) -> Result<(), SynthError> {
        let s = self.spec.clone();
        for _ in 0..s.bright_roof_count {
            let (w, h) = (rng.random_range(6..=16), rng.random_range(6..=16));
            let r = self.place_rect(rng, placer, w, h, 3)?;
            self.confusers.push(Confuser { kind: ConfuserKind::BrightRoof, rect: r });
        }
        let min_side = (10_500.0f64.sqrt() / s.pixel_ground_m()).ceil() as i64;
        for _ in 0..s.dark_roof_count {
            let (w, h) = (rng.random_range(min_side..=min_side + 8), rng.random_range(min_side..=min_side + 8));
            let r = self.place_rect(rng, placer, w, h, 4)?;
            self.confusers.push(Confuser { kind: ConfuserKind::DarkRoof, rect: r });
        }
        for _ in 0..s.tower_count {
            let r = self.place_rect(rng, placer, 5, 5, 3)?;
            self.confusers.push(Confuser { kind: ConfuserKind::Tower, rect: r });
        }
        for _ in 0..s.bare_lot_count {
            let (w, h) = (rng.random_range(min_side..=min_side + 24), rng.random_range(min_side..=min_side + 24));
            let r = self.place_rect(rng, placer, w, h, 4)?;
            self.confusers.push(Confuser { kind: ConfuserKind::BareLot, rect: r });
        }
        for _ in 0..s.greenhouse_count {
            let (w, h) = (rng.random_range(min_side..=min_side + 6), rng.random_range(min_side..=min_side + 6));
            let r = self.place_rect(rng, placer, w, h, 4)?;
            self.confusers.push(Confuser { kind: ConfuserKind::Greenhouse, rect: r });
        }
        Ok(())
    }

    /// Removes turbine `feature_id` from `at` onward and plants a replacement
    /// shifted by `offset` pixels, built at `at`. Returns the new id.
    pub fn repower(&mut self, feature_id: u32, at: Quarter, offset: (i64, i64)) -> Result<u32, SynthError> {
        let f = self
            .features
            .get(feature_id as usize)
            .ok_or_else(|| SynthError::InvalidSpec(format!("unknown feature {feature_id}")))?
            .clone();
        if f.kind != FeatureKind::Wind {
            return Err(SynthError::InvalidSpec("only wind turbines can be repowered".into()));
        }
        self.features[feature_id as usize].removed = Some(at);
        Ok(self.push_feature(FeatureKind::Wind, f.rect.translated(offset.0, offset.1), 0, 0, BuiltDate::Quarter(at), false, Some(f.group)))
    }

    pub fn width(&self) -> usize {
        self.transform.width
    }

    pub fn height(&self) -> usize {
        self.transform.height
    }

    pub fn country_index(&self) -> &CountryIndex {
        &self.country_index
    }

    /// All tiles of the world, sorted.
    pub fn tile_ids(&self) -> Vec<TileId> {
        let mut v = Vec::new();
        for y in 0..self.spec.tiles_y {
            for x in 0..self.spec.tiles_x {
                v.push(TileId { zoom: self.origin.zoom, x: self.origin.x + x, y: self.origin.y + y });
            }
        }
        v.sort();
        v
    }

    /// World-pixel offset of a tile's north-west corner.
    pub fn tile_offset(&self, tile: TileId) -> (i64, i64) {
        let q = i64::from(self.spec.quad_size);
        ((i64::from(tile.x) - i64::from(self.origin.x)) * q, (i64::from(tile.y) - i64::from(self.origin.y)) * q)
    }

    /// Global pixel of world pixel (0, 0).
    pub fn global_offset(&self) -> (i64, i64) {
        let q = i64::from(self.spec.quad_size);
        (i64::from(self.origin.x) * q, i64::from(self.origin.y) * q)
    }

    fn contains_tile(&self, tile: TileId) -> bool {
        tile.zoom == self.origin.zoom
            && tile.x >= self.origin.x
            && tile.y >= self.origin.y
            && tile.x < self.origin.x + self.spec.tiles_x
            && tile.y < self.origin.y + self.spec.tiles_y
    }

    /// RGB window of world pixels at `quarter`.
    pub fn render_window(&self, quarter: Quarter, x0: i64, y0: i64, w: usize, h: usize) -> RasterTile {
        let c = self.render_canvas(quarter, x0, y0, w, h);
        let (gx, gy) = self.global_offset();
        let tile = self.grid_tile_at(gx + x0, gy + y0);
        let transform = self.transform.window(x0, y0, w, h);
        RasterTile::new(tile, transform, 3, Bands::U8(c.rgb), quarter).expect("consistent canvas")
    }

    fn grid_tile_at(&self, gx: i64, gy: i64) -> TileId {
        let q = i64::from(self.spec.quad_size);
        let n = 1i64 << self.origin.zoom;
        TileId { zoom: self.origin.zoom, x: gx.div_euclid(q).clamp(0, n - 1) as u32, y: gy.div_euclid(q).clamp(0, n - 1) as u32 }
    }

    pub fn render_tile(&self, tile: TileId, quarter: Quarter) -> Result<RasterTile, GeoError> {
        if !self.contains_tile(tile) {
            return Err(GeoError::InvalidTile(format!("tile {tile} outside the synthetic world")));
        }
        let (x0, y0) = self.tile_offset(tile);
        let q = self.spec.quad_size as usize;
        let mut t = self.render_window(quarter, x0, y0, q, q);
        t.tile_id = tile;
        Ok(t)
    }

    /// Pixels of present, non-decoy arrays in a world-pixel window.
    pub fn solar_truth_mask(&self, quarter: Quarter, x0: i64, y0: i64, w: usize, h: usize, include_decoys: bool) -> BitMask {
        let mut m = BitMask::new(w, h);
        for f in &self.features {
            if f.kind == FeatureKind::Solar && f.present_at(quarter) && (include_decoys || !f.decoy) {
                fill_rect(&mut m, &f.rect, x0, y0);
            }
        }
        m
    }

    /// Label rectangle (solar) or single pixel (wind) within a window.
    pub fn label_mask(&self, label: &NoisyLabel, x0: i64, y0: i64, w: usize, h: usize) -> BitMask {
        let mut m = BitMask::new(w, h);
        match label.shape {
            LabelShape::Rect(r) => fill_rect(&mut m, &r, x0, y0),
            LabelShape::Point(c, r) => fill_rect(&mut m, &PixelRect::new(c, r, 1, 1), x0, y0),
        }
        m
    }

    /// Ground-truth features present at `quarter`, with their attributes.
    pub fn truth_features(&self, quarter: Quarter, kind: FeatureKind, include_decoys: bool) -> Vec<GeoFeature> {
        self.truth_where(|f| f.kind == kind && f.present_at(quarter) && (include_decoys || !f.decoy))
    }

    /// Every planted feature of `kind` over the whole series, decoys and
    /// removed turbines included.
    pub fn all_truth_features(&self, kind: FeatureKind) -> Vec<GeoFeature> {
        self.truth_where(|f| f.kind == kind)
    }

    fn truth_where(&self, keep: impl Fn(&PlantedFeature) -> bool) -> Vec<GeoFeature> {
        self.features
            .iter()
            .filter(|f| keep(f))
            .map(|f| {
                let mut g = f.true_geometry.clone();
                let p = g.properties_mut();
                p.insert("id".into(), f.id.into());
                p.insert("kind".into(), f.kind.as_str().into());
                p.insert("built_quarter".into(), f.built.to_string().into());
                if let Some(r) = f.removed {
                    p.insert("removed_quarter".into(), r.to_string().into());
                }
                p.insert("decoy".into(), f.decoy.into());
                p.insert("group".into(), f.group.into());
                p.insert("landcover_2018".into(), esa_code(f.landcover_class).map_or(0, u32::from).into());
                p.insert("country_iso3".into(), f.country.clone().into());
                g
            })
            .collect()
    }

    /// Noisy labels as GeoJSON features carrying their noise flag.
    pub fn label_features(&self, kind: FeatureKind) -> Vec<GeoFeature> {
        self.labels
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| {
                let mut g = l.geometry.clone();
                let p: &mut Properties = g.properties_mut();
                p.insert("id".into(), l.id.into());
                p.insert("kind".into(), l.kind.as_str().into());
                p.insert("noise_mode".into(), l.noise_mode.as_str().into());
                if let Some(s) = l.source_feature {
                    p.insert("source_feature".into(), s.into());
                }
                g
            })
            .collect()
    }

    /// Centers of every tower (planted confusers and semantic-noise towers).
    pub fn tower_pixels(&self) -> Vec<(i64, i64)> {
        self.confusers.iter().filter(|c| c.kind == ConfuserKind::Tower).map(Confuser::center).collect()
    }
}

fn fill_rect(m: &mut BitMask, r: &PixelRect, x0: i64, y0: i64) {
    let (w, h) = (m.width() as i64, m.height() as i64);
    for y in (r.y - y0).max(0)..(r.y + r.h - y0).min(h) {
        for x in (r.x - x0).max(0)..(r.x + r.w - x0).min(w) {
            m.set(x as usize, y as usize, true);
        }
    }
}

impl ImagerySource for World {
    fn grid(&self) -> QuadGrid {
        self.grid
    }

    fn tiles(&self) -> Vec<TileId> {
        self.tile_ids()
    }

    fn tile(&self, tile: TileId, quarter: Quarter) -> Result<RasterTile, GeoError> {
        self.render_tile(tile, quarter)
    }

    fn window(&self, quarter: Quarter, gx: i64, gy: i64, w: usize, h: usize) -> Result<RasterTile, GeoError> {
        let (ox, oy) = self.global_offset();
        Ok(self.render_window(quarter, gx - ox, gy - oy, w, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> WorldSpec {
        WorldSpec {
            tiles_x: 2,
            tiles_y: 2,
            quad_size: 256,
            solar_count: 6,
            wind_count: 20,
            decoy_count: 2,
            bright_roof_count: 4,
            dark_roof_count: 2,
            tower_count: 4,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn empty_world_has_no_labels() {
        let spec = WorldSpec { solar_count: 0, wind_count: 0, decoy_count: 0, bright_roof_count: 0, dark_roof_count: 0, tower_count: 0, ..small_spec() };
        let w = generate_world(&spec).unwrap();
        assert!(w.features.is_empty() && w.labels.is_empty());
        let tile = w.tile_ids()[0];
        assert!(w.render_tile(tile, Quarter::SERIES_END).is_ok());
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate_world(&small_spec()).unwrap();
        let b = generate_world(&small_spec()).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        let t = a.tile_ids()[3];
        assert_eq!(a.render_tile(t, Quarter::SERIES_END).unwrap(), b.render_tile(t, Quarter::SERIES_END).unwrap());
    }

    #[test]
    fn zero_noise_labels_match_truth() {
        let spec = WorldSpec { noise: NoiseRates::ZERO, ..small_spec() };
        let w = generate_world(&spec).unwrap();
        assert!(!w.labels.is_empty());
        for l in &w.labels {
            let f = &w.features[l.source_feature.unwrap() as usize];
            assert_eq!(l.noise_mode, NoiseMode::None);
            assert_eq!(l.geometry.as_polygon().map(|p| &p.exterior), f.true_geometry.as_polygon().map(|p| &p.exterior));
            assert_eq!(l.geometry.as_point().map(|p| (p.lon, p.lat)), f.true_geometry.as_point().map(|p| (p.lon, p.lat)));
        }
    }

    #[test]
    fn arrays_meet_the_area_threshold() {
        let w = generate_world(&small_spec()).unwrap();
        for f in w.features.iter().filter(|f| f.kind == FeatureKind::Solar) {
            let area = f.true_geometry.as_polygon().unwrap().area_m2();
            assert_eq!(area >= 10_000.0, !f.decoy, "feature {} area {area}", f.id);
        }
    }

    #[test]
    fn imagery_shows_features_only_when_built() {
        let w = generate_world(&small_spec()).unwrap();
        let f = w.features.iter().find(|f| f.kind == FeatureKind::Solar && matches!(f.built, BuiltDate::Quarter(_))).unwrap();
        let BuiltDate::Quarter(b) = f.built else { unreachable!() };
        let r = f.rect;
        let before = w.render_window(b.offset(-1), r.x, r.y, r.w as usize, r.h as usize);
        let at = w.render_window(b, r.x, r.y, r.w as usize, r.h as usize);
        let later = w.render_window(Quarter::SERIES_END, r.x, r.y, r.w as usize, r.h as usize);
        assert_ne!(before, at);
        assert_eq!(at.as_u8(), later.as_u8());
    }

    #[test]
    fn repowering_moves_the_turbine() {
        let mut w = generate_world(&WorldSpec { repower_fraction: 0.0, ..small_spec() }).unwrap();
        let id = w.features.iter().find(|f| f.kind == FeatureKind::Wind && f.built == BuiltDate::PreSeries).map(|f| f.id);
        let Some(id) = id else { return };
        let at = Quarter::new(2020, 1).unwrap();
        let new = w.repower(id, at, (10, 0)).unwrap();
        let (old, newf) = (&w.features[id as usize], &w.features[new as usize]);
        assert!(old.present_at(at.offset(-1)) && !old.present_at(at));
        assert!(!newf.present_at(at.offset(-1)) && newf.present_at(at));
        let (cx, cy) = old.center();
        let px = |q: Quarter| w.render_window(q, cx, cy, 1, 1).as_u8().unwrap().to_vec();
        assert_eq!(px(at.offset(-1)), vec![232, 234, 236]);
        assert_ne!(px(at), vec![232, 234, 236]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = WorldSpec { noise: NoiseRates { semantic: 0.5, spatial: 0.4, temporal: 0.3 }, ..small_spec() };
        assert!(matches!(generate_world(&bad), Err(SynthError::InvalidSpec(_))));
        let crowded = WorldSpec { solar_count: 500, ..small_spec() };
        assert!(matches!(generate_world(&crowded), Err(SynthError::Placement(_))));
    }
}

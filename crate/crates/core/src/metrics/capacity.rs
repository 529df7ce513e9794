//! Capacity from geometry: a yearly solar power-density schedule, a fixed
//! per-turbine rating, country totals and comparison with reference
//! statistics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::BuiltDate;

use super::{kendall_tau, pearson_r2, StatsError};

pub const WIND_MW_PER_TURBINE: f64 = 3.0;

/// Solar MW per km² by construction year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerDensitySchedule {
    /// Density for builds up to and including `base_year`.
    pub base_density: f64,
    pub base_year: i32,
    /// Increase per year after `base_year`.
    pub yearly_increment: f64,
    /// Density from `final_year` on.
    pub final_density: f64,
    pub final_year: i32,
    pub wind_mw_per_turbine: f64,
}

impl Default for PowerDensitySchedule {
    fn default() -> Self {
        Self {
            base_density: 51.5,
            base_year: 2018,
            yearly_increment: 4.33,
            final_density: 65.9,
            final_year: 2022,
            wind_mw_per_turbine: WIND_MW_PER_TURBINE,
        }
    }
}

impl PowerDensitySchedule {
    pub fn solar_density(&self, year: i32) -> f64 {
        if year >= self.final_year {
            self.final_density
        } else if year <= self.base_year {
            self.base_density
        } else {
            self.base_density + self.yearly_increment * f64::from(year - self.base_year)
        }
    }

    /// Density for a build date; pre-series builds use the base density.
    pub fn density_for(&self, built: BuiltDate) -> f64 {
        built.year().map_or(self.base_density, |y| self.solar_density(y))
    }
}

pub fn solar_capacity_mw(area_km2: f64, built: BuiltDate, schedule: &PowerDensitySchedule) -> f64 {
    area_km2.max(0.0) * schedule.density_for(built)
}

pub fn wind_capacity_mw(turbines: usize) -> f64 {
    WIND_MW_PER_TURBINE * turbines as f64
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CountryAggregate {
    pub iso3: String,
    pub solar_km2: f64,
    pub solar_mw: f64,
    pub turbine_count: usize,
    pub wind_mw: f64,
}

/// Country totals from solar (country, area m², build date) records and
/// turbine country codes, sorted by ISO3.
pub fn aggregate_by_country<'a>(
    solar: impl IntoIterator<Item = (&'a str, f64, BuiltDate)>,
    turbines: impl IntoIterator<Item = &'a str>,
    schedule: &PowerDensitySchedule,
) -> Vec<CountryAggregate> {
    let mut by: BTreeMap<&str, CountryAggregate> = BTreeMap::new();
    for (iso, area_m2, built) in solar {
        let a = by.entry(iso).or_insert_with(|| CountryAggregate { iso3: iso.to_string(), ..Default::default() });
        let km2 = area_m2 / 1e6;
        a.solar_km2 += km2;
        a.solar_mw += solar_capacity_mw(km2, built, schedule);
    }
    for iso in turbines {
        let a = by.entry(iso).or_insert_with(|| CountryAggregate { iso3: iso.to_string(), ..Default::default() });
        a.turbine_count += 1;
        a.wind_mw += schedule.wind_mw_per_turbine;
    }
    by.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Solar,
    OnshoreWind,
}

impl Technology {
    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Solar => "solar",
            Technology::OnshoreWind => "onshore_wind",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub iso3: String,
    pub technology: Technology,
    pub year: i32,
    pub capacity_mw: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CapacityError {
    #[error("reference table: {0}")]
    Csv(#[from] csv::Error),
    #[error("reference table: {0}")]
    Invalid(String),
    #[error("only {0} countries in common with the reference; need 2")]
    TooFewCountries(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub fn read_reference_table(path: &Path) -> Result<Vec<ReferenceRow>, CapacityError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: ReferenceRow = rec?;
        if !(row.capacity_mw >= 0.0) {
            return Err(CapacityError::Invalid(format!("negative capacity for {}", row.iso3)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub technology: Technology,
    pub countries: usize,
    pub kendall_tau: f64,
    pub pearson_r2: f64,
    pub ours_gw: f64,
    pub reference_gw: f64,
    /// Ours minus reference; negative where we underestimate.
    pub difference_gw: f64,
    /// (iso3, ours MW, reference MW) over the inner join.
    pub rows: Vec<(String, f64, f64)>,
}

/// Agreement with reference capacities over the countries present in both.
/// When the reference has several years for a country, `year` selects one
/// (the latest year if `None`).
pub fn compare_to_reference(
    aggregates: &[CountryAggregate],
    reference: &[ReferenceRow],
    technology: Technology,
    year: Option<i32>,
) -> Result<ReferenceComparison, CapacityError> {
    let mut refs: BTreeMap<&str, &ReferenceRow> = BTreeMap::new();
    for r in reference.iter().filter(|r| r.technology == technology && year.is_none_or(|y| r.year == y)) {
        match refs.get(r.iso3.as_str()) {
            Some(prev) if prev.year == r.year => {
                return Err(CapacityError::Invalid(format!("duplicate {} row for {} {}", technology.as_str(), r.iso3, r.year)))
            }
            Some(prev) if prev.year > r.year => {}
            _ => {
                refs.insert(&r.iso3, r);
            }
        }
    }
    let mut rows = Vec::new();
    for a in aggregates {
        if let Some(r) = refs.get(a.iso3.as_str()) {
            let ours = match technology {
                Technology::Solar => a.solar_mw,
                Technology::OnshoreWind => a.wind_mw,
            };
            rows.push((a.iso3.clone(), ours, r.capacity_mw));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    if rows.len() < 2 {
        return Err(CapacityError::TooFewCountries(rows.len()));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let ours_gw = x.iter().sum::<f64>() / 1000.0;
    let reference_gw = y.iter().sum::<f64>() / 1000.0;
    Ok(ReferenceComparison {
        technology,
        countries: rows.len(),
        kendall_tau: kendall_tau(&x, &y)?,
        pearson_r2: pearson_r2(&x, &y)?,
        ours_gw,
        reference_gw,
        difference_gw: ours_gw - reference_gw,
        rows,
    })
}

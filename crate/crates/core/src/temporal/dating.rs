//! Construction dating from the quarterly positive-area series of a feature.

use serde::{Deserialize, Serialize};

use crate::geo::{series_quarters, BitMask, BuiltDate, GeoError};

pub const SERIES_LEN: usize = 27;
pub const DEFAULT_FRACTION: f64 = 0.10;

/// Per-quarter fraction of a feature's final-quarter extent predicted
/// positive, ordered from the first imagery quarter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterSeries {
    pub id: String,
    pub fractions: Vec<f64>,
}

impl QuarterSeries {
    pub fn new(id: impl Into<String>, fractions: Vec<f64>) -> Result<Self, GeoError> {
        if fractions.len() != SERIES_LEN {
            return Err(GeoError::Domain(format!("series has {} quarters, want {SERIES_LEN}", fractions.len())));
        }
        if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(GeoError::Domain(format!("fraction {f} outside [0, 1]")));
        }
        Ok(Self { id: id.into(), fractions })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateEstimate {
    pub built: BuiltDate,
    /// Set when no quarter reached the threshold and the final quarter was
    /// assumed.
    pub low_confidence: bool,
}

/// First quarter whose fraction reaches `threshold`. A later dip does not
/// reset the date.
pub fn construction_date(series: &QuarterSeries, threshold: f64) -> DateEstimate {
    let quarters = series_quarters();
    match series.fractions.iter().position(|&f| f >= threshold) {
        Some(0) => DateEstimate { built: BuiltDate::PreSeries, low_confidence: false },
        Some(i) => DateEstimate { built: BuiltDate::Quarter(quarters[i]), low_confidence: false },
        None => DateEstimate { built: BuiltDate::Quarter(*quarters.last().expect("27 quarters")), low_confidence: true },
    }
}

/// Fraction of `extent` covered by `positive`; zero for an empty extent.
pub fn positive_fraction(extent: &BitMask, positive: &BitMask) -> Result<f64, GeoError> {
    let n = extent.count_ones();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(extent.intersection_count(positive)? as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Quarter;

    fn series(head: &[f64]) -> QuarterSeries {
        let mut f = vec![head.last().copied().unwrap_or(0.0); SERIES_LEN];
        f[..head.len()].copy_from_slice(head);
        QuarterSeries::new("x", f).unwrap()
    }

    #[test]
    fn first_crossing() {
        let d = construction_date(&series(&[0.0, 0.0, 0.05, 0.20]), DEFAULT_FRACTION);
        assert_eq!(d.built, BuiltDate::Quarter(Quarter::new(2018, 3).unwrap()));
        assert!(!d.low_confidence);
        assert_eq!(construction_date(&series(&[0.8]), DEFAULT_FRACTION).built, BuiltDate::PreSeries);
        // a later dip does not move the date
        let d = construction_date(&series(&[0.0, 0.3, 0.0, 0.0, 0.9]), DEFAULT_FRACTION);
        assert_eq!(d.built, BuiltDate::Quarter(Quarter::new(2018, 1).unwrap()));
    }

    #[test]
    fn never_reached_falls_back() {
        let d = construction_date(&series(&[0.01]), DEFAULT_FRACTION);
        assert_eq!(d.built, BuiltDate::Quarter(Quarter::SERIES_END));
        assert!(d.low_confidence);
        assert!(QuarterSeries::new("x", vec![0.0; 26]).is_err());
        assert!(QuarterSeries::new("x", vec![1.5; 27]).is_err());
    }

    #[test]
    fn fraction_of_extent() {
        let extent = BitMask::from_fn(4, 4, |c, _| c < 2);
        let pos = BitMask::from_fn(4, 4, |_, r| r == 0);
        assert_eq!(positive_fraction(&extent, &pos).unwrap(), 0.25);
        assert_eq!(positive_fraction(&BitMask::new(4, 4), &pos).unwrap(), 0.0);
    }
}

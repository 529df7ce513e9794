//! Calendar quarters and construction-date values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GeoError;

/// A calendar quarter; orders lexicographically on (year, q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    q: u8,
}

impl Quarter {
    /// First quarter of the imagery series (2017Q4).
    pub const SERIES_START: Quarter = Quarter { year: 2017, q: 4 };
    /// Last quarter of the imagery series (2024Q2).
    pub const SERIES_END: Quarter = Quarter { year: 2024, q: 2 };

    pub fn new(year: i32, q: u8) -> Result<Self, GeoError> {
        if !(1..=4).contains(&q) {
            return Err(GeoError::InvalidQuarter(format!("{year}Q{q}")));
        }
        Ok(Self { year, q })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    fn ordinal(&self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.q) - 1
    }

    fn from_ordinal(n: i64) -> Self {
        Self { year: n.div_euclid(4) as i32, q: (n.rem_euclid(4) + 1) as u8 }
    }

    /// The quarter `n` steps later (or earlier for negative `n`).
    pub fn offset(&self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    pub fn next(&self) -> Self {
        self.offset(1)
    }

    /// Signed number of quarters from `self` to `other`.
    pub fn quarters_until(&self, other: Quarter) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeoError::InvalidQuarter(s.to_string());
        let (y, q) = s.trim().split_once(['Q', 'q']).ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q)
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive, ascending run of quarters.
pub fn quarter_sequence(start: Quarter, end: Quarter) -> Result<Vec<Quarter>, GeoError> {
    if start > end {
        return Err(GeoError::EmptyRange(format!("{start} is after {end}")));
    }
    let n = start.quarters_until(end);
    Ok((0..=n).map(|i| start.offset(i)).collect())
}

/// The full 2017Q4..=2024Q2 imagery series (27 quarters).
pub fn series_quarters() -> Vec<Quarter> {
    quarter_sequence(Quarter::SERIES_START, Quarter::SERIES_END).expect("static range")
}

/// When a feature first appears: already there at the series start, or a
/// specific later quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuiltDate {
    PreSeries,
    Quarter(Quarter),
}

impl BuiltDate {
    pub const SENTINEL: &'static str = "PRE_2017Q4";

    /// True if the feature is present in imagery at `q`.
    pub fn present_at(&self, q: Quarter) -> bool {
        match self {
            BuiltDate::PreSeries => true,
            BuiltDate::Quarter(b) => *b <= q,
        }
    }

    /// Year used for power-density lookup; `None` for the pre-series sentinel.
    pub fn year(&self) -> Option<i32> {
        match self {
            BuiltDate::PreSeries => None,
            BuiltDate::Quarter(q) => Some(q.year()),
        }
    }
}

impl fmt::Display for BuiltDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltDate::PreSeries => f.write_str(Self::SENTINEL),
            BuiltDate::Quarter(q) => q.fmt(f),
        }
    }
}

impl FromStr for BuiltDate {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == Self::SENTINEL {
            Ok(BuiltDate::PreSeries)
        } else {
            s.parse().map(BuiltDate::Quarter)
        }
    }
}

impl Serialize for BuiltDate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BuiltDate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(s: &str) -> Quarter {
        s.parse().unwrap()
    }

    #[test]
    fn full_series_has_27_quarters() {
        let seq = series_quarters();
        assert_eq!(seq.len(), 27);
        assert_eq!(seq[0], q("2017Q4"));
        assert_eq!(seq[26], q("2024Q2"));
    }

    #[test]
    fn singleton_and_rollover() {
        assert_eq!(quarter_sequence(q("2018Q1"), q("2018Q1")).unwrap(), vec![q("2018Q1")]);
        assert_eq!(
            quarter_sequence(q("2023Q4"), q("2024Q2")).unwrap(),
            vec![q("2023Q4"), q("2024Q1"), q("2024Q2")]
        );
    }

    #[test]
    fn reversed_range_is_an_error() {
        assert!(matches!(quarter_sequence(q("2020Q2"), q("2020Q1")), Err(GeoError::EmptyRange(_))));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("2020Q5".parse::<Quarter>().is_err());
        assert!("2020".parse::<Quarter>().is_err());
        assert_eq!("PRE_2017Q4".parse::<BuiltDate>().unwrap(), BuiltDate::PreSeries);
        assert_eq!(serde_json::to_string(&q("2019Q3")).unwrap(), "\"2019Q3\"");
    }

    proptest! {
        #[test]
        fn sequence_length_formula(y0 in 2000i32..2030, q0 in 1u8..=4, y1 in 2000i32..2030, q1 in 1u8..=4) {
            let a = Quarter::new(y0, q0).unwrap();
            let b = Quarter::new(y1, q1).unwrap();
            match quarter_sequence(a, b) {
                Ok(seq) => {
                    let expected = 4 * i64::from(y1 - y0) + i64::from(q1) - i64::from(q0) + 1;
                    prop_assert_eq!(seq.len() as i64, expected);
                    prop_assert!(seq.windows(2).all(|w| w[0] < w[1] && w[0].next() == w[1]));
                }
                Err(_) => prop_assert!(a > b),
            }
        }
    }
}

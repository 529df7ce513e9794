//! Construction dating, land-cover joins and country assignment.

pub mod country;
mod dating;
pub mod landcover;

pub use dating::{construction_date, positive_fraction, DateEstimate, QuarterSeries, DEFAULT_FRACTION, SERIES_LEN};

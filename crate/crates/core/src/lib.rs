pub mod cleaning;
pub mod dataset;
pub mod geo;
pub mod lcloss;
pub mod metrics;
pub mod pipeline;
pub mod postfilter;
pub mod scoring;
pub mod synth;
pub mod temporal;
pub mod vectorize;

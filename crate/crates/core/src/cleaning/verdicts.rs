//! Reviewer verdict tables: `id,verdict` rows with a header.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TruePositive,
    FalsePositive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::TruePositive => "true_positive",
            Verdict::FalsePositive => "false_positive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true_positive" | "tp" | "accept" | "keep" => Some(Verdict::TruePositive),
            "false_positive" | "fp" | "reject" => Some(Verdict::FalsePositive),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerdictError {
    #[error("verdict table: {0}")]
    Csv(#[from] csv::Error),
    #[error("verdict table line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("verdict table: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse_verdicts(text: &str) -> Result<Vec<(String, Verdict)>, VerdictError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (Some(id), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(VerdictError::Row { line, msg: "expected id,verdict".into() });
        };
        let verdict = Verdict::parse(v).ok_or_else(|| VerdictError::Row { line, msg: format!("unknown verdict {v:?}") })?;
        if !seen.insert(id.to_string()) {
            return Err(VerdictError::Row { line, msg: format!("duplicate id {id}") });
        }
        out.push((id.to_string(), verdict));
    }
    Ok(out)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<(String, Verdict)>, VerdictError> {
    parse_verdicts(&std::fs::read_to_string(path)?)
}

pub fn write_verdicts(path: &Path, verdicts: &[(String, Verdict)]) -> Result<(), VerdictError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "verdict"])?;
    for (id, v) in verdicts {
        w.write_record([id.as_str(), v.as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(atomic_write(path, &bytes)?)
}

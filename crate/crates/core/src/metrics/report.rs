use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Units;
use crate::error::{Error, Result};

/// Aggregate displacement errors over an evaluated set, in dataset units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ade: f64,
    pub fde: f64,
    /// `(horizon seconds, rmse)`, empty when the horizon is not a whole
    /// number of seconds.
    pub rmse_per_second: Vec<(f64, f64)>,
    pub n_subjects: usize,
    pub units: Units,
}

impl MetricReport {
    /// `name = value` lines, RMSE entries as `rmse_<s>s`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ade = {}", self.ade);
        let _ = writeln!(out, "fde = {}", self.fde);
        for (s, r) in &self.rmse_per_second {
            let _ = writeln!(out, "rmse_{s}s = {r}");
        }
        let _ = writeln!(out, "n_subjects = {}", self.n_subjects);
        let _ = writeln!(out, "units = {}", self.units);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.txt` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let txt = stem.with_extension("txt");
        let json = stem.with_extension("json");
        std::fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        std::fs::write(&json, self.to_json() + "\n").map_err(|e| Error::io(&json, e))
    }
}

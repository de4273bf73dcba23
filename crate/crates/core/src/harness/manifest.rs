//! JSON run manifest, written at start and finalized at the end of every run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::harness::config::render_config;
use crate::state::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Advisory checks are recorded but do not affect the run status.
    pub advisory: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: value <= tolerance,
            advisory: false,
            value,
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub version: String,
    pub lambda0: f64,
    pub lambda0_source: String,
    pub kappa: f64,
    pub eta: f64,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub outputs: Vec<String>,
    pub checks: Vec<CheckResult>,
    /// `running`, `PASS`, `FAIL` or `ERROR`.
    pub status: String,
    pub error: Option<String>,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(config: &SimConfig, lambda0: f64, lambda0_source: &str, kappa: f64, eta: f64) -> Self {
        let config = render_config(config)
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self {
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            lambda0,
            lambda0_source: lambda0_source.into(),
            kappa,
            eta,
            started_unix: now_unix(),
            finished_unix: None,
            outputs: Vec::new(),
            checks: Vec::new(),
            status: "running".into(),
            error: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass || c.advisory)
    }

    pub fn finish(&mut self, checks: Vec<CheckResult>) {
        self.checks = checks;
        self.status = if self.passed() { "PASS" } else { "FAIL" }.into();
        self.finished_unix = Some(now_unix());
    }

    pub fn fail(&mut self, error: &str) {
        self.status = "ERROR".into();
        self.error = Some(error.into());
        self.finished_unix = Some(now_unix());
    }

    pub fn write(&self, path: &Path) -> Result<(), crate::Error> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, crate::Error> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = RunManifest::start(&SimConfig::default(), 0.2, "computed", 0.1, 0.04);
        assert_eq!(m.config["hermite_cutoff"], "16");
        m.finish(vec![
            CheckResult::at_most("a", 1.0, 2.0, ""),
            CheckResult::at_most("b", 3.0, 2.0, "").advisory(),
        ]);
        assert_eq!(m.status, "PASS");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
        m.finish(vec![CheckResult::at_most("c", 3.0, 2.0, "")]);
        assert_eq!(m.status, "FAIL");
    }
}

//! Experiment grid and its TOML configuration file.

use std::path::Path;

use serde::Deserialize;

use super::MethodId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskFreeSource {
    Rate(f64),
    /// The panel's `rf` column, aligned with the evaluated periods.
    PanelColumn,
}

/// The `(K, d, c)` lattice plus run-wide settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub ks: Vec<usize>,
    pub ds: Vec<f64>,
    pub cs: Vec<f64>,
    pub methods: Vec<MethodId>,
    pub seed: u64,
    pub delta: f64,
    pub resample_views_monthly: bool,
    pub annualize_sr: bool,
    pub rf: RiskFreeSource,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            ks: vec![5, 10, 20],
            ds: vec![0.2, 0.3, 0.4, 0.47],
            cs: vec![0.25, 0.5, 0.75, 0.95],
            methods: MethodId::ALL.to_vec(),
            seed: 0,
            delta: 3.0,
            resample_views_monthly: true,
            annualize_sr: true,
            rf: RiskFreeSource::Rate(0.0),
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ds.is_empty() || self.cs.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("ks, ds, cs and methods must be non-empty"));
        }
        if self.ks.contains(&0) {
            return Err(Error::invalid("every K must be at least 1"));
        }
        if let Some(d) = self.ds.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::invalid(format!("distance {d} outside [0,1]")));
        }
        if let Some(c) = self.cs.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(Error::invalid(format!("confidence {c} outside (0,1)")));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be positive, got {}", self.delta)));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::invalid(format!("method {m} listed twice")));
            }
        }
        for (name, dup) in [
            ("ks", has_dup(&self.ks.iter().map(|&k| k as f64).collect::<Vec<_>>())),
            ("ds", has_dup(&self.ds)),
            ("cs", has_dup(&self.cs)),
        ] {
            if dup {
                return Err(Error::invalid(format!("{name} contains duplicates")));
            }
        }
        if let RiskFreeSource::Rate(r) = self.rf {
            if !r.is_finite() {
                return Err(Error::invalid("risk-free rate must be finite"));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.ks.len() * self.ds.len() * self.cs.len()
    }

    /// Parses the flat TOML form; absent keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GridFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("grid config: {e}")))?;
        let mut g = Self::default();
        if let Some(v) = file.ks {
            g.ks = v;
        }
        if let Some(v) = file.ds {
            g.ds = v;
        }
        if let Some(v) = file.cs {
            g.cs = v;
        }
        if let Some(v) = file.methods {
            g.methods = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = file.delta {
            g.delta = v;
        }
        if let Some(v) = file.seed {
            g.seed = v;
        }
        if let Some(v) = file.resample_views_monthly {
            g.resample_views_monthly = v;
        }
        if let Some(v) = file.annualize_sr {
            g.annualize_sr = v;
        }
        if let Some(v) = file.rf {
            g.rf = match v {
                RfValue::Rate(r) => RiskFreeSource::Rate(r),
                RfValue::Source(s) if s == "column" => RiskFreeSource::PanelColumn,
                RfValue::Source(s) => {
                    return Err(Error::Parse(format!(
                        "rf must be a number or \"column\", got {s:?}"
                    )))
                }
            };
        }
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

fn has_dup(v: &[f64]) -> bool {
    v.iter().enumerate().any(|(i, x)| v[..i].contains(x))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    ks: Option<Vec<usize>>,
    ds: Option<Vec<f64>>,
    cs: Option<Vec<f64>>,
    methods: Option<Vec<String>>,
    delta: Option<f64>,
    seed: Option<u64>,
    resample_views_monthly: Option<bool>,
    annualize_sr: Option<bool>,
    rf: Option<RfValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RfValue {
    Rate(f64),
    Source(String),
}

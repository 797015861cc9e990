//! JSON experiment configuration.

use std::path::Path;

use fsvjj_core::approx::ApproxOptions;
use fsvjj_core::{Instrument, McConfig, ModelParams, PricingMode};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub engine: McConfig,
    #[serde(default)]
    pub study: Option<StudyConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    pub spot: f64,
    #[serde(default)]
    pub strike: Option<f64>,
    #[serde(default)]
    pub strikes: Vec<f64>,
    pub maturity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Nu,
    Eta,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Nu => "nu",
            SweepVariable::Eta => "eta",
        }
    }

    /// `base` with the swept parameter set to `value`.
    pub fn apply(self, base: &ModelParams, value: f64) -> ModelParams {
        let mut p = *base;
        match self {
            SweepVariable::Nu => p.nu = value,
            SweepVariable::Eta => p.eta = value,
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub mode: PricingMode,
    #[serde(default)]
    pub delta: f64,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub mode: Option<PricingMode>,
    pub antithetic: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.engine.seed = seed;
        }
        if let Some(paths) = o.paths {
            self.engine.paths = paths;
        }
        if o.steps.is_some() {
            self.engine.steps = o.steps;
        }
        if o.antithetic {
            self.engine.antithetic = true;
        }
        if let (Some(mode), Some(study)) = (o.mode, self.study.as_mut()) {
            study.mode = mode;
        }
    }

    /// The single contract of the config: `strike`, or the only entry of
    /// `strikes`.
    pub fn instrument(&self) -> Result<Instrument> {
        let strike = match (self.instrument.strike, self.instrument.strikes.as_slice()) {
            (Some(k), _) => k,
            (None, [k]) => *k,
            (None, []) => return Err(Error::Config("instrument needs a strike".into())),
            (None, _) => return Err(Error::Config("several strikes given; use `strike` to pick one".into())),
        };
        let inst = Instrument { spot: self.instrument.spot, strike, maturity: self.instrument.maturity };
        inst.validate()?;
        Ok(inst)
    }

    /// Every strike named in the config, `strike` first.
    pub fn strikes(&self) -> Result<Vec<f64>> {
        let mut ks: Vec<f64> = self.instrument.strike.into_iter().collect();
        ks.extend(&self.instrument.strikes);
        if ks.is_empty() {
            return Err(Error::Config("instrument needs at least one strike".into()));
        }
        if let Some(k) = ks.iter().find(|k| !(**k > 0.0)) {
            return Err(Error::Config(format!("strikes must be > 0, got {k}")));
        }
        Ok(ks)
    }

    /// Study section with the sweep checked against the model.
    pub fn study(&self) -> Result<&StudyConfig> {
        let study = self.study.as_ref().ok_or_else(|| Error::Config("missing `study` section".into()))?;
        if study.grid.len() < 4 {
            return Err(Error::Config(format!("sweep grid needs at least 4 points, got {}", study.grid.len())));
        }
        if let Some(v) = study.grid.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Config(format!("sweep values must be > 0, got {v}")));
        }
        let horizon = self.instrument.maturity;
        for &v in &study.grid {
            study.variable.apply(&self.model, v).validate_first_order(horizon)?;
        }
        Ok(study)
    }

    pub fn approx_options(&self, mode: PricingMode, delta: f64) -> ApproxOptions {
        ApproxOptions { mode, delta, mc: self.engine }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"{
        "model": {"kappa": 2.0, "theta": 0.04, "nu": 0.1, "v0bar": 0.04, "H": 0.75,
                  "c1": 0.5, "c2": 0.3, "c3": 1.0, "eta": 0.05, "rho1": -0.5, "rho2": -0.5, "r": 0.0,
                  "levy": {"family": "cpe", "lambda": 1.0, "beta": 10.0}},
        "instrument": {"spot": 100.0, "strikes": [90.0, 100.0, 110.0], "maturity": 1.0},
        "engine": {"paths": 1000, "seed": 3},
        "study": {"variable": "nu", "grid": [0.025, 0.05, 0.1, 0.2]}
    }"#;

    #[test]
    fn parses_full_config() {
        let c = ExperimentConfig::from_json(DESK).unwrap();
        assert_eq!(c.engine.paths, 1000);
        assert_eq!(c.engine.steps, None);
        assert!(!c.engine.antithetic);
        assert_eq!(c.strikes().unwrap(), vec![90.0, 100.0, 110.0]);
        assert!(c.instrument().is_err());
        let s = c.study().unwrap();
        assert_eq!(s.variable, SweepVariable::Nu);
        assert_eq!(s.mode, PricingMode::Frozen);
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::from_json(DESK).unwrap();
        c.apply(&Overrides { seed: Some(9), paths: Some(5), steps: Some(64), mode: Some(PricingMode::Mc), antithetic: true });
        assert_eq!(c.engine, McConfig { paths: 5, steps: Some(64), seed: 9, antithetic: true });
        assert_eq!(c.study.unwrap().mode, PricingMode::Mc);
    }

    #[test]
    fn short_sweep_rejected() {
        let mut c = ExperimentConfig::from_json(DESK).unwrap();
        c.study.as_mut().unwrap().grid = vec![0.1];
        assert!(matches!(c.study(), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_point_violating_feller_rejected() {
        let mut c = ExperimentConfig::from_json(DESK).unwrap();
        c.study.as_mut().unwrap().grid = vec![0.1, 0.2, 0.3, 0.5];
        match c.study() {
            Err(Error::Model(e)) => assert!(e.to_string().starts_with("Feller"), "{e}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_an_error() {
        let text = DESK.replace("\"engine\"", "\"engnie\"");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Json(_))));
    }
}

//! Experiment configuration: strict JSON with defaults for every key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::{BetaDesign, RateCell, RateExperiment, RateMethod};
use crate::bayes_lm::ChainSettings;
use crate::competitors::{FitSettings, Method};
use crate::error::{Error, Result};
use crate::harness::GridConfig;
use crate::model::Cov2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Estimate,
    PriorAudit,
    Asymptotics,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Estimate => "estimate",
            Mode::PriorAudit => "prior-audit",
            Mode::Asymptotics => "asymptotics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default = "default_treatment")]
    pub treatment: String,
}

fn default_outcome() -> String {
    "y".into()
}

fn default_treatment() -> String {
    "d".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorAuditSettings {
    pub p_grid: Vec<usize>,
    pub draws: usize,
    pub nu0: f64,
    pub sigma0: Cov2,
}

impl Default for PriorAuditSettings {
    fn default() -> Self {
        PriorAuditSettings {
            p_grid: vec![10, 100, 1000],
            draws: 20_000,
            nu0: 4.0,
            sigma0: Cov2::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NVarSettings {
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
}

impl Default for NVarSettings {
    fn default() -> Self {
        NVarSettings {
            n: 2000,
            p: 10,
            reps: 2000,
            methods: vec![Method::Naive, Method::BdmlBasic, Method::FdmlFull],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsSettings {
    pub cells: Vec<RateCell>,
    pub reps: usize,
    pub methods: Vec<RateMethod>,
    pub beta: BetaDesign,
    /// Chain length of the BDML fits in the rate experiment.
    pub iters: usize,
    pub burnin: usize,
    /// Optional n·Var experiment.
    pub nvar: Option<NVarSettings>,
}

impl Default for AsymptoticsSettings {
    fn default() -> Self {
        let g = RateExperiment::default_grid(0);
        AsymptoticsSettings {
            cells: g.cells,
            reps: g.reps,
            methods: g.methods,
            beta: g.beta,
            iters: g.chain.iters,
            burnin: g.chain.burnin,
            nvar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub n: usize,
    pub p: usize,
    pub sigma_eps: Vec<f64>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub iters: usize,
    pub burnin: usize,
    pub chains: usize,
    pub level: f64,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// Also write per-replication records under `draws/`.
    pub save_draws: bool,
    pub dataset: Option<DatasetSpec>,
    pub prior_audit: PriorAuditSettings,
    pub asymptotics: AsymptoticsSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let chain = ChainSettings::default();
        ExperimentConfig {
            mode: None,
            n: 200,
            p: 100,
            sigma_eps: vec![1.0, 2.0, 4.0],
            methods: Method::TABLE.to_vec(),
            reps: 200,
            iters: chain.iters,
            burnin: chain.burnin,
            chains: 1,
            level: 0.95,
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
            save_draws: false,
            dataset: None,
            prior_audit: PriorAuditSettings::default(),
            asymptotics: AsymptoticsSettings::default(),
        }
    }
}

fn require(ok: bool, key: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.n > 0, "n", "must be >= 1")?;
        require(self.p > 0, "p", "must be >= 1")?;
        require(
            !self.sigma_eps.is_empty(),
            "sigma_eps",
            "needs at least one value",
        )?;
        require(
            self.sigma_eps.iter().all(|s| *s > 0.0 && s.is_finite()),
            "sigma_eps",
            "values must be positive and finite",
        )?;
        require(
            !self.methods.is_empty(),
            "methods",
            "needs at least one method",
        )?;
        require(self.reps >= 1, "reps", "must be >= 1")?;
        require(
            self.iters > self.burnin,
            "burnin",
            format!("must be below iters ({} >= {})", self.burnin, self.iters),
        )?;
        require(self.chains >= 1, "chains", "must be >= 1")?;
        require(
            self.level > 0.0 && self.level < 1.0,
            "level",
            format!("must lie in (0, 1), got {}", self.level),
        )?;
        require(self.workers >= 1, "workers", "must be >= 1")?;
        if self.mode == Some(Mode::Estimate) {
            require(
                self.dataset.is_some(),
                "dataset",
                "estimate mode needs a dataset",
            )?;
        }
        let pa = &self.prior_audit;
        require(
            pa.p_grid.len() >= 2,
            "prior_audit.p_grid",
            "needs at least two values",
        )?;
        require(
            pa.p_grid.iter().all(|&p| p > 0),
            "prior_audit.p_grid",
            "values must be >= 1",
        )?;
        require(
            pa.draws >= crate::prior_audit::MIN_SB_DRAWS,
            "prior_audit.draws",
            "must be >= 1000",
        )?;
        require(pa.nu0 > 1.0, "prior_audit.nu0", "must exceed 1")?;
        let a = &self.asymptotics;
        self.rate_experiment()
            .validate()
            .map_err(|e| Error::config("asymptotics", e.to_string()))?;
        if let Some(nv) = &a.nvar {
            require(nv.reps >= 2, "asymptotics.nvar.reps", "must be >= 2")?;
            require(nv.n > nv.p + 2, "asymptotics.nvar.n", "must exceed p + 2")?;
            require(
                !nv.methods.is_empty(),
                "asymptotics.nvar.methods",
                "needs a method",
            )?;
        }
        Ok(())
    }

    pub fn chain(&self) -> ChainSettings {
        ChainSettings {
            iters: self.iters,
            burnin: self.burnin,
        }
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            chain: self.chain(),
            level: self.level,
            ..Default::default()
        }
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            n: self.n,
            p: self.p,
            sigma_eps: self.sigma_eps.clone(),
            methods: self.methods.clone(),
            reps: self.reps,
            master_seed: self.seed,
            settings: self.fit_settings(),
            workers: self.workers,
        }
    }

    pub fn rate_experiment(&self) -> RateExperiment {
        let a = &self.asymptotics;
        RateExperiment {
            cells: a.cells.clone(),
            reps: a.reps,
            methods: a.methods.clone(),
            seed: self.seed,
            sigma_eps: 1.0,
            beta: a.beta,
            chain: ChainSettings {
                iters: a.iters,
                burnin: a.burnin,
            },
        }
    }
}

/// Parses a JSON config without validating it. Errors name the offending
/// key and, for syntax errors, the line and column.
pub fn read_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        // The path already ends in the offending field for unknown keys.
        let mut key = e.path().to_string();
        if key.is_empty() || key == "." {
            key = "<root>".into();
        }
        let msg = e.inner().to_string();
        Error::config(key, msg)
    })?;
    Ok(cfg)
}

/// Parses and validates a JSON config.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg = read_config_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file without validating it, so callers can apply overrides first.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    read_config_str(&text)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = read_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(r#"{"mode":"simulate"}"#).unwrap();
        assert_eq!(c.mode, Some(Mode::Simulate));
        assert_eq!((c.n, c.p, c.reps, c.level), (200, 100, 200, 0.95));
        assert_eq!(c.sigma_eps, vec![1.0, 2.0, 4.0]);
        assert_eq!(c.methods.len(), 7);
        assert_eq!((c.iters, c.burnin), (5000, 1000));
    }

    #[test]
    fn bad_values_name_their_key() {
        assert_eq!(
            key_of(parse_config_str(r#"{"level": 1.5}"#).unwrap_err()),
            "level"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"iters": 10, "burnin": 10}"#).unwrap_err()),
            "burnin"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"workers": 0}"#).unwrap_err()),
            "workers"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"levle": 0.9}"#).unwrap_err()),
            "levle"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"prior_audit": {"drawz": 5}}"#).unwrap_err()),
            "prior_audit.drawz"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"reps": "many"}"#).unwrap_err()),
            "reps"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"mode": "estimate"}"#).unwrap_err()),
            "dataset"
        );
        assert_eq!(
            key_of(parse_config_str(r#"{"methods": ["Bogus"]}"#).unwrap_err()),
            "methods[0]"
        );
    }

    #[test]
    fn syntax_errors_report_position() {
        let e = parse_config_str("{\n  \"n\": 10,\n  oops\n}").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn round_trip() {
        let c = parse_config_str(
            r#"{"mode":"asymptotics","seed":7,"methods":["OLS","BDML-Hier"],
                "dataset":{"path":"x.csv"},"asymptotics":{"nvar":{"reps":50}}}"#,
        )
        .unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let again = parse_config_str(&text).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.dataset.unwrap().outcome, "y");
    }
}

//! TOML configuration shared by the command line tools. Every key has a
//! default; `config/reference.toml` lists them all.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, BlipSpec, FittedRegime, Method, RegimeOptions, TreatmentWeights};
use crate::missing::{self, ImputationConfig, ImputationManifest};
use crate::panel::{parse_terms, Cohort, PanelError, Term};
use crate::weights::{PropensitySource, WeightVector};
use crate::sim::{Censoring, ModelSpec};
use crate::study::{self, Estimator, MissingMethod, StudyConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Term(#[from] PanelError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub study: StudySection,
    pub missing: MissingSection,
    pub weights: WeightsSection,
    pub value: ValueSection,
    pub model: ModelSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub scenario: String,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<String>,
    pub fit_all_stages: bool,
    pub max_abort_fraction: f64,
    pub output_dir: String,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            scenario: "A".into(),
            n: 50_000,
            replications: 100,
            seed: 20_240_101,
            estimators: ["On", "Oc", "On-Wc", "Oc-Wn", "Oc-Wc", "On-Wn"].map(String::from).to_vec(),
            fit_all_stages: false,
            max_abort_fraction: 0.01,
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingKind {
    None,
    Locf,
    Impute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingSection {
    pub method: MissingKind,
    pub m: usize,
    pub noise: bool,
    pub seed: u64,
}

impl Default for MissingSection {
    fn default() -> Self {
        Self {
            method: MissingKind::None,
            m: 25,
            noise: true,
            seed: 0,
        }
    }
}

impl MissingSection {
    pub fn method(&self) -> MissingMethod {
        match self.method {
            MissingKind::None => MissingMethod::None,
            MissingKind::Locf => MissingMethod::Locf,
            MissingKind::Impute => MissingMethod::Impute {
                m: self.m,
                noise: self.noise,
            },
        }
    }

    pub fn imputation(&self) -> ImputationConfig {
        ImputationConfig {
            m: self.m,
            noise: self.noise,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub ipcw: bool,
    pub stabilized_ipcw: bool,
    pub positivity_floor: f64,
    pub positivity_override: bool,
    /// Percentile pair, e.g. `[1.0, 99.0]`.
    pub ipt_truncation: Option<(f64, f64)>,
    /// `joint` or `factorized`; unset picks per weight kind.
    pub propensity_source: Option<PropensitySource>,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            ipcw: true,
            stabilized_ipcw: false,
            positivity_floor: crate::panel::DEFAULT_POSITIVITY_FLOOR,
            positivity_override: false,
            ipt_truncation: None,
            propensity_source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueSection {
    pub n_eval: usize,
    pub seed: u64,
}

impl Default for ValueSection {
    fn default() -> Self {
        Self {
            n_eval: 200_000,
            seed: 99,
        }
    }
}

/// Model terms for `estimate`. Lists left empty fall back to the generator
/// presets selected by `outcome` and `propensity_model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub stages: Vec<usize>,
    pub outcome: ModelSpec,
    pub propensity_model: ModelSpec,
    pub visit_modifiers: Vec<String>,
    pub addon_modifiers: Vec<String>,
    /// Stage number (as a string key) to treatment-free terms.
    pub treatment_free: BTreeMap<String, Vec<String>>,
    pub propensity: BTreeMap<String, Vec<String>>,
    pub addon_propensity: BTreeMap<String, Vec<String>>,
    pub censoring: Censoring,
    pub censoring_covariates: Vec<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            stages: vec![1, 2],
            outcome: ModelSpec::Correct,
            propensity_model: ModelSpec::Correct,
            visit_modifiers: Vec::new(),
            addon_modifiers: Vec::new(),
            treatment_free: BTreeMap::new(),
            propensity: BTreeMap::new(),
            addon_propensity: BTreeMap::new(),
            censoring: Censoring::None,
            censoring_covariates: Vec::new(),
        }
    }
}

fn stage_map(m: &BTreeMap<String, Vec<String>>) -> Result<BTreeMap<usize, Vec<Term>>, ConfigError> {
    m.iter()
        .map(|(k, v)| {
            let t = k
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("stage key {k:?} is not an integer")))?;
            Ok((t, parse_terms(v)?))
        })
        .collect()
}

impl ModelSection {
    pub fn blip_spec(&self) -> Result<BlipSpec, ConfigError> {
        let mut spec = study::generator_blip_spec(self.outcome, &self.stages);
        if !self.visit_modifiers.is_empty() {
            spec.visit_modifiers = parse_terms(&self.visit_modifiers)?;
        }
        if !self.addon_modifiers.is_empty() {
            spec.addon_modifiers = parse_terms(&self.addon_modifiers)?;
        }
        if !self.treatment_free.is_empty() {
            spec.treatment_free = stage_map(&self.treatment_free)?;
        }
        Ok(spec)
    }

    pub fn regime_options(&self, method: Method, weights: TreatmentWeights, w: &WeightsSection) -> Result<RegimeOptions, ConfigError> {
        let propensity = if self.propensity.is_empty() {
            study::generator_propensity(self.propensity_model)
        } else {
            stage_map(&self.propensity)?
        };
        let mut o = match method {
            Method::Qloma => RegimeOptions::qloma(),
            Method::Woma => RegimeOptions::woma(weights, propensity),
        };
        if !self.addon_propensity.is_empty() {
            o.addon_propensity = Some(stage_map(&self.addon_propensity)?);
        }
        o.ipt_truncation = w.ipt_truncation;
        o.propensity_source = w.propensity_source;
        o.positivity_floor = w.positivity_floor;
        o.positivity_override = w.positivity_override;
        Ok(o)
    }

    pub fn censoring_covariates(&self) -> Result<Vec<Term>, ConfigError> {
        if self.censoring_covariates.is_empty() {
            Ok(study::generator_censoring_covariates(self.censoring))
        } else {
            Ok(parse_terms(&self.censoring_covariates)?)
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn study_config(&self) -> Result<StudyConfig, ConfigError> {
        let estimators = self
            .study
            .estimators
            .iter()
            .map(|s| s.parse::<Estimator>().map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let s = &self.study;
        let cfg = StudyConfig {
            missing: self.missing.method(),
            fit_all_stages: s.fit_all_stages,
            ipcw: self.weights.ipcw,
            stabilized_ipcw: self.weights.stabilized_ipcw,
            positivity_floor: self.weights.positivity_floor,
            max_abort_fraction: s.max_abort_fraction,
            ..StudyConfig::new(&s.scenario, s.n, s.replications, estimators, s.seed)
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Regime fitted from an external cohort, with what was done to get there.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub regime: FittedRegime,
    pub manifest: Option<ImputationManifest>,
    pub ipcw: Option<WeightVector>,
}

impl Config {
    /// Complete missing cells, weight for censoring, and fit per the
    /// `missing`, `weights` and `model` sections.
    pub fn estimate(&self, cohort: &Cohort, method: Method, weights: TreatmentWeights) -> Result<Estimate, EstimateError> {
        let spec = self.model.blip_spec()?;
        let opts = self.model.regime_options(method, weights, &self.weights)?;
        let ipcw = match (self.model.censoring, self.weights.ipcw) {
            (Censoring::None, _) | (_, false) => None,
            (Censoring::TimeFixed, true) => Some(crate::weights::ipcw_time_fixed(cohort, &self.model.censoring_covariates()?)?),
            (Censoring::TimeDependent, true) => Some(crate::weights::ipcw_time_dependent(
                cohort,
                &self.model.censoring_covariates()?,
                self.weights.stabilized_ipcw,
            )?),
        };
        let w = ipcw.as_ref().map(|v| v.values.as_slice());
        let (completed, manifest) = match self.missing.method {
            MissingKind::None => (vec![cohort.clone()], None),
            MissingKind::Locf => (vec![missing::locf_complete(cohort)?], None),
            MissingKind::Impute => {
                let c = self.missing.imputation();
                (missing::sequential_impute(cohort, &c)?, Some(missing::manifest(cohort, &c)))
            }
        };
        let fits = completed
            .iter()
            .map(|c| engine::fit_regime(c, &spec, &opts, w))
            .collect::<Result<Vec<_>, _>>()?;
        let regime = if fits.len() == 1 {
            fits.into_iter().next().expect("one fit")
        } else {
            missing::pool_regimes(&fits)?
        };
        Ok(Estimate { regime, manifest, ipcw })
    }
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Weights(#[from] crate::weights::WeightError),
    #[error(transparent)]
    Missing(#[from] missing::MissingError),
    #[error(transparent)]
    Regime(#[from] engine::RegimeError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let s = c.study_config().unwrap();
        assert_eq!(s.estimators.len(), 6);
        assert_eq!(s.missing, MissingMethod::None);
    }

    #[test]
    fn sections_override() {
        let c = Config::from_toml(
            r#"
[study]
scenario = "B"
replications = 3
estimators = ["Oc-Wc/ipt"]
[missing]
method = "impute"
m = 4
[model]
stages = [2]
visit_modifiers = ["K1"]
[model.treatment_free]
"2" = ["K2", "Y@t-1"]
"#,
        )
        .unwrap();
        let s = c.study_config().unwrap();
        assert_eq!(s.missing, MissingMethod::Impute { m: 4, noise: true });
        assert_eq!(s.estimators[0].to_string(), "Oc-Wc/ipt");
        let spec = c.model.blip_spec().unwrap();
        assert_eq!(spec.visit_modifiers.len(), 1);
        assert_eq!(spec.treatment_free[&2].len(), 2);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(Config::from_toml("[study]\nbogus = 1").is_err());
        let c = Config::from_toml("[study]\nestimators = [\"Ox\"]").unwrap();
        assert!(c.study_config().is_err());
        let c = Config::from_toml("[model.treatment_free]\nx = [\"K1\"]").unwrap();
        assert!(c.model.blip_spec().is_err());
    }

    #[test]
    fn reference_file_parses() {
        let text = include_str!("../../../config/reference.toml");
        let c = Config::from_toml(text).unwrap();
        assert_eq!(c, Config::default());
    }
}

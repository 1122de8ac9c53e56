//! Monte Carlo replication studies over the simulation generator, and the
//! model presets that go with it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, BlipSpec, FittedRegime, RegimeOptions, TreatmentWeights};
use crate::missing::{self, ImputationConfig};
use crate::panel::{parse_terms, Cohort, Term};
use crate::sim::{self, Censoring, DgmScenario, ModelSpec, Observational, Policy, ValueEstimate};
use crate::weights;

/// Last-stage blip parameters in reporting order.
pub const PARAMETERS: [&str; 6] = ["gamma0", "gammaK", "gammaY", "gamma0_star", "gammaK_star", "gammaY_star"];

pub fn true_parameters() -> [f64; 6] {
    let [a, b, c] = sim::TRUE_GAMMA;
    let [d, e, f] = sim::TRUE_GAMMA_STAR;
    [a, b, c, d, e, f]
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown estimator label {0:?}")]
    UnknownEstimator(String),
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("{aborted} of {total} replications aborted (first: {first})")]
    TooManyAborts { aborted: usize, total: usize, first: String },
    #[error("empty bundle")]
    Empty,
    #[error(transparent)]
    Regime(#[from] engine::RegimeError),
    #[error(transparent)]
    Weights(#[from] weights::WeightError),
    #[error(transparent)]
    Missing(#[from] missing::MissingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The six estimators: outcome model correct (`Oc`) or not (`On`), with no
/// weights (Q-learning) or with a correct (`Wc`) or wrong (`Wn`) weight model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    On,
    Oc,
    OnWc,
    OcWn,
    OcWc,
    OnWn,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::On, Variant::Oc, Variant::OnWc, Variant::OcWn, Variant::OcWc, Variant::OnWn];

    pub fn label(self) -> &'static str {
        match self {
            Variant::On => "On",
            Variant::Oc => "Oc",
            Variant::OnWc => "On-Wc",
            Variant::OcWn => "Oc-Wn",
            Variant::OcWc => "Oc-Wc",
            Variant::OnWn => "On-Wn",
        }
    }

    pub fn outcome_model(self) -> ModelSpec {
        match self {
            Variant::Oc | Variant::OcWn | Variant::OcWc => ModelSpec::Correct,
            _ => ModelSpec::Wrong,
        }
    }

    /// `None` for the unweighted estimators.
    pub fn weight_model(self) -> Option<ModelSpec> {
        match self {
            Variant::On | Variant::Oc => None,
            Variant::OnWc | Variant::OcWc => Some(ModelSpec::Correct),
            Variant::OcWn | Variant::OnWn => Some(ModelSpec::Wrong),
        }
    }
}

impl FromStr for Variant {
    type Err = StudyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| StudyError::UnknownEstimator(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Overlap,
    Ipt,
}

impl WeightScheme {
    pub fn treatment_weights(self) -> TreatmentWeights {
        match self {
            WeightScheme::Overlap => TreatmentWeights::Overlap,
            WeightScheme::Ipt => TreatmentWeights::Ipt,
        }
    }
}

/// One cell of the estimator grid, written `Oc-Wc/overlap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Estimator {
    pub variant: Variant,
    pub scheme: WeightScheme,
}

impl Estimator {
    pub fn new(variant: Variant, scheme: WeightScheme) -> Self {
        Self { variant, scheme }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.scheme {
            WeightScheme::Overlap => "overlap",
            WeightScheme::Ipt => "ipt",
        };
        write!(f, "{}/{s}", self.variant.label())
    }
}

impl FromStr for Estimator {
    type Err = StudyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (v, w) = s.split_once('/').unwrap_or((s, "overlap"));
        let scheme = match w.to_ascii_lowercase().as_str() {
            "overlap" => WeightScheme::Overlap,
            "ipt" => WeightScheme::Ipt,
            _ => return Err(StudyError::UnknownEstimator(s.to_string())),
        };
        Ok(Self::new(v.parse()?, scheme))
    }
}

impl TryFrom<String> for Estimator {
    type Error = StudyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.to_string()
    }
}

fn terms(items: &[&str]) -> Vec<Term> {
    parse_terms(items).expect("preset terms parse")
}

fn without_k2(ts: Vec<Term>) -> Vec<Term> {
    ts.into_iter()
        .filter(|t| !t.columns().any(|c| c == "K2"))
        .collect()
}

/// Stage regression terms for the generator's cohorts. The wrong outcome
/// model drops every `K2` term.
pub fn generator_blip_spec(outcome: ModelSpec, stages: &[usize]) -> BlipSpec {
    let stage1 = terms(&[
        "A0", "Y@0", "K1@0", "K2@0", "A0*K1@0", "A0*Y@0", "Y@0*K1@0", "K1@1", "K2@1", "Y@1",
    ]);
    // A implies dN, so A@1*dN@1 products collapse onto the A@1 terms
    let stage2 = terms(&[
        "A0", "Y@0", "K1@0", "K2@0", "A0*K1@0", "A0*Y@0", "Y@0*K1@0", "K1@1", "K2@1", "A@1", "dN@1", "Y@1",
        "K1@1*dN@1", "dN@1*Y@1", "A@1*K1@1", "A@1*Y@1", "Y@2", "K1@2", "K2@2",
    ]);
    let mut tf = BTreeMap::from([(1, stage1), (2, stage2)]);
    if outcome == ModelSpec::Wrong {
        tf = tf.into_iter().map(|(t, v)| (t, without_k2(v))).collect();
    }
    tf.retain(|t, _| stages.contains(t));
    BlipSpec {
        visit_modifiers: terms(&["K1", "Y"]),
        addon_modifiers: terms(&["K1", "Y"]),
        treatment_free: tf,
        stages: stages.to_vec(),
    }
}

/// Propensity covariates for the generator's visit and add-on mechanisms;
/// the wrong model omits `K2`.
pub fn generator_propensity(model: ModelSpec) -> BTreeMap<usize, Vec<Term>> {
    let p = BTreeMap::from([
        (1, terms(&["K1@0", "K2@0", "A0", "Y@0"])),
        (2, terms(&["K1@1", "K2@1", "A@1", "Y@1"])),
    ]);
    match model {
        ModelSpec::Correct => p,
        ModelSpec::Wrong => p.into_iter().map(|(t, v)| (t, without_k2(v))).collect(),
    }
}

/// Censoring model covariates matching the generator's mechanisms.
pub fn generator_censoring_covariates(mode: Censoring) -> Vec<Term> {
    match mode {
        Censoring::TimeFixed => terms(&["A0", "Y@0", "K1@0"]),
        Censoring::TimeDependent => terms(&["A", "Y", "K1"]),
        Censoring::None => Vec::new(),
    }
}

pub fn regime_options(est: Estimator, positivity_floor: f64) -> RegimeOptions {
    let mut o = match est.variant.weight_model() {
        None => RegimeOptions::qloma(),
        Some(m) => RegimeOptions::woma(est.scheme.treatment_weights(), generator_propensity(m)),
    };
    o.positivity_floor = positivity_floor;
    o
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MissingMethod {
    None,
    Locf,
    Impute { m: usize, noise: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: String,
    pub n: usize,
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    pub missing: MissingMethod,
    pub seed: u64,
    /// Fit every stage instead of only the last; the last-stage estimates
    /// are the same either way.
    #[serde(default)]
    pub fit_all_stages: bool,
    #[serde(default = "default_true")]
    pub ipcw: bool,
    #[serde(default)]
    pub stabilized_ipcw: bool,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    /// Largest tolerated fraction of aborted replications.
    #[serde(default = "default_abort_fraction")]
    pub max_abort_fraction: f64,
}

fn default_true() -> bool {
    true
}

fn default_floor() -> f64 {
    crate::panel::DEFAULT_POSITIVITY_FLOOR
}

fn default_abort_fraction() -> f64 {
    0.01
}

impl StudyConfig {
    pub fn new(scenario: &str, n: usize, replications: usize, estimators: Vec<Estimator>, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            n,
            replications,
            estimators,
            missing: MissingMethod::None,
            seed,
            fit_all_stages: false,
            ipcw: true,
            stabilized_ipcw: false,
            positivity_floor: default_floor(),
            max_abort_fraction: default_abort_fraction(),
        }
    }

    pub fn validate(&self) -> Result<DgmScenario, StudyError> {
        if self.replications == 0 {
            return Err(StudyError::Config("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(StudyError::Config("no estimators requested".into()));
        }
        if let MissingMethod::Impute { m: 0, .. } = self.missing {
            return Err(StudyError::Config("imputation needs m >= 1".into()));
        }
        DgmScenario::preset(&self.scenario, self.n, self.seed)
            .ok_or_else(|| StudyError::Config(format!("unknown scenario {:?}", self.scenario)))
    }
}

/// Replication `r` of a study; the cohort seed is derived from the base seed.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    sim::derive_seed(base, r as u64)
}

/// Data preparation shared by every estimator within one replication.
struct Prepared {
    cohorts: Vec<Cohort>,
    ipcw: Option<Vec<f64>>,
}

fn prepare(cfg: &StudyConfig, scenario: &DgmScenario, seed: u64) -> Result<Prepared, StudyError> {
    let sc = DgmScenario { seed, ..scenario.clone() };
    let cohort = sim::generate_cohort(&sc);
    let ipcw = if cfg.ipcw {
        let covs = generator_censoring_covariates(sc.censoring);
        match sc.censoring {
            Censoring::None => None,
            Censoring::TimeFixed => Some(weights::ipcw_time_fixed(&cohort, &covs)?.values),
            Censoring::TimeDependent => Some(weights::ipcw_time_dependent(&cohort, &covs, cfg.stabilized_ipcw)?.values),
        }
    } else {
        None
    };
    let cohorts = match cfg.missing {
        MissingMethod::None => vec![cohort],
        MissingMethod::Locf => vec![missing::locf_complete(&cohort)?],
        MissingMethod::Impute { m, noise } => missing::sequential_impute(
            &cohort,
            &ImputationConfig {
                m,
                noise,
                seed: sim::derive_seed(seed, 0x1d_u64),
            },
        )?,
    };
    Ok(Prepared { cohorts, ipcw })
}

/// Fit one estimator on every completed cohort and pool.
fn fit_prepared(p: &Prepared, est: Estimator, stages: &[usize], floor: f64) -> Result<FittedRegime, StudyError> {
    let spec = generator_blip_spec(est.variant.outcome_model(), stages);
    let opts = regime_options(est, floor);
    let fits = p
        .cohorts
        .iter()
        .map(|c| engine::fit_regime(c, &spec, &opts, p.ipcw.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    if fits.len() == 1 {
        return Ok(fits.into_iter().next().expect("one fit"));
    }
    Ok(missing::pool_regimes(&fits)?)
}

fn last_stage(regime: &FittedRegime) -> [f64; 6] {
    let s = regime.stages.last().expect("regime has stages");
    [s.gamma[0], s.gamma[1], s.gamma[2], s.gamma_star[0], s.gamma_star[1], s.gamma_star[2]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// Last-stage estimates per estimator, in config order; empty if aborted.
    pub estimates: Vec<[f64; 6]>,
    pub censored_fraction: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyBundle {
    pub config: StudyConfig,
    pub replications: Vec<Replication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub estimator: Estimator,
    pub mean: [f64; 6],
    pub bias: [f64; 6],
    pub sd: [f64; 6],
    pub replications: usize,
}

/// One replication: generate, censor/mask, complete, fit every estimator.
pub fn run_replication(cfg: &StudyConfig, scenario: &DgmScenario, r: usize) -> Replication {
    let seed = replication_seed(cfg.seed, r);
    let stages: Vec<usize> = if cfg.fit_all_stages { vec![1, 2] } else { vec![2] };
    let outcome = (|| -> Result<(Vec<[f64; 6]>, f64), StudyError> {
        let p = prepare(cfg, scenario, seed)?;
        let censored = sim::censoring_proportion(&p.cohorts[0]);
        let est = cfg
            .estimators
            .iter()
            .map(|&e| fit_prepared(&p, e, &stages, cfg.positivity_floor).map(|f| last_stage(&f)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((est, censored))
    })();
    match outcome {
        Ok((estimates, censored_fraction)) => Replication {
            index: r,
            seed,
            estimates,
            censored_fraction,
            error: None,
        },
        Err(e) => {
            log::warn!("replication {r} aborted: {e}");
            Replication {
                index: r,
                seed,
                estimates: Vec::new(),
                censored_fraction: f64::NAN,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Run all replications in parallel; results come back in index order.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyBundle, StudyError> {
    let scenario = cfg.validate()?;
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &scenario, r))
        .collect();
    let aborted: Vec<&Replication> = reps.iter().filter(|r| r.error.is_some()).collect();
    if aborted.len() as f64 > cfg.max_abort_fraction * cfg.replications as f64 {
        return Err(StudyError::TooManyAborts {
            aborted: aborted.len(),
            total: cfg.replications,
            first: aborted[0].error.clone().unwrap_or_default(),
        });
    }
    Ok(StudyBundle {
        config: cfg.clone(),
        replications: reps,
    })
}

impl StudyBundle {
    pub fn completed(&self) -> impl Iterator<Item = &Replication> {
        self.replications.iter().filter(|r| r.error.is_none())
    }

    pub fn estimates(&self, k: usize) -> Vec<[f64; 6]> {
        self.completed().map(|r| r.estimates[k]).collect()
    }

    pub fn summaries(&self) -> Result<Vec<Summary>, StudyError> {
        let n = self.completed().count();
        if n == 0 {
            return Err(StudyError::Empty);
        }
        let truth = true_parameters();
        Ok(self
            .config
            .estimators
            .iter()
            .enumerate()
            .map(|(k, &estimator)| {
                let est = self.estimates(k);
                let mut mean = [0.0; 6];
                let mut sd = [0.0; 6];
                for j in 0..6 {
                    let xs: Vec<f64> = est.iter().map(|e| e[j]).collect();
                    let (m, s) = mean_sd(&xs);
                    mean[j] = m;
                    sd[j] = s;
                }
                Summary {
                    estimator,
                    mean,
                    bias: std::array::from_fn(|j| mean[j] - truth[j]),
                    sd,
                    replications: n,
                }
            })
            .collect())
    }

    pub fn mean_censored_fraction(&self) -> f64 {
        mean_sd(&self.completed().map(|r| r.censored_fraction).collect::<Vec<_>>()).0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Bias block then SD block; one row per parameter, one column per estimator.
pub fn write_bias_table<W: std::io::Write>(bundle: &StudyBundle, writer: W) -> Result<(), StudyError> {
    let sums = bundle.summaries()?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["block".to_string(), "parameter".to_string()];
    header.extend(sums.iter().map(|s| s.estimator.to_string()));
    w.write_record(&header)?;
    for (block, pick) in [("bias", 0), ("sd", 1)] {
        for (j, p) in PARAMETERS.iter().enumerate() {
            let mut row = vec![block.to_string(), p.to_string()];
            row.extend(sums.iter().map(|s| {
                let v = if pick == 0 { s.bias[j] } else { s.sd[j] };
                v.to_string()
            }));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-replication estimates in long form.
pub fn write_estimates<W: std::io::Write>(bundle: &StudyBundle, writer: W) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["replication", "seed", "estimator"];
    header.extend(PARAMETERS);
    w.write_record(&header)?;
    for r in bundle.completed() {
        for (k, e) in bundle.config.estimators.iter().enumerate() {
            let mut row = vec![r.index.to_string(), r.seed.to_string(), e.to_string()];
            row.extend(r.estimates[k].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Value of each policy over a common evaluation population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub policy: String,
    pub value: ValueEstimate,
    /// Paired difference against the observational policy.
    pub gain: ValueEstimate,
}

/// Evaluate the observational policy and each named policy on `n_eval`
/// fresh subjects sharing random numbers.
pub fn value_report(policies: &[(String, &dyn Policy)], n_eval: usize, seed: u64) -> Vec<ValueRow> {
    let obs = sim::value_function(&Observational, n_eval, seed);
    let mut rows = vec![ValueRow {
        policy: "observational".into(),
        value: obs,
        gain: ValueEstimate {
            mean: 0.0,
            se: 0.0,
            n: n_eval,
        },
    }];
    for (name, p) in policies {
        rows.push(ValueRow {
            policy: name.clone(),
            value: sim::value_function(*p, n_eval, seed),
            gain: sim::paired_difference(*p, &Observational, n_eval, seed),
        });
    }
    rows
}

pub fn write_value_report<W: std::io::Write>(rows: &[ValueRow], writer: W) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["policy", "value", "value_se", "gain", "gain_se", "n_eval"])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.value.mean.to_string(),
            r.value.se.to_string(),
            r.gain.mean.to_string(),
            r.gain.se.to_string(),
            r.value.n.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Fit a full two-stage regime on one generated cohort.
pub fn fit_generator_regime(
    scenario: &DgmScenario,
    est: Estimator,
    positivity_floor: f64,
) -> Result<FittedRegime, StudyError> {
    let cfg = StudyConfig {
        missing: MissingMethod::None,
        ..StudyConfig::new("A", scenario.n, 1, vec![est], scenario.seed)
    };
    let p = prepare(&cfg, scenario, scenario.seed)?;
    fit_prepared(&p, est, &[1, 2], positivity_floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
            for s in [WeightScheme::Overlap, WeightScheme::Ipt] {
                let e = Estimator::new(v, s);
                assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
            }
        }
        assert!("Ox".parse::<Variant>().is_err());
        assert!("Oc/bogus".parse::<Estimator>().is_err());
        assert_eq!("oc-wc".parse::<Estimator>().unwrap().scheme, WeightScheme::Overlap);
    }

    #[test]
    fn wrong_models_drop_k2() {
        let good = generator_blip_spec(ModelSpec::Correct, &[1, 2]);
        let bad = generator_blip_spec(ModelSpec::Wrong, &[1, 2]);
        assert_eq!(good.treatment_free[&2].len() - bad.treatment_free[&2].len(), 3);
        assert_eq!(good.treatment_free[&1].len() - bad.treatment_free[&1].len(), 2);
        assert!(generator_propensity(ModelSpec::Wrong)[&1].iter().all(|t| !t.columns().any(|c| c == "K2")));
        assert_eq!(generator_blip_spec(ModelSpec::Correct, &[2]).treatment_free.len(), 1);
    }

    #[test]
    fn small_study_is_deterministic() {
        let cfg = StudyConfig::new(
            "A",
            1500,
            2,
            vec!["Oc".parse().unwrap(), "Oc-Wc/overlap".parse().unwrap()],
            5,
        );
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summaries().unwrap().len(), 2);
        let back = StudyBundle::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn identical_estimates_have_zero_sd() {
        let cfg = StudyConfig::new("A", 10, 3, vec!["Oc".parse().unwrap()], 1);
        let rep = |i| Replication {
            index: i,
            seed: 0,
            estimates: vec![[2.0, 1.0, 0.0, 1.5, -1.2, 0.01]],
            censored_fraction: 0.0,
            error: None,
        };
        let b = StudyBundle {
            config: cfg,
            replications: (0..3).map(rep).collect(),
        };
        let s = &b.summaries().unwrap()[0];
        assert_eq!(s.sd, [0.0; 6]);
        assert!((s.bias[0] - 1.0).abs() < 1e-15);
        let mut out = Vec::new();
        write_bias_table(&b, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "block,parameter,Oc/overlap");
        assert_eq!(lines.len(), 13);
        assert!(lines[7].starts_with("sd,gamma0,0"));
    }

    #[test]
    fn empty_bundle_errors() {
        let b = StudyBundle {
            config: StudyConfig::new("A", 10, 1, vec!["Oc".parse().unwrap()], 1),
            replications: vec![],
        };
        assert!(matches!(b.summaries(), Err(StudyError::Empty)));
    }
}

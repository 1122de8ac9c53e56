//! Stage-wise blip estimation by backward induction.
//!
//! The outcome at stage `t` is modelled as
//! `h(t)'β + dN·(γ0 + γ'q_V) + dN·A·(γ0* + γ*'q_VA)`, fitted by weighted
//! least squares. Weights are overlap or inverse-probability weights (WOMA)
//! or unit weights (QLOMA), times censoring weights when supplied.

mod sandwich;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::{self, DesignMatrix, GlmError, INTERCEPT};
use crate::linalg::Matrix;
use crate::panel::{self, Cohort, History, PanelError, StrategyCode, Term};
use crate::scalar::Scalar;
use crate::sim::Policy;
use crate::weights::{self, PropensityEstimates, PropensitySource, WeightError};

pub use sandwich::{sandwich_variance_one_stage, SandwichVariance};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("stage {t}: {source}")]
    Glm {
        t: usize,
        #[source]
        source: GlmError,
    },
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("missing value for {term} (id {id}, t={t})")]
    MissingValue { term: String, id: i64, t: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("positivity check failed: {0}")]
    Positivity(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Blip value `c0 + c1'q` (the caller multiplies by the visit or visit×add-on
/// indicator).
pub fn blip<T: Scalar>(coefficients: &[T], q: &[T]) -> Result<T, EngineError> {
    if coefficients.len() != q.len() + 1 {
        return Err(EngineError::Dimension(format!(
            "{} coefficients for {} modifiers",
            coefficients.len(),
            q.len()
        )));
    }
    Ok(coefficients[0] + coefficients[1..].iter().zip(q).map(|(&c, &v)| c * v).sum::<T>())
}

pub fn blip_visit<T: Scalar>(gamma: &[T], q_v: &[T]) -> Result<T, EngineError> {
    blip(gamma, q_v)
}

pub fn blip_addon<T: Scalar>(gamma_star: &[T], q_va: &[T]) -> Result<T, EngineError> {
    blip(gamma_star, q_va)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Prefer (0,0), then (1,0), then (1,1).
    #[default]
    LeastIntervention,
    MostIntervention,
}

/// Argmax over `{0, b_v, b_v + b_va}` for (0,0), (1,0), (1,1).
pub fn decide<T: Scalar>(b_v: T, b_va: T) -> StrategyCode {
    decide_with(b_v, b_va, TieBreak::LeastIntervention)
}

pub fn decide_with<T: Scalar>(b_v: T, b_va: T, tie: TieBreak) -> StrategyCode {
    let values = [T::zero(), b_v, b_v + b_va];
    let better = |cand: T, best: T| match tie {
        TieBreak::LeastIntervention => cand > best,
        TieBreak::MostIntervention => cand >= best,
    };
    let mut best = 0;
    for k in 1..3 {
        if better(values[k], values[best]) {
            best = k;
        }
    }
    StrategyCode::ALL[best]
}

/// Value of the best strategy, `max(0, b_v, b_v + b_va)`.
fn optimal_value(b_v: f64, b_va: f64) -> f64 {
    0f64.max(b_v).max(b_v + b_va)
}

/// Model terms for the stage regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlipSpec {
    pub visit_modifiers: Vec<Term>,
    pub addon_modifiers: Vec<Term>,
    /// Treatment-free predictors `h(t)` keyed by stage.
    pub treatment_free: BTreeMap<usize, Vec<Term>>,
    /// Decision times, ascending.
    pub stages: Vec<usize>,
}

impl BlipSpec {
    pub fn check(&self, cohort: &Cohort) -> Result<(), EngineError> {
        if self.stages.is_empty() || self.stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EngineError::Spec("stages must be non-empty and strictly increasing".into()));
        }
        for &t in &self.stages {
            if t == 0 || t >= cohort.tau() {
                return Err(EngineError::Spec(format!("stage {t} outside 1..{}", cohort.tau())));
            }
            let h = self
                .treatment_free
                .get(&t)
                .ok_or_else(|| EngineError::Spec(format!("no treatment-free terms for stage {t}")))?;
            for term in h.iter().chain(&self.visit_modifiers).chain(&self.addon_modifiers) {
                cohort.resolve(term, t)?;
            }
        }
        Ok(())
    }

    /// Design column names in their fixed order: intercept, treatment-free
    /// block, visit block, add-on block.
    pub fn column_names(&self, t: usize) -> Vec<String> {
        let mut names = vec![INTERCEPT.to_string()];
        if let Some(h) = self.treatment_free.get(&t) {
            names.extend(h.iter().map(|x| x.to_string()));
        }
        names.push("dN".into());
        names.extend(self.visit_modifiers.iter().map(|q| format!("dN*{q}")));
        names.push("dN*A".into());
        names.extend(self.addon_modifiers.iter().map(|q| format!("dN*A*{q}")));
        names
    }

    fn modifiers_at(&self, cohort: &Cohort, t: usize, i: usize, terms: &[Term]) -> Result<Vec<f64>, EngineError> {
        terms
            .iter()
            .map(|q| {
                q.eval(&cohort.subject(i), t).ok_or_else(|| EngineError::MissingValue {
                    term: q.to_string(),
                    id: cohort.ids()[i],
                    t,
                })
            })
            .collect()
    }
}

/// Subjects with a final outcome; these are the rows of every stage fit.
pub fn stage_rows(cohort: &Cohort) -> Vec<usize> {
    (0..cohort.n()).filter(|&i| cohort.outcome(i).is_some()).collect()
}

fn strategy_at(cohort: &Cohort, i: usize, t: usize) -> Result<StrategyCode, EngineError> {
    cohort.strategy(i, t).ok_or_else(|| EngineError::MissingValue {
        term: "dN/A".into(),
        id: cohort.ids()[i],
        t,
    })
}

/// Stage design for the listed subjects. Modifier values are only needed
/// where the corresponding indicator is 1.
pub fn stage_design(cohort: &Cohort, t: usize, spec: &BlipSpec, rows: &[usize]) -> Result<DesignMatrix<f64>, EngineError> {
    let h = spec
        .treatment_free
        .get(&t)
        .ok_or_else(|| EngineError::Spec(format!("no treatment-free terms for stage {t}")))?;
    let h_res = h.iter().map(|x| cohort.resolve(x, t)).collect::<Result<Vec<_>, _>>()?;
    let qv: Vec<_> = spec
        .visit_modifiers
        .iter()
        .map(|x| cohort.resolve(x, t))
        .collect::<Result<_, _>>()?;
    let qa: Vec<_> = spec
        .addon_modifiers
        .iter()
        .map(|x| cohort.resolve(x, t))
        .collect::<Result<_, _>>()?;
    let p = 3 + h.len() + qv.len() + qa.len();
    let missing = |term: &Term, i: usize| EngineError::MissingValue {
        term: term.to_string(),
        id: cohort.ids()[i],
        t,
    };
    let mut data = Vec::with_capacity(rows.len() * p);
    for &i in rows {
        let s = strategy_at(cohort, i, t)?;
        data.push(1.0);
        for (term, r) in h.iter().zip(&h_res) {
            data.push(cohort.eval(r, i).ok_or_else(|| missing(term, i))?);
        }
        let block = |on: bool, terms: &[Term], res: &[panel::ResolvedTerm], data: &mut Vec<f64>| {
            data.push(f64::from(u8::from(on)));
            for (term, r) in terms.iter().zip(res) {
                data.push(if on { cohort.eval(r, i).ok_or_else(|| missing(term, i))? } else { 0.0 });
            }
            Ok::<(), EngineError>(())
        };
        block(s.visit(), &spec.visit_modifiers, &qv, &mut data)?;
        block(s.addon(), &spec.addon_modifiers, &qa, &mut data)?;
    }
    let m = Matrix::from_row_major(rows.len(), p, data).expect("sized");
    DesignMatrix::new(spec.column_names(t), m).map_err(|source| EngineError::Glm { t, source })
}

/// Coefficients of one stage regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFit {
    pub t: usize,
    /// Intercept followed by the treatment-free terms.
    pub beta_names: Vec<String>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_star: Vec<f64>,
    pub n_obs: usize,
    pub weighted_rss: f64,
}

impl StageFit {
    /// All coefficients in design-column order.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = self.beta.clone();
        c.extend(&self.gamma);
        c.extend(&self.gamma_star);
        c
    }

    /// `(b_v, b_va)` at the given modifier values.
    pub fn blips(&self, q_v: &[f64], q_va: &[f64]) -> Result<(f64, f64), EngineError> {
        Ok((blip_visit(&self.gamma, q_v)?, blip_addon(&self.gamma_star, q_va)?))
    }
}

/// Stage regression of `pseudo_y` (aligned with `rows`) with optional
/// weights (aligned with `rows`; zero excludes a row).
pub fn fit_stage(
    cohort: &Cohort,
    t: usize,
    rows: &[usize],
    pseudo_y: &[f64],
    spec: &BlipSpec,
    w: Option<&[f64]>,
) -> Result<StageFit, EngineError> {
    let x = stage_design(cohort, t, spec, rows)?;
    let ones;
    let w = match w {
        Some(w) => w,
        None => {
            ones = vec![1.0; rows.len()];
            &ones
        }
    };
    let fit = glm::fit_wls(&x, pseudo_y, w).map_err(|source| EngineError::Glm { t, source })?;
    let nb = 1 + spec.treatment_free.get(&t).map_or(0, Vec::len);
    let nv = 1 + spec.visit_modifiers.len();
    let c = fit.coefficients;
    Ok(StageFit {
        t,
        beta_names: x.names()[..nb].to_vec(),
        beta: c[..nb].to_vec(),
        gamma: c[nb..nb + nv].to_vec(),
        gamma_star: c[nb + nv..].to_vec(),
        n_obs: fit.n_obs,
        weighted_rss: fit.objective,
    })
}

/// `y + Σ_s [max(0, b_v, b_v + b_va) − (dN b_v + dN A b_va)]` over the later
/// stages.
pub fn pseudo_outcome(
    y: &[f64],
    rows: &[usize],
    later: &[StageFit],
    cohort: &Cohort,
    spec: &BlipSpec,
) -> Result<Vec<f64>, EngineError> {
    if later.windows(2).any(|w| w[0].t >= w[1].t) {
        return Err(EngineError::Spec("later stages must be sorted".into()));
    }
    let mut out = y.to_vec();
    for s in later {
        for (r, &i) in rows.iter().enumerate() {
            let qv = spec.modifiers_at(cohort, s.t, i, &spec.visit_modifiers)?;
            let qa = spec.modifiers_at(cohort, s.t, i, &spec.addon_modifiers)?;
            let (bv, bva) = s.blips(&qv, &qa)?;
            let got = strategy_at(cohort, i, s.t)?;
            let received = if got.visit() { bv } else { 0.0 } + if got.addon() { bva } else { 0.0 };
            out[r] += optimal_value(bv, bva) - received;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Woma,
    Qloma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentWeights {
    /// Generalized overlap weights from the joint multinomial model.
    Overlap,
    /// Inverse probability weights from the factorized visit/add-on models.
    Ipt,
    None,
}

/// Estimation settings for [`fit_regime`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeOptions {
    pub method: Method,
    pub weights: TreatmentWeights,
    /// Propensity covariates keyed by stage.
    #[serde(default)]
    pub propensity: BTreeMap<usize, Vec<Term>>,
    /// Add-on model covariates for the factorized path; defaults to
    /// `propensity`.
    #[serde(default)]
    pub addon_propensity: Option<BTreeMap<usize, Vec<Term>>>,
    /// Propensity model behind the weights; by default the joint
    /// multinomial for overlap weights and the factorized pair for IPT.
    #[serde(default)]
    pub propensity_source: Option<PropensitySource>,
    #[serde(default)]
    pub ipt_truncation: Option<(f64, f64)>,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    #[serde(default)]
    pub positivity_override: bool,
}

fn default_floor() -> f64 {
    panel::DEFAULT_POSITIVITY_FLOOR
}

impl RegimeOptions {
    pub fn qloma() -> Self {
        Self {
            method: Method::Qloma,
            weights: TreatmentWeights::None,
            propensity: BTreeMap::new(),
            addon_propensity: None,
            propensity_source: None,
            ipt_truncation: None,
            positivity_floor: default_floor(),
            positivity_override: false,
        }
    }

    pub fn woma(weights: TreatmentWeights, propensity: BTreeMap<usize, Vec<Term>>) -> Self {
        Self {
            method: Method::Woma,
            weights,
            propensity,
            ..Self::qloma()
        }
    }

    fn covariates(&self, t: usize, addon: bool) -> Result<&[Term], EngineError> {
        let map = match (&self.addon_propensity, addon) {
            (Some(m), true) => m,
            _ => &self.propensity,
        };
        map.get(&t)
            .map(Vec::as_slice)
            .ok_or_else(|| EngineError::Spec(format!("no propensity covariates for stage {t}")))
    }

    fn effective_weights(&self) -> TreatmentWeights {
        match self.method {
            Method::Qloma => TreatmentWeights::None,
            Method::Woma => self.weights,
        }
    }
}

/// The estimated regime: one stage fit per decision time, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRegime {
    pub method: Method,
    pub weights: TreatmentWeights,
    pub ipcw: bool,
    pub visit_modifiers: Vec<Term>,
    pub addon_modifiers: Vec<Term>,
    pub stages: Vec<StageFit>,
    /// Number of completed datasets averaged into this regime.
    pub imputations: usize,
}

impl FittedRegime {
    pub fn stage(&self, t: usize) -> Option<&StageFit> {
        self.stages.iter().find(|s| s.t == t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("regime serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Decision for a history at stage `t`; `None` when the stage is not part
    /// of the regime or a modifier is unavailable.
    pub fn decision<H: History + ?Sized>(&self, t: usize, h: &H) -> Option<StrategyCode> {
        let s = self.stage(t)?;
        let qv: Option<Vec<f64>> = self.visit_modifiers.iter().map(|q| q.eval(h, t)).collect();
        let qa: Option<Vec<f64>> = self.addon_modifiers.iter().map(|q| q.eval(h, t)).collect();
        let (bv, bva) = s.blips(&qv?, &qa?).ok()?;
        Some(decide(bv, bva))
    }
}

impl Policy for FittedRegime {
    fn decide(&self, stage: usize, history: &dyn History) -> Option<StrategyCode> {
        self.decision(stage, history)
    }
}

/// Failure inside [`fit_regime`], with the stages fitted so far.
#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct RegimeError {
    pub stage: usize,
    pub partial: Vec<StageFit>,
    #[source]
    pub source: EngineError,
}

/// Treatment weights at stage `t` for every subject (0 when not at risk),
/// plus the propensity estimates they came from.
pub fn stage_weights(
    cohort: &Cohort,
    t: usize,
    opts: &RegimeOptions,
) -> Result<(Vec<f64>, Option<PropensityEstimates>), EngineError> {
    let kind = opts.effective_weights();
    let source = match (kind, opts.propensity_source) {
        (TreatmentWeights::None, _) => return Ok((vec![1.0; cohort.n()], None)),
        (_, Some(s)) => s,
        (TreatmentWeights::Overlap, None) => PropensitySource::Joint,
        (TreatmentWeights::Ipt, None) => PropensitySource::Factorized,
    };
    let e = match source {
        PropensitySource::Joint => weights::estimate_propensities_joint(cohort, t, opts.covariates(t, false)?)?,
        PropensitySource::Factorized => weights::estimate_propensities_factorized(
            cohort,
            t,
            opts.covariates(t, false)?,
            opts.covariates(t, true)?,
        )?,
    };
    let received = weights::received_strategies(cohort, t);
    let w = match kind {
        TreatmentWeights::Ipt => weights::ipt_weights(&e, &received, opts.ipt_truncation),
        _ => weights::overlap_weights(&e, &received),
    };
    if w.clipped > 0 {
        log::warn!("stage {t}: {} propensity rows clipped to the floor", w.clipped);
    }
    Ok((w.values, Some(e)))
}

/// Backward induction from the last stage to the first.
pub fn fit_regime(
    cohort: &Cohort,
    spec: &BlipSpec,
    opts: &RegimeOptions,
    ipcw: Option<&[f64]>,
) -> Result<FittedRegime, RegimeError> {
    let fail = |stage: usize, partial: &[StageFit], source: EngineError| RegimeError {
        stage,
        partial: partial.to_vec(),
        source,
    };
    let first = spec.stages.first().copied().unwrap_or(0);
    spec.check(cohort).map_err(|e| fail(first, &[], e))?;
    if let Some(w) = ipcw {
        if w.len() != cohort.n() {
            return Err(fail(first, &[], EngineError::Dimension("censoring weights length".into())));
        }
    }
    if !opts.positivity_override {
        let report = panel::validate_cohort(cohort, opts.positivity_floor);
        if let Some(bad) = report.warnings.iter().find(|w| spec.stages.contains(&w.t)) {
            return Err(fail(
                bad.t,
                &[],
                EngineError::Positivity(format!(
                    "strategy {} has frequency {:.4} at t={}",
                    bad.strategy, bad.frequency, bad.t
                )),
            ));
        }
    }
    let rows = stage_rows(cohort);
    let y: Vec<f64> = rows.iter().map(|&i| cohort.outcome(i).expect("completer")).collect();
    let mut fitted: Vec<StageFit> = Vec::new();
    for &t in spec.stages.iter().rev() {
        let step = || -> Result<StageFit, EngineError> {
            let (tw, _) = stage_weights(cohort, t, opts)?;
            let w: Vec<f64> = rows
                .iter()
                .map(|&i| tw[i] * ipcw.map_or(1.0, |c| c[i]))
                .collect();
            let py = pseudo_outcome(&y, &rows, &fitted, cohort, spec)?;
            fit_stage(cohort, t, &rows, &py, spec, Some(&w))
        };
        let s = step().map_err(|e| fail(t, &fitted, e))?;
        fitted.insert(0, s);
    }
    Ok(FittedRegime {
        method: opts.method,
        weights: opts.effective_weights(),
        ipcw: ipcw.is_some(),
        visit_modifiers: spec.visit_modifiers.clone(),
        addon_modifiers: spec.addon_modifiers.clone(),
        stages: fitted,
        imputations: 1,
    })
}

/// Received (rows) against recommended (columns) strategy counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub t: usize,
    pub counts: [[usize; 3]; 3],
}

impl ContingencyTable {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedRegime {
    /// Per stage, the recommended strategy for each subject in the study.
    pub decisions: Vec<(usize, Vec<Option<StrategyCode>>)>,
    pub tables: Vec<ContingencyTable>,
}

/// Recommended strategies for every subject in the study at each stage.
pub fn apply_regime(regime: &FittedRegime, cohort: &Cohort) -> Result<AppliedRegime, EngineError> {
    let mut decisions = Vec::new();
    let mut tables = Vec::new();
    for s in &regime.stages {
        let t = s.t;
        let mut dec = vec![None; cohort.n()];
        let mut counts = [[0usize; 3]; 3];
        for i in (0..cohort.n()).filter(|&i| cohort.xi(i, t)) {
            let h = cohort.subject(i);
            let missing = |q: &Term| EngineError::MissingValue {
                term: q.to_string(),
                id: cohort.ids()[i],
                t,
            };
            let qv = regime
                .visit_modifiers
                .iter()
                .map(|q| q.eval(&h, t).ok_or_else(|| missing(q)))
                .collect::<Result<Vec<_>, _>>()?;
            let qa = regime
                .addon_modifiers
                .iter()
                .map(|q| q.eval(&h, t).ok_or_else(|| missing(q)))
                .collect::<Result<Vec<_>, _>>()?;
            let (bv, bva) = s.blips(&qv, &qa)?;
            let opt = decide(bv, bva);
            dec[i] = Some(opt);
            counts[strategy_at(cohort, i, t)?.index()][opt.index()] += 1;
        }
        decisions.push((t, dec));
        tables.push(ContingencyTable { t, counts });
    }
    Ok(AppliedRegime { decisions, tables })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{parse_terms, tests::small_cohort};
    use approx::assert_relative_eq;

    #[test]
    fn blip_hand_values() {
        assert_eq!(blip_visit(&[1.0, 1.0, 0.01], &[0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(blip_visit(&[1.0, 1.0, 0.01], &[2.0, 100.0]).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(blip_addon(&[1.5, -1.2, 0.01], &[0.0, 0.0]).unwrap(), 1.5);
        assert_relative_eq!(blip_addon(&[1.5, -1.2, 0.01], &[1.0, 100.0]).unwrap(), 1.3, epsilon = 1e-12);
        assert_eq!(blip_visit(&[0.0; 3], &[5.0, -2.0]).unwrap(), 0.0);
        assert!(blip_visit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert_relative_eq!(blip_visit(&[1.0f32, 1.0, 0.01], &[2.0, 100.0]).unwrap(), 4.0, epsilon = 1e-5);
    }

    #[test]
    fn decide_cases() {
        assert_eq!(decide(-1.0, -1.0), StrategyCode::NONE);
        assert_eq!(decide(2.0, -1.0), StrategyCode::VISIT);
        assert_eq!(decide(-1.0, 3.0), StrategyCode::VISIT_ADDON);
        assert_eq!(decide(0.0, 0.0), StrategyCode::NONE);
        assert_eq!(decide(1.0, 0.0), StrategyCode::VISIT);
        assert_eq!(decide_with(0.0, 0.0, TieBreak::MostIntervention), StrategyCode::VISIT_ADDON);
    }

    fn spec() -> BlipSpec {
        let mut tf = BTreeMap::new();
        tf.insert(1, parse_terms(&["K1@0", "Y@0"]).unwrap());
        tf.insert(2, parse_terms(&["K1@1", "K2@1"]).unwrap());
        BlipSpec {
            visit_modifiers: parse_terms(&["K1"]).unwrap(),
            addon_modifiers: parse_terms(&["K1", "Y"]).unwrap(),
            treatment_free: tf,
            stages: vec![1, 2],
        }
    }

    #[test]
    fn design_blocks_follow_strategy() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[0], s[0]], [s[1], s[1]], [s[2], s[2]]]);
        let sp = spec();
        let x = stage_design(&c, 1, &sp, &[0, 1, 2]).unwrap();
        assert_eq!(x.n_cols(), 1 + 2 + 2 + 3);
        assert_eq!(
            x.names(),
            ["(Intercept)", "K1@0", "Y@0", "dN", "dN*K1", "dN*A", "dN*A*K1", "dN*A*Y"]
        );
        assert!(x.row(0)[3..].iter().all(|&v| v == 0.0));
        assert_eq!(x.row(1)[3..5], [1.0, 2.0]);
        assert!(x.row(1)[5..].iter().all(|&v| v == 0.0));
        assert_eq!(x.row(2)[5..], [1.0, 3.0, 103.0]);
    }

    #[test]
    fn pseudo_outcome_hand_value() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[2], s[2]], [s[1], s[1]]]);
        let sp = BlipSpec {
            visit_modifiers: vec![],
            addon_modifiers: vec![],
            ..spec()
        };
        let later = StageFit {
            t: 2,
            beta_names: vec![],
            beta: vec![],
            gamma: vec![2.0],
            gamma_star: vec![-1.0],
            n_obs: 0,
            weighted_rss: 0.0,
        };
        let py = pseudo_outcome(&[100.0, 100.0], &[0, 1], &[later], &c, &sp).unwrap();
        assert_relative_eq!(py[0], 101.0, epsilon = 1e-12);
        assert_eq!(py[1], 100.0);
        assert_eq!(pseudo_outcome(&[5.0], &[0], &[], &c, &sp).unwrap(), vec![5.0]);
    }

    #[test]
    fn all_zero_regime_recommends_nothing() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[0], s[1]], [s[1], s[2]], [s[2], s[0]]]);
        let zero = |t| StageFit {
            t,
            beta_names: vec![],
            beta: vec![],
            gamma: vec![0.0, 0.0],
            gamma_star: vec![0.0, 0.0, 0.0],
            n_obs: 0,
            weighted_rss: 0.0,
        };
        let sp = spec();
        let reg = FittedRegime {
            method: Method::Qloma,
            weights: TreatmentWeights::None,
            ipcw: false,
            visit_modifiers: sp.visit_modifiers.clone(),
            addon_modifiers: sp.addon_modifiers.clone(),
            stages: vec![zero(1), zero(2)],
            imputations: 1,
        };
        let app = apply_regime(&reg, &c).unwrap();
        for (_, d) in &app.decisions {
            assert!(d.iter().all(|x| *x == Some(StrategyCode::NONE)));
        }
        for tab in &app.tables {
            assert_eq!(tab.total(), 3);
        }
        let back = FittedRegime::from_json(&reg.to_json()).unwrap();
        assert_eq!(back, reg);
    }
}

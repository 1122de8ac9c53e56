//! Treatment and censoring weights plus covariate-balance diagnostics.
//!
//! Per-subject vectors are indexed by cohort subject; subjects a weight does
//! not apply to carry 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::{self, DesignMatrix, FitResult, GlmError, INTERCEPT};
use crate::linalg::Matrix;
use crate::panel::{Cohort, PanelError, StrategyCode, Term};
use crate::scalar::Scalar;

pub const PROBABILITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("time {t}: {source}")]
    Fit {
        t: usize,
        #[source]
        source: GlmError,
    },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("missing value for {term} (id {id}, t={t})")]
    MissingValue { term: String, id: i64, t: usize },
    #[error("no visitors at time {0}")]
    NoVisitors(usize),
    #[error("every subject is censored")]
    AllCensored,
    #[error("strategy group {0} is empty")]
    EmptyGroup(String),
    #[error("weight vector has length {found}, cohort has {expected} subjects")]
    Length { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    Joint,
    Factorized,
}

/// Strategy probabilities `(e0, e1, e2)` per subject at one decision time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityEstimates {
    pub t: usize,
    pub source: PropensitySource,
    /// `None` for subjects not at risk at `t`.
    pub e: Vec<Option<[f64; 3]>>,
    /// Fitted models: the multinomial, or the visit then add-on logistics.
    pub models: Vec<FitResult<f64>>,
    pub covariates: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Overlap,
    Ipt,
    Ipcw,
    Product,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub kind: WeightKind,
    pub values: Vec<f64>,
    /// Probabilities raised to the floor before inversion.
    pub clipped: usize,
}

impl WeightVector {
    pub fn ones(n: usize) -> Self {
        Self {
            kind: WeightKind::Unit,
            values: vec![1.0; n],
            clipped: 0,
        }
    }

    /// Elementwise product, e.g. treatment weights times censoring weights.
    pub fn product(&self, other: &WeightVector) -> Result<WeightVector, WeightError> {
        if self.values.len() != other.values.len() {
            return Err(WeightError::Length {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(WeightVector {
            kind: WeightKind::Product,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            clipped: self.clipped + other.clipped,
        })
    }
}

fn clip<T: Scalar>(p: T) -> T {
    let lo = T::of(PROBABILITY_FLOOR);
    p.max(lo).min(T::one() - lo)
}

/// Harmonic term `1 / (1/e0 + 1/e1 + 1/e2)`.
pub fn harmonic_term<T: Scalar>(e: [T; 3]) -> T {
    T::one() / e.iter().map(|&v| T::one() / clip(v)).sum::<T>()
}

/// Generalized overlap weight for the received category `k`.
pub fn overlap_weight<T: Scalar>(e: [T; 3], k: usize) -> T {
    harmonic_term(e) / clip(e[k])
}

pub fn ipt_weight<T: Scalar>(e: [T; 3], k: usize) -> T {
    T::one() / clip(e[k])
}

fn clipped_count(e: &[Option<[f64; 3]>], pick: impl Fn(usize) -> bool) -> usize {
    e.iter()
        .enumerate()
        .filter(|&(i, _)| pick(i))
        .filter_map(|(_, r)| *r)
        .filter(|r| r.iter().any(|&p| !(PROBABILITY_FLOOR..=1.0 - PROBABILITY_FLOOR).contains(&p)))
        .count()
}

/// Design of `terms` evaluated at stage `t` for the listed subjects, with an
/// intercept first.
pub fn covariate_design(cohort: &Cohort, t: usize, terms: &[Term], rows: &[usize]) -> Result<DesignMatrix<f64>, WeightError> {
    let resolved = terms
        .iter()
        .map(|tm| cohort.resolve(tm, t))
        .collect::<Result<Vec<_>, _>>()?;
    let p = terms.len() + 1;
    let mut data = Vec::with_capacity(rows.len() * p);
    for &i in rows {
        data.push(1.0);
        for (term, r) in terms.iter().zip(&resolved) {
            data.push(cohort.eval(r, i).ok_or_else(|| WeightError::MissingValue {
                term: term.to_string(),
                id: cohort.ids()[i],
                t,
            })?);
        }
    }
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(terms.iter().map(|t| t.to_string()));
    let m = Matrix::from_row_major(rows.len(), p, data).expect("sized");
    DesignMatrix::new(names, m).map_err(|source| WeightError::Fit { t, source })
}

fn at_risk(cohort: &Cohort, t: usize) -> Vec<usize> {
    (0..cohort.n()).filter(|&i| cohort.xi(i, t)).collect()
}

fn received(cohort: &Cohort, t: usize, rows: &[usize]) -> Result<Vec<usize>, WeightError> {
    rows.iter()
        .map(|&i| {
            cohort.strategy(i, t).map(StrategyCode::index).ok_or_else(|| WeightError::MissingValue {
                term: "dN/A".into(),
                id: cohort.ids()[i],
                t,
            })
        })
        .collect()
}

/// Joint multinomial propensity model (category 0 = (0,0)) over subjects in
/// the study at `t`.
pub fn estimate_propensities_joint(cohort: &Cohort, t: usize, covariates: &[Term]) -> Result<PropensityEstimates, WeightError> {
    let rows = at_risk(cohort, t);
    let x = covariate_design(cohort, t, covariates, &rows)?;
    let y = received(cohort, t, &rows)?;
    let fit = glm::fit_multinomial(&x, &y, 3).map_err(|source| WeightError::Fit { t, source })?;
    let pr = glm::predict_proba(&fit, &x).map_err(|source| WeightError::Fit { t, source })?;
    let mut e = vec![None; cohort.n()];
    for (r, &i) in rows.iter().enumerate() {
        let p = pr.row(r);
        e[i] = Some([p[0], p[1], p[2]]);
    }
    Ok(PropensityEstimates {
        t,
        source: PropensitySource::Joint,
        e,
        models: vec![fit],
        covariates: covariates.to_vec(),
    })
}

/// Visit model on everyone at risk, add-on model among visitors only.
pub fn estimate_propensities_factorized(
    cohort: &Cohort,
    t: usize,
    visit_covs: &[Term],
    addon_covs: &[Term],
) -> Result<PropensityEstimates, WeightError> {
    let rows = at_risk(cohort, t);
    let codes = received(cohort, t, &rows)?;
    let xv = covariate_design(cohort, t, visit_covs, &rows)?;
    let dn: Vec<f64> = codes.iter().map(|&k| f64::from(k > 0)).collect();
    let ones = vec![1.0; rows.len()];
    let fit_v = glm::fit_logistic(&xv, &dn, &ones).map_err(|source| WeightError::Fit { t, source })?;

    let visitors: Vec<usize> = rows.iter().zip(&codes).filter(|(_, &k)| k > 0).map(|(&i, _)| i).collect();
    if visitors.is_empty() {
        return Err(WeightError::NoVisitors(t));
    }
    let xa_vis = covariate_design(cohort, t, addon_covs, &visitors)?;
    let a: Vec<f64> = codes.iter().filter(|&&k| k > 0).map(|&k| f64::from(k == 2)).collect();
    let fit_a = glm::fit_logistic(&xa_vis, &a, &vec![1.0; visitors.len()])
        .map_err(|source| WeightError::Fit { t, source })?;

    let xa = covariate_design(cohort, t, addon_covs, &rows)?;
    let pv = glm::predict_proba(&fit_v, &xv).map_err(|source| WeightError::Fit { t, source })?;
    let pa = glm::predict_proba(&fit_a, &xa).map_err(|source| WeightError::Fit { t, source })?;
    let mut e = vec![None; cohort.n()];
    for (r, &i) in rows.iter().enumerate() {
        let (v, ad) = (pv[(r, 0)], pa[(r, 0)]);
        e[i] = Some([1.0 - v, v * (1.0 - ad), v * ad]);
    }
    let mut covariates = visit_covs.to_vec();
    covariates.extend(addon_covs.iter().cloned());
    Ok(PropensityEstimates {
        t,
        source: PropensitySource::Factorized,
        e,
        models: vec![fit_v, fit_a],
        covariates,
    })
}

/// `w = harmonic(e) / e_received`; 0 where either input is absent.
pub fn overlap_weights(e: &PropensityEstimates, received: &[Option<StrategyCode>]) -> WeightVector {
    let values = e
        .e
        .iter()
        .zip(received)
        .map(|(p, r)| match (p, r) {
            (Some(p), Some(r)) => overlap_weight(*p, r.index()),
            _ => 0.0,
        })
        .collect();
    WeightVector {
        kind: WeightKind::Overlap,
        values,
        clipped: clipped_count(&e.e, |i| received[i].is_some()),
    }
}

/// `w = 1 / e_received`, optionally clamped to the given empirical
/// percentiles (in percent) of the nonzero weights.
pub fn ipt_weights(e: &PropensityEstimates, received: &[Option<StrategyCode>], truncation: Option<(f64, f64)>) -> WeightVector {
    let mut values: Vec<f64> = e
        .e
        .iter()
        .zip(received)
        .map(|(p, r)| match (p, r) {
            (Some(p), Some(r)) => ipt_weight(*p, r.index()),
            _ => 0.0,
        })
        .collect();
    if let Some((lo, hi)) = truncation {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|&w| w > 0.0).collect();
        sorted.sort_by(f64::total_cmp);
        if !sorted.is_empty() {
            let (lo, hi) = (percentile(&sorted, lo), percentile(&sorted, hi));
            for w in values.iter_mut().filter(|w| **w > 0.0) {
                *w = w.clamp(lo, hi);
            }
        }
    }
    WeightVector {
        kind: WeightKind::Ipt,
        values,
        clipped: clipped_count(&e.e, |i| received[i].is_some()),
    }
}

/// Linear-interpolation percentile of sorted data, `q` in percent.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Received strategies at `t`, `None` for subjects not in the study.
pub fn received_strategies(cohort: &Cohort, t: usize) -> Vec<Option<StrategyCode>> {
    (0..cohort.n())
        .map(|i| cohort.xi(i, t).then(|| cohort.strategy(i, t)).flatten())
        .collect()
}

fn completers(cohort: &Cohort) -> Vec<bool> {
    (0..cohort.n()).map(|i| cohort.outcome(i).is_some()).collect()
}

/// One logistic model for being censored before the final outcome, on
/// baseline (time-0) covariates. Completers get `1 / P(uncensored)`.
pub fn ipcw_time_fixed(cohort: &Cohort, baseline_covs: &[Term]) -> Result<WeightVector, WeightError> {
    let done = completers(cohort);
    let n_done = done.iter().filter(|&&d| d).count();
    if n_done == cohort.n() {
        log::info!("no censoring: censoring weights are all 1");
        return Ok(WeightVector {
            kind: WeightKind::Ipcw,
            ..WeightVector::ones(cohort.n())
        });
    }
    if n_done == 0 {
        return Err(WeightError::AllCensored);
    }
    let rows: Vec<usize> = (0..cohort.n()).collect();
    let x = covariate_design(cohort, 0, baseline_covs, &rows)?;
    let y: Vec<f64> = done.iter().map(|&d| f64::from(!d)).collect();
    let fit = glm::fit_logistic(&x, &y, &vec![1.0; rows.len()]).map_err(|source| WeightError::Fit { t: 0, source })?;
    let p = glm::predict_proba(&fit, &x).map_err(|source| WeightError::Fit { t: 0, source })?;
    let mut clipped = 0;
    let values = (0..cohort.n())
        .map(|i| {
            if !done[i] {
                return 0.0;
            }
            let s = 1.0 - p[(i, 0)];
            if s < PROBABILITY_FLOOR {
                clipped += 1;
            }
            1.0 / clip(s)
        })
        .collect();
    Ok(WeightVector {
        kind: WeightKind::Ipcw,
        values,
        clipped,
    })
}

/// Pooled logistic hazard over person-time. A subject in the study at `t`
/// contributes a row with event `xi(t+1) = 0`, for `t` from the first time
/// any censoring occurs up to `tau - 1`. Completers get
/// `1 / prod_t (1 - h_t)`, multiplied by the marginal survival when
/// stabilized.
pub fn ipcw_time_dependent(cohort: &Cohort, timevarying_covs: &[Term], stabilized: bool) -> Result<WeightVector, WeightError> {
    let done = completers(cohort);
    let n_done = done.iter().filter(|&&d| d).count();
    if n_done == cohort.n() {
        log::info!("no censoring: censoring weights are all 1");
        return Ok(WeightVector {
            kind: WeightKind::Ipcw,
            ..WeightVector::ones(cohort.n())
        });
    }
    if n_done == 0 {
        return Err(WeightError::AllCensored);
    }
    let tau = cohort.tau();
    let first = (0..cohort.n())
        .filter(|&i| !done[i])
        .map(|i| cohort.last_time(i))
        .min()
        .expect("someone is censored");
    let survival = |terms: &[Term]| -> Result<(Vec<f64>, usize), WeightError> {
        let mut blocks = Vec::new();
        let mut ys = Vec::new();
        for t in first..tau {
            let rows = at_risk(cohort, t);
            let x = covariate_design(cohort, t, terms, &rows)?;
            ys.extend(rows.iter().map(|&i| f64::from(!cohort.xi(i, t + 1))));
            blocks.push((t, rows, x));
        }
        let p = terms.len() + 1;
        let mut data = Vec::with_capacity(ys.len() * p);
        for (_, _, x) in &blocks {
            data.extend_from_slice(x.values().as_slice());
        }
        let names = blocks[0].2.names().to_vec();
        let pooled = DesignMatrix::new(names, Matrix::from_row_major(ys.len(), p, data).expect("sized"))
            .map_err(|source| WeightError::Fit { t: first, source })?;
        let fit = glm::fit_logistic(&pooled, &ys, &vec![1.0; ys.len()])
            .map_err(|source| WeightError::Fit { t: first, source })?;
        let mut surv = vec![1.0; cohort.n()];
        let mut clipped = 0;
        for (_, rows, x) in &blocks {
            let h = glm::predict_proba(&fit, x).map_err(|source| WeightError::Fit { t: first, source })?;
            for (r, &i) in rows.iter().enumerate() {
                let s = 1.0 - h[(r, 0)];
                if s < PROBABILITY_FLOOR {
                    clipped += 1;
                }
                surv[i] *= clip(s);
            }
        }
        Ok((surv, clipped))
    };
    let (denominator, clipped) = survival(timevarying_covs)?;
    let numerator = if stabilized { Some(survival(&[])?.0) } else { None };
    let values = (0..cohort.n())
        .map(|i| {
            if !done[i] {
                0.0
            } else {
                numerator.as_ref().map_or(1.0, |num| num[i]) / denominator[i]
            }
        })
        .collect();
    Ok(WeightVector {
        kind: WeightKind::Ipcw,
        values,
        clipped,
    })
}

/// One row of the balance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub group: String,
    pub weighted_mean: f64,
    pub weighted_sd: f64,
    pub smd_01: f64,
    pub smd_02: f64,
    pub smd_12: f64,
}

/// Weighted mean/SD of each covariate per strategy group at `t`, with all
/// pairwise standardized mean differences.
pub fn balance_diagnostics(cohort: &Cohort, t: usize, w: &[f64], covariates: &[Term]) -> Result<Vec<BalanceRow>, WeightError> {
    if w.len() != cohort.n() {
        return Err(WeightError::Length {
            expected: cohort.n(),
            found: w.len(),
        });
    }
    let rows: Vec<usize> = (0..cohort.n()).filter(|&i| cohort.xi(i, t) && w[i] > 0.0).collect();
    let groups = received(cohort, t, &rows)?;
    let x = covariate_design(cohort, t, covariates, &rows)?;
    let mut out = Vec::new();
    for (j, term) in covariates.iter().enumerate() {
        let mut stats = [(0.0, 0.0); 3];
        for (g, stat) in stats.iter_mut().enumerate() {
            let (mut sw, mut sx) = (0.0, 0.0);
            for (r, &i) in rows.iter().enumerate() {
                if groups[r] == g {
                    sw += w[i];
                    sx += w[i] * x.values()[(r, j + 1)];
                }
            }
            if sw == 0.0 {
                return Err(WeightError::EmptyGroup(StrategyCode::ALL[g].to_string()));
            }
            let mean = sx / sw;
            let mut ss = 0.0;
            for (r, &i) in rows.iter().enumerate() {
                if groups[r] == g {
                    ss += w[i] * (x.values()[(r, j + 1)] - mean).powi(2);
                }
            }
            *stat = (mean, (ss / sw).sqrt());
        }
        let smd = |a: usize, b: usize| {
            let diff = stats[a].0 - stats[b].0;
            let pooled = ((stats[a].1.powi(2) + stats[b].1.powi(2)) / 2.0).sqrt();
            if pooled > 0.0 {
                diff / pooled
            } else {
                0.0
            }
        };
        let (s01, s02, s12) = (smd(0, 1), smd(0, 2), smd(1, 2));
        for (g, &(m, sd)) in stats.iter().enumerate() {
            out.push(BalanceRow {
                covariate: term.to_string(),
                group: StrategyCode::ALL[g].to_string(),
                weighted_mean: m,
                weighted_sd: sd,
                smd_01: s01,
                smd_02: s02,
                smd_12: s12,
            });
        }
    }
    Ok(out)
}

/// Largest absolute SMD in a balance table.
pub fn max_abs_smd(rows: &[BalanceRow]) -> f64 {
    rows.iter()
        .flat_map(|r| [r.smd_01, r.smd_02, r.smd_12])
        .fold(0.0, |m, v| m.max(v.abs()))
}

pub fn write_balance_csv<W: std::io::Write>(rows: &[BalanceRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::tests::small_cohort;
    use approx::assert_relative_eq;

    fn est(rows: Vec<[f64; 3]>) -> PropensityEstimates {
        PropensityEstimates {
            t: 1,
            source: PropensitySource::Joint,
            e: rows.into_iter().map(Some).collect(),
            models: vec![],
            covariates: vec![],
        }
    }

    #[test]
    fn overlap_hand_values() {
        let third = 1.0 / 3.0;
        for k in 0..3 {
            assert_relative_eq!(overlap_weight([third; 3], k), third, epsilon = 1e-15);
        }
        assert_relative_eq!(overlap_weight([0.5, 0.25, 0.25], 0), 0.2, epsilon = 1e-15);
        // 1/(5 + 10/3 + 2) / 0.5
        assert_relative_eq!(overlap_weight([0.2, 0.3, 0.5], 2), 6.0 / 31.0, epsilon = 1e-15);
        assert_relative_eq!(overlap_weight([0.2f32, 0.3, 0.5], 2), 6.0 / 31.0, epsilon = 1e-6);
    }

    #[test]
    fn ipt_hand_values() {
        assert_relative_eq!(ipt_weight([0.5, 0.25, 0.25], 2), 4.0);
        assert_relative_eq!(ipt_weight([0.8, 0.1, 0.1], 0), 1.25);
        let e = est(vec![[1.0 / 3.0; 3]; 3]);
        let r: Vec<_> = StrategyCode::ALL.iter().map(|&s| Some(s)).collect();
        for w in ipt_weights(&e, &r, None).values {
            assert_relative_eq!(w, 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ipt_truncation_clamps_extremes() {
        let e = est(vec![[0.5, 0.25, 0.25], [0.9, 0.05, 0.05], [0.98, 0.01, 0.01]]);
        let r = vec![Some(StrategyCode::NONE), Some(StrategyCode::VISIT), Some(StrategyCode::VISIT)];
        let raw = ipt_weights(&e, &r, None).values;
        let cut = ipt_weights(&e, &r, Some((0.0, 50.0))).values;
        assert_relative_eq!(raw[2], 100.0, epsilon = 1e-9);
        assert_relative_eq!(cut[2], 20.0, epsilon = 1e-9);
        assert_eq!(cut[0], raw[0]);
    }

    #[test]
    fn floor_counts_clipped_rows() {
        let e = est(vec![[1.0 - 1e-9, 5e-10, 5e-10], [0.4, 0.3, 0.3]]);
        let r = vec![Some(StrategyCode::VISIT), Some(StrategyCode::NONE)];
        let w = ipt_weights(&e, &r, None);
        assert_eq!(w.clipped, 1);
        assert_relative_eq!(w.values[0], 1e6, epsilon = 1e-6);
    }

    #[test]
    fn intercept_only_joint_matches_frequencies() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[0], s[0]], [s[0], s[1]], [s[1], s[2]], [s[2], s[2]], [s[0], s[1]]]);
        let e = estimate_propensities_joint(&c, 1, &[]).unwrap();
        for p in e.e.iter().flatten() {
            assert_relative_eq!(p[0], 0.6, epsilon = 1e-8);
            assert_relative_eq!(p[1], 0.2, epsilon = 1e-8);
            assert_relative_eq!(p[0] + p[1] + p[2], 1.0, epsilon = 1e-12);
        }
        let f = estimate_propensities_factorized(&c, 1, &[], &[]).unwrap();
        for p in f.e.iter().flatten() {
            assert_relative_eq!(p[0], 0.6, epsilon = 1e-8);
            assert_relative_eq!(p[2], 0.2, epsilon = 1e-8);
        }
    }

    #[test]
    fn no_censoring_gives_unit_ipcw() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[0], s[1]], [s[2], s[1]]]);
        let covs = vec!["Y".parse().unwrap()];
        assert!(ipcw_time_fixed(&c, &covs).unwrap().values.iter().all(|&w| w == 1.0));
        assert!(ipcw_time_dependent(&c, &covs, false).unwrap().values.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn stabilized_intercept_only_is_exactly_one() {
        let s = StrategyCode::ALL;
        let strategies: Vec<_> = (0..12).map(|i| [s[i % 3], s[(i / 3) % 3]]).collect();
        let mut c = small_cohort(&strategies);
        c.censor_after(0, 1);
        c.censor_after(4, 2);
        c.censor_after(7, 1);
        let w = ipcw_time_dependent(&c, &[], true).unwrap();
        for i in 0..c.n() {
            let expect = if c.outcome(i).is_some() { 1.0 } else { 0.0 };
            assert_eq!(w.values[i], expect);
        }
    }

    #[test]
    fn equal_weights_reproduce_unweighted_smd() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[0], s[0]], [s[1], s[1]], [s[2], s[2]], [s[0], s[1]], [s[1], s[2]], [s[2], s[0]]]);
        let covs = vec!["K1@t-1".parse().unwrap(), "A0".parse().unwrap()];
        let a = balance_diagnostics(&c, 1, &[1.0; 6], &covs).unwrap();
        let b = balance_diagnostics(&c, 1, &[2.5; 6], &covs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x.smd_01, y.smd_01, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_covariate_has_zero_smd() {
        use crate::panel::CohortBuilder;
        let mut b = CohortBuilder::new(2, &["A0"], &["Z"]);
        for i in 0..6 {
            let s = StrategyCode::ALL[i % 3];
            let d = Some(f64::from(u8::from(s.visit())));
            let a = Some(f64::from(u8::from(s.addon())));
            let x = Some(i as f64);
            let rows = vec![
                vec![None, None, x, x, x, Some(7.0)],
                vec![d, a, x, x, x, Some(7.0)],
                vec![None, None, None, None, None, None],
            ];
            b.push(i as i64, 2, &[0.0], &rows, Some(1.0)).unwrap();
        }
        let c = b.build().unwrap();
        let rows = balance_diagnostics(&c, 1, &[1.0; 6], &["Z".parse().unwrap()]).unwrap();
        assert_eq!(max_abs_smd(&rows), 0.0);
    }
}

//! Completion of missing covariate cells: last observation carried forward,
//! or sequential normal-linear multiple imputation swept forward in time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{FittedRegime, StageFit};
use crate::glm::{self, DesignMatrix, GlmError, INTERCEPT};
use crate::linalg::Matrix;
use crate::panel::{CellState, Cohort, PanelError, ADDON, VISIT};
use crate::sim::derive_seed;

#[derive(Debug, Error)]
pub enum MissingError {
    #[error("id {id}: {column} is missing at time {t} with no earlier observation")]
    LeadingMissing { column: String, id: i64, t: usize },
    #[error("{column} has no observed value at time {t}")]
    AllMissing { column: String, t: usize },
    #[error("imputation model for {column} at time {t}: {source}")]
    Model {
        column: String,
        t: usize,
        #[source]
        source: GlmError,
    },
    #[error("cannot pool regimes: {0}")]
    Structure(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub m: usize,
    /// Add a residual draw to the conditional mean.
    pub noise: bool,
    pub seed: u64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 25,
            noise: true,
            seed: 0,
        }
    }
}

fn fillable_columns(cohort: &Cohort) -> Vec<String> {
    cohort
        .column_names()
        .filter(|c| *c != VISIT && *c != ADDON)
        .map(str::to_string)
        .collect()
}

/// Replace each missing cell by the latest earlier value of the same column.
pub fn locf_complete(cohort: &Cohort) -> Result<Cohort, MissingError> {
    let mut out = cohort.clone();
    for col in fillable_columns(cohort) {
        for i in 0..cohort.n() {
            let mut last = None;
            for t in 0..=cohort.last_time(i) {
                match cohort.cell(&col, i, t) {
                    Some(CellState::Missing) => {
                        let v = last.ok_or_else(|| MissingError::LeadingMissing {
                            column: col.clone(),
                            id: cohort.ids()[i],
                            t,
                        })?;
                        out.fill(&col, i, t, v, CellState::Carried)?;
                    }
                    Some(s) if s.has_value() => last = cohort.value(&col, i, t),
                    _ => {}
                }
            }
        }
    }
    Ok(out)
}

/// Seeds and fill counts of an imputation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationManifest {
    pub seeds: Vec<u64>,
    /// `(column, time, cells filled)` per replicate-independent target.
    pub fills: Vec<(String, usize, usize)>,
}

/// `m` completed cohorts; replicate `j` uses seed `derive_seed(seed, j)`.
pub fn sequential_impute(cohort: &Cohort, config: &ImputationConfig) -> Result<Vec<Cohort>, MissingError> {
    (0..config.m.max(1))
        .into_par_iter()
        .map(|j| impute_once(cohort, config.noise, derive_seed(config.seed, j as u64)))
        .collect()
}

pub fn manifest(cohort: &Cohort, config: &ImputationConfig) -> ImputationManifest {
    let mut fills = Vec::new();
    for col in fillable_columns(cohort) {
        for t in 0..=cohort.tau() {
            let k = cohort.count_cells(&col, t, CellState::Missing);
            if k > 0 {
                fills.push((col.clone(), t, k));
            }
        }
    }
    ImputationManifest {
        seeds: (0..config.m.max(1)).map(|j| derive_seed(config.seed, j as u64)).collect(),
        fills,
    }
}

/// Predictor `(column, time)` pairs usable for every row in `rows`: baseline
/// columns, earlier times, and the current time's other columns.
fn predictors(work: &Cohort, t: usize, rows: &[usize], target: &str) -> Vec<(String, Option<usize>)> {
    let mut out: Vec<(String, Option<usize>)> = work.baseline_names().map(|b| (b.to_string(), None)).collect();
    let complete = |col: &str, s: usize| rows.iter().all(|&i| work.value(col, i, s).is_some());
    for s in 0..=t {
        for col in work.column_names() {
            // the visit indicator is never a predictor
            if col == VISIT || (s == t && col == target) {
                continue;
            }
            if complete(col, s) {
                out.push((col.to_string(), Some(s)));
            }
        }
    }
    out
}

fn impute_once(cohort: &Cohort, noise: bool, seed: u64) -> Result<Cohort, MissingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = cohort.clone();
    for t in 0..=cohort.tau() {
        let rows: Vec<usize> = (0..cohort.n()).filter(|&i| cohort.xi(i, t)).collect();
        for target in fillable_columns(cohort) {
            let missing: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| work.cell(&target, i, t) == Some(CellState::Missing))
                .collect();
            if missing.is_empty() {
                continue;
            }
            let observed: Vec<usize> = rows.iter().copied().filter(|&i| work.value(&target, i, t).is_some()).collect();
            if observed.is_empty() {
                return Err(MissingError::AllMissing { column: target, t });
            }
            let mut preds = predictors(&work, t, &rows, &target);
            // constant predictors carry no information and break the design
            preds.retain(|(col, s)| {
                let first = work.value(col, observed[0], s.unwrap_or(0));
                observed.iter().any(|&i| work.value(col, i, s.unwrap_or(0)) != first)
            });
            let value = |col: &str, i: usize, s: Option<usize>| work.value(col, i, s.unwrap_or(0)).expect("complete predictor");
            let (beta, sd, kept) = loop {
                let x = design(&observed, &preds, &value);
                let y: Vec<f64> = observed.iter().map(|&i| work.value(&target, i, t).expect("observed")).collect();
                match glm::fit_wls(&x, &y, &vec![1.0; observed.len()]) {
                    Ok(fit) => {
                        let dof = observed.len().saturating_sub(x.n_cols()).max(1);
                        break (fit.coefficients, (fit.objective / dof as f64).sqrt(), preds.clone());
                    }
                    Err(GlmError::RankDeficient { columns }) if !columns.iter().any(|c| c == INTERCEPT) => {
                        log::debug!("dropping collinear predictors {columns:?} for {target} at t={t}");
                        preds.retain(|(c, s)| !columns.contains(&label(c, *s)));
                    }
                    Err(source) => {
                        return Err(MissingError::Model {
                            column: target,
                            t,
                            source,
                        })
                    }
                }
            };
            let dist = Normal::new(0.0, sd.max(0.0)).expect("finite sd");
            let x_miss = design(&missing, &kept, &value);
            let fills: Vec<f64> = (0..missing.len())
                .map(|r| {
                    let mean = crate::linalg::dot(x_miss.row(r), &beta);
                    if noise {
                        mean + dist.sample(&mut rng)
                    } else {
                        mean
                    }
                })
                .collect();
            for (&i, v) in missing.iter().zip(fills) {
                work.fill(&target, i, t, v, CellState::Imputed)?;
            }
        }
    }
    Ok(work)
}

fn label(col: &str, s: Option<usize>) -> String {
    match s {
        Some(s) => format!("{col}@{s}"),
        None => col.to_string(),
    }
}

fn design(rows: &[usize], preds: &[(String, Option<usize>)], value: &dyn Fn(&str, usize, Option<usize>) -> f64) -> DesignMatrix<f64> {
    let p = preds.len() + 1;
    let mut data = Vec::with_capacity(rows.len() * p);
    for &i in rows {
        data.push(1.0);
        data.extend(preds.iter().map(|(c, s)| value(c, i, *s)));
    }
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(preds.iter().map(|(c, s)| label(c, *s)));
    DesignMatrix::new(names, Matrix::from_row_major(rows.len(), p, data).expect("sized")).expect("finite design")
}

/// Order-independent mean.
fn mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Elementwise mean of every coefficient across regimes.
pub fn pool_regimes(regimes: &[FittedRegime]) -> Result<FittedRegime, MissingError> {
    let first = regimes.first().ok_or_else(|| MissingError::Structure("no regimes".into()))?;
    for r in regimes {
        let same = r.method == first.method
            && r.weights == first.weights
            && r.visit_modifiers == first.visit_modifiers
            && r.addon_modifiers == first.addon_modifiers
            && r.stages.len() == first.stages.len()
            && r.stages.iter().zip(&first.stages).all(|(a, b)| {
                a.t == b.t
                    && a.beta_names == b.beta_names
                    && a.gamma.len() == b.gamma.len()
                    && a.gamma_star.len() == b.gamma_star.len()
            });
        if !same {
            return Err(MissingError::Structure("regimes differ in structure".into()));
        }
    }
    let pool = |pick: &dyn Fn(&StageFit) -> &Vec<f64>, k: usize| -> Vec<f64> {
        (0..pick(&first.stages[k]).len())
            .map(|j| mean(&mut regimes.iter().map(|r| pick(&r.stages[k])[j]).collect::<Vec<_>>()))
            .collect()
    };
    let stages = (0..first.stages.len())
        .map(|k| StageFit {
            t: first.stages[k].t,
            beta_names: first.stages[k].beta_names.clone(),
            beta: pool(&|s| &s.beta, k),
            gamma: pool(&|s| &s.gamma, k),
            gamma_star: pool(&|s| &s.gamma_star, k),
            n_obs: first.stages[k].n_obs,
            weighted_rss: mean(&mut regimes.iter().map(|r| r.stages[k].weighted_rss).collect::<Vec<_>>()),
        })
        .collect();
    Ok(FittedRegime {
        stages,
        imputations: regimes.iter().map(|r| r.imputations).sum(),
        ..first.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Method, TreatmentWeights};
    use crate::panel::{tests::small_cohort, StrategyCode};

    #[test]
    fn locf_series() {
        let v = StrategyCode::VISIT;
        let mut c = small_cohort(&[[v, v]]);
        c.mask("K1", 0, 1).unwrap();
        c.mask("K1", 0, 2).unwrap();
        let done = locf_complete(&c).unwrap();
        assert_eq!(done.value("K1", 0, 1), Some(0.0));
        assert_eq!(done.value("K1", 0, 2), Some(0.0));
        assert_eq!(done.cell("K1", 0, 2), Some(CellState::Carried));
        assert_eq!(done.value("K1", 0, 0), c.value("K1", 0, 0));
        let full = small_cohort(&[[v, v]]);
        assert_eq!(locf_complete(&full).unwrap(), full);
    }

    #[test]
    fn locf_without_baseline_errors() {
        let v = StrategyCode::VISIT;
        let mut c = small_cohort(&[[v, v], [v, v]]);
        c.mask("Y", 0, 0).unwrap();
        assert!(matches!(locf_complete(&c), Err(MissingError::LeadingMissing { .. })));
    }

    #[test]
    fn complete_cohort_imputes_to_copies() {
        let s = StrategyCode::ALL;
        let c = small_cohort(&[[s[0], s[1]], [s[1], s[2]], [s[2], s[0]]]);
        let cfg = ImputationConfig {
            m: 3,
            ..Default::default()
        };
        for d in sequential_impute(&c, &cfg).unwrap() {
            assert_eq!(d, c);
        }
    }

    fn regime(g0: f64) -> FittedRegime {
        FittedRegime {
            method: Method::Qloma,
            weights: TreatmentWeights::None,
            ipcw: false,
            visit_modifiers: vec![],
            addon_modifiers: vec![],
            stages: vec![StageFit {
                t: 1,
                beta_names: vec!["(Intercept)".into()],
                beta: vec![g0 * 3.0],
                gamma: vec![g0],
                gamma_star: vec![0.1],
                n_obs: 4,
                weighted_rss: 1.0,
            }],
            imputations: 1,
        }
    }

    #[test]
    fn pooling_means() {
        let p = pool_regimes(&[regime(0.0), regime(2.0)]).unwrap();
        assert_eq!(p.stages[0].gamma, vec![1.0]);
        assert_eq!(p.imputations, 2);
        let same = pool_regimes(&vec![regime(0.7); 5]).unwrap();
        assert_eq!(same.stages, regime(0.7).stages);
        let a = pool_regimes(&[regime(0.1), regime(0.2), regime(0.7)]).unwrap();
        let b = pool_regimes(&[regime(0.7), regime(0.1), regime(0.2)]).unwrap();
        assert_eq!(a, b);
        let mut odd = regime(1.0);
        odd.stages[0].t = 2;
        assert!(pool_regimes(&[regime(1.0), odd]).is_err());
    }
}

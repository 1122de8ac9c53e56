//! Longitudinal panel data: subjects observed on a discrete time grid
//! `0..=tau` with a three-way strategy at each decision time.

mod io;
mod terms;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_cohort, read_cohort, write_cohort, write_cohort_to, LoadReport};
pub use terms::{parse_terms, Factor, History, Term, TimeRef};

pub const VISIT: &str = "dN";
pub const ADDON: &str = "A";

/// Time-varying columns every cohort carries.
pub const CORE_COLUMNS: [&str; 5] = [VISIT, ADDON, "K1", "K2", "Y"];

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("duplicate row for id {id} at time {time}")]
    DuplicateRow { id: i64, time: usize },
    #[error("non-monotone censoring for id {id} at time {time}")]
    NonMonotoneCensoring { id: i64, time: usize },
    #[error("id {id}: {msg}")]
    Subject { id: i64, msg: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("malformed term {0:?}")]
    BadTerm(String),
    #[error("illegal strategy dN={visit}, A={addon}")]
    IllegalStrategy { visit: u8, addon: u8 },
    #[error("invalid cohort: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three-way action `(dN, A)` taken at a decision time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyCode {
    visit: bool,
    addon: bool,
}

impl StrategyCode {
    pub const NONE: Self = Self {
        visit: false,
        addon: false,
    };
    pub const VISIT: Self = Self {
        visit: true,
        addon: false,
    };
    pub const VISIT_ADDON: Self = Self {
        visit: true,
        addon: true,
    };
    pub const ALL: [Self; 3] = [Self::NONE, Self::VISIT, Self::VISIT_ADDON];

    pub fn new(visit: bool, addon: bool) -> Result<Self, PanelError> {
        if addon && !visit {
            return Err(PanelError::IllegalStrategy { visit: 0, addon: 1 });
        }
        Ok(Self { visit, addon })
    }

    pub fn visit(self) -> bool {
        self.visit
    }

    pub fn addon(self) -> bool {
        self.addon
    }

    /// Category index: 0 = (0,0), 1 = (1,0), 2 = (1,1).
    pub fn index(self) -> usize {
        usize::from(self.visit) + usize::from(self.addon)
    }

    pub fn from_index(k: usize) -> Option<Self> {
        Self::ALL.get(k).copied()
    }
}

impl fmt::Display for StrategyCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", u8::from(self.visit), u8::from(self.addon))
    }
}

/// State of one cell of a time-varying column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Observed,
    Missing,
    /// Filled by a model-based imputation.
    Imputed,
    /// Filled by carrying the last observation forward.
    Carried,
    /// Not part of the data: after censoring, or not defined at that time.
    Unavailable,
}

impl CellState {
    pub fn has_value(self) -> bool {
        matches!(self, CellState::Observed | CellState::Imputed | CellState::Carried)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Column {
    values: Vec<f64>,
    cells: Vec<CellState>,
}

/// Rectangular subject × time panel.
///
/// Subject `i` is in the study at times `0..=last_time(i)`, so `xi(t)` is
/// `t <= last_time(i)`. Cells after that are `Unavailable`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    ids: Vec<i64>,
    tau: usize,
    last_time: Vec<usize>,
    baseline: IndexMap<String, Vec<f64>>,
    columns: IndexMap<String, Column>,
    outcome: Vec<Option<f64>>,
}

/// Incremental constructor used by ingestion and simulation.
#[derive(Debug)]
pub struct CohortBuilder {
    tau: usize,
    baseline_names: Vec<String>,
    column_names: Vec<String>,
    ids: Vec<i64>,
    last_time: Vec<usize>,
    baseline: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    cells: Vec<Vec<CellState>>,
    outcome: Vec<Option<f64>>,
}

impl CohortBuilder {
    /// `columns` lists time-varying columns; the core columns are added
    /// first when absent.
    pub fn new(tau: usize, baseline: &[&str], columns: &[&str]) -> Self {
        let mut column_names: Vec<String> = CORE_COLUMNS.iter().map(|s| s.to_string()).collect();
        for c in columns {
            if !column_names.iter().any(|n| n == c) {
                column_names.push(c.to_string());
            }
        }
        let k = column_names.len();
        Self {
            tau,
            baseline_names: baseline.iter().map(|s| s.to_string()).collect(),
            column_names,
            ids: Vec::new(),
            last_time: Vec::new(),
            baseline: vec![Vec::new(); baseline.len()],
            values: vec![Vec::new(); k],
            cells: vec![Vec::new(); k],
            outcome: Vec::new(),
        }
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn with_capacity(mut self, n: usize) -> Self {
        let width = n * (self.tau + 1);
        for v in &mut self.values {
            v.reserve(width);
        }
        for c in &mut self.cells {
            c.reserve(width);
        }
        self
    }

    /// Add a subject. `rows[t][c]` is the value of column `c` at time `t`
    /// (`None` = missing) for `t <= last_time`.
    pub fn push(
        &mut self,
        id: i64,
        last_time: usize,
        baseline: &[f64],
        rows: &[Vec<Option<f64>>],
        outcome: Option<f64>,
    ) -> Result<(), PanelError> {
        if baseline.len() != self.baseline_names.len() || rows.len() != last_time + 1 || last_time > self.tau {
            return Err(PanelError::Subject {
                id,
                msg: "row shape does not match the cohort layout".into(),
            });
        }
        self.ids.push(id);
        self.last_time.push(last_time);
        for (b, &v) in self.baseline.iter_mut().zip(baseline) {
            b.push(v);
        }
        for t in 0..=self.tau {
            for c in 0..self.column_names.len() {
                let cell = rows.get(t).map(|r| r.get(c).copied().flatten());
                let (v, s) = match cell {
                    Some(Some(v)) => (v, CellState::Observed),
                    Some(None) => (0.0, CellState::Missing),
                    None => (0.0, CellState::Unavailable),
                };
                self.values[c].push(v);
                self.cells[c].push(s);
            }
        }
        self.outcome.push(outcome);
        Ok(())
    }

    /// A column/time at which no subject has a value is treated as not
    /// defined there (e.g. strategies at time 0) rather than missing.
    pub fn build(mut self) -> Result<Cohort, PanelError> {
        let width = self.tau + 1;
        for cells in &mut self.cells {
            for t in 0..width {
                if !cells.iter().skip(t).step_by(width).any(|c| c.has_value()) {
                    for c in cells.iter_mut().skip(t).step_by(width) {
                        *c = CellState::Unavailable;
                    }
                }
            }
        }
        let mut baseline = IndexMap::new();
        for (name, v) in self.baseline_names.into_iter().zip(self.baseline) {
            baseline.insert(name, v);
        }
        let mut columns = IndexMap::new();
        for ((name, values), cells) in self.column_names.into_iter().zip(self.values).zip(self.cells) {
            columns.insert(name, Column { values, cells });
        }
        let cohort = Cohort {
            ids: self.ids,
            tau: self.tau,
            last_time: self.last_time,
            baseline,
            columns,
            outcome: self.outcome,
        };
        cohort.check_structure()?;
        Ok(cohort)
    }
}

impl Cohort {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn last_time(&self, i: usize) -> usize {
        self.last_time[i]
    }

    /// Still-in-study indicator.
    pub fn xi(&self, i: usize, t: usize) -> bool {
        t <= self.last_time[i]
    }

    pub fn outcome(&self, i: usize) -> Option<f64> {
        self.outcome[i]
    }

    /// Decision times `1..tau`.
    pub fn decision_times(&self) -> std::ops::Range<usize> {
        1..self.tau
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn baseline_names(&self) -> impl Iterator<Item = &str> {
        self.baseline.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name) || self.baseline.contains_key(name)
    }

    fn idx(&self, i: usize, t: usize) -> usize {
        i * (self.tau + 1) + t
    }

    pub fn cell(&self, column: &str, i: usize, t: usize) -> Option<CellState> {
        let c = self.columns.get(column)?;
        if t > self.tau {
            return Some(CellState::Unavailable);
        }
        Some(c.cells[self.idx(i, t)])
    }

    /// Value of a time-varying or baseline column, `None` when the cell holds
    /// no value.
    pub fn value(&self, column: &str, i: usize, t: usize) -> Option<f64> {
        if let Some(b) = self.baseline.get(column) {
            return Some(b[i]);
        }
        let c = self.columns.get(column)?;
        if t > self.tau {
            return None;
        }
        let k = self.idx(i, t);
        c.cells[k].has_value().then(|| c.values[k])
    }

    pub fn strategy(&self, i: usize, t: usize) -> Option<StrategyCode> {
        let v = self.value(VISIT, i, t)?;
        let a = self.value(ADDON, i, t)?;
        StrategyCode::new(v != 0.0, a != 0.0).ok()
    }

    pub fn subject(&self, i: usize) -> SubjectView<'_> {
        SubjectView { cohort: self, i }
    }

    /// Replace the value of a missing cell. Observed cells are never touched.
    pub fn fill(&mut self, column: &str, i: usize, t: usize, value: f64, state: CellState) -> Result<(), PanelError> {
        let k = self.idx(i, t);
        let c = self
            .columns
            .get_mut(column)
            .ok_or_else(|| PanelError::UnknownColumn(column.to_string()))?;
        if c.cells[k] != CellState::Missing {
            return Err(PanelError::Invalid(format!(
                "cell ({column}, id {}, t={t}) is not missing",
                self.ids[i]
            )));
        }
        c.values[k] = value;
        c.cells[k] = state;
        Ok(())
    }

    /// Mark a cell as missing (used to impose a missingness mechanism).
    pub fn mask(&mut self, column: &str, i: usize, t: usize) -> Result<(), PanelError> {
        if column == VISIT || column == ADDON {
            return Err(PanelError::Invalid("strategy columns cannot be masked".into()));
        }
        let k = self.idx(i, t);
        let c = self
            .columns
            .get_mut(column)
            .ok_or_else(|| PanelError::UnknownColumn(column.to_string()))?;
        if c.cells[k] != CellState::Unavailable {
            c.cells[k] = CellState::Missing;
            c.values[k] = 0.0;
        }
        Ok(())
    }

    /// Censor subject `i` after time `last` (so `xi(last + 1) = 0`).
    pub fn censor_after(&mut self, i: usize, last: usize) {
        if last >= self.last_time[i] {
            return;
        }
        self.last_time[i] = last;
        for t in last + 1..=self.tau {
            let k = self.idx(i, t);
            for c in self.columns.values_mut() {
                c.cells[k] = CellState::Unavailable;
                c.values[k] = 0.0;
            }
        }
        self.outcome[i] = None;
    }

    /// Number of cells of `column` at time `t` in the given state.
    pub fn count_cells(&self, column: &str, t: usize, state: CellState) -> usize {
        (0..self.n())
            .filter(|&i| self.cell(column, i, t) == Some(state))
            .count()
    }

    /// Resolve a term for evaluation at a stage.
    pub fn resolve(&self, term: &Term, stage: usize) -> Result<ResolvedTerm, PanelError> {
        let mut factors = Vec::with_capacity(term.factors.len());
        for f in &term.factors {
            if let Some(b) = self.baseline.get_index_of(&f.column) {
                factors.push(ColumnRef::Baseline(b));
                continue;
            }
            let c = self
                .columns
                .get_index_of(&f.column)
                .ok_or_else(|| PanelError::UnknownColumn(f.column.clone()))?;
            let t = f
                .time
                .resolve(stage)
                .filter(|&t| t <= self.tau)
                .ok_or_else(|| PanelError::BadTerm(format!("{term} at stage {stage}")))?;
            factors.push(ColumnRef::Timed(c, t));
        }
        Ok(ResolvedTerm { factors })
    }

    pub fn eval(&self, term: &ResolvedTerm, i: usize) -> Option<f64> {
        let mut v = 1.0;
        for f in &term.factors {
            v *= match *f {
                ColumnRef::Baseline(b) => self.baseline[b][i],
                ColumnRef::Timed(c, t) => {
                    let col = &self.columns[c];
                    let k = self.idx(i, t);
                    if !col.cells[k].has_value() {
                        return None;
                    }
                    col.values[k]
                }
            };
        }
        Some(v)
    }

    fn check_structure(&self) -> Result<(), PanelError> {
        if self.tau < 2 {
            return Err(PanelError::Invalid("tau must be at least 2".into()));
        }
        for name in CORE_COLUMNS {
            if !self.columns.contains_key(name) {
                return Err(PanelError::Invalid(format!("missing core column {name}")));
            }
        }
        for i in 0..self.n() {
            let id = self.ids[i];
            for t in self.decision_times().filter(|&t| self.xi(i, t)) {
                let (Some(d), Some(a)) = (self.value(VISIT, i, t), self.value(ADDON, i, t)) else {
                    return Err(PanelError::Subject {
                        id,
                        msg: format!("strategy missing at decision time {t}"),
                    });
                };
                if !(d == 0.0 || d == 1.0) || !(a == 0.0 || a == 1.0) || a > d {
                    return Err(PanelError::Subject {
                        id,
                        msg: format!("illegal strategy dN={d}, A={a} at time {t}"),
                    });
                }
            }
            if self.outcome[i].is_some() != (self.last_time[i] == self.tau) {
                return Err(PanelError::Subject {
                    id,
                    msg: "final outcome must be present exactly when uncensored at tau".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnRef {
    Baseline(usize),
    Timed(usize, usize),
}

/// A term bound to cohort columns and absolute times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedTerm {
    factors: Vec<ColumnRef>,
}

/// One subject's trajectory as a [`History`].
#[derive(Debug, Clone, Copy)]
pub struct SubjectView<'a> {
    cohort: &'a Cohort,
    i: usize,
}

impl History for SubjectView<'_> {
    fn get(&self, column: &str, time: usize) -> Option<f64> {
        self.cohort.value(column, self.i, time)
    }
}

/// Names of the columns playing each modelling role.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColumnRoleMap {
    /// Confounders K(t) entering the propensity models.
    #[serde(default)]
    pub confounders: Vec<Term>,
    /// Covariates V(t) of the visit model when fitted separately.
    #[serde(default)]
    pub visit_covariates: Vec<Term>,
    /// Visit-blip modifiers Q_V(t).
    #[serde(default)]
    pub visit_modifiers: Vec<Term>,
    /// Add-on-blip modifiers Q_VA(t). May overlap with the visit modifiers.
    #[serde(default)]
    pub addon_modifiers: Vec<Term>,
    /// Treatment-free predictors h(t), per stage.
    #[serde(default)]
    pub treatment_free: BTreeMap<usize, Vec<Term>>,
}

impl ColumnRoleMap {
    /// Every referenced column must exist in the cohort.
    pub fn check(&self, cohort: &Cohort) -> Result<(), PanelError> {
        let all = self
            .confounders
            .iter()
            .chain(&self.visit_covariates)
            .chain(&self.visit_modifiers)
            .chain(&self.addon_modifiers)
            .chain(self.treatment_free.values().flatten());
        for term in all {
            for c in term.columns() {
                if !cohort.has_column(c) {
                    return Err(PanelError::UnknownColumn(c.to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Strategy counts at one decision time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeDiagnostics {
    pub t: usize,
    pub at_risk: usize,
    pub counts: [usize; 3],
    pub frequencies: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityWarning {
    pub t: usize,
    pub strategy: String,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub floor: f64,
    pub times: Vec<TimeDiagnostics>,
    pub warnings: Vec<PositivityWarning>,
    /// `(column, time, missing count)` for every column/time with gaps.
    pub missing: Vec<(String, usize, usize)>,
}

impl DiagnosticsReport {
    pub fn positivity_ok(&self) -> bool {
        self.warnings.is_empty()
    }
}

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 0.01;

/// Strategy frequencies per decision time with positivity warnings.
pub fn validate_cohort(cohort: &Cohort, floor: f64) -> DiagnosticsReport {
    let mut times = Vec::new();
    let mut warnings = Vec::new();
    for t in cohort.decision_times() {
        let mut counts = [0usize; 3];
        for i in 0..cohort.n() {
            if let Some(s) = cohort.xi(i, t).then(|| cohort.strategy(i, t)).flatten() {
                counts[s.index()] += 1;
            }
        }
        let at_risk: usize = counts.iter().sum();
        let frequencies = counts.map(|c| if at_risk > 0 { c as f64 / at_risk as f64 } else { 0.0 });
        for (k, &f) in frequencies.iter().enumerate() {
            if f < floor {
                warnings.push(PositivityWarning {
                    t,
                    strategy: StrategyCode::ALL[k].to_string(),
                    frequency: f,
                });
            }
        }
        times.push(TimeDiagnostics {
            t,
            at_risk,
            counts,
            frequencies,
        });
    }
    let mut missing = Vec::new();
    for name in cohort.column_names() {
        for t in 0..=cohort.tau() {
            let m = cohort.count_cells(name, t, CellState::Missing);
            if m > 0 {
                missing.push((name.to_string(), t, m));
            }
        }
    }
    DiagnosticsReport {
        floor,
        times,
        warnings,
        missing,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two-stage cohort with the given strategies at t = 1, 2.
    pub(crate) fn small_cohort(strategies: &[[StrategyCode; 2]]) -> Cohort {
        let mut b = CohortBuilder::new(3, &["A0"], &[]);
        for (i, s) in strategies.iter().enumerate() {
            let mut rows = Vec::new();
            for t in 0..=3 {
                let (d, a) = match t {
                    1 | 2 => (
                        Some(f64::from(u8::from(s[t - 1].visit()))),
                        Some(f64::from(u8::from(s[t - 1].addon()))),
                    ),
                    _ => (None, None),
                };
                let x = i as f64 + t as f64;
                rows.push(vec![d, a, Some(x), Some(2.0 * x), Some(100.0 + x)]);
            }
            b.push(i as i64 + 1, 3, &[(i % 2) as f64], &rows, Some(50.0 + i as f64)).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn strategy_codes() {
        assert!(StrategyCode::new(false, true).is_err());
        for (k, s) in StrategyCode::ALL.iter().enumerate() {
            assert_eq!(s.index(), k);
            assert_eq!(StrategyCode::from_index(k), Some(*s));
        }
        assert_eq!(StrategyCode::VISIT_ADDON.to_string(), "(1,1)");
    }

    #[test]
    fn positivity_warning_when_strategy_absent() {
        let n = StrategyCode::NONE;
        let v = StrategyCode::VISIT;
        let c = small_cohort(&[[n, n], [v, v], [StrategyCode::VISIT_ADDON, v]]);
        let before = c.clone();
        let rep = validate_cohort(&c, DEFAULT_POSITIVITY_FLOOR);
        assert_eq!(c, before);
        assert_eq!(rep.warnings.len(), 1);
        assert_eq!(rep.warnings[0].t, 2);
        assert_eq!(rep.warnings[0].strategy, "(1,1)");
    }

    #[test]
    fn balanced_cohort_has_no_warnings() {
        let all = StrategyCode::ALL;
        let c = small_cohort(&[[all[0], all[1]], [all[1], all[2]], [all[2], all[0]]]);
        let rep = validate_cohort(&c, DEFAULT_POSITIVITY_FLOOR);
        assert!(rep.positivity_ok());
        assert_eq!(rep.times[0].frequencies, [1.0 / 3.0; 3]);
    }

    #[test]
    fn censoring_clears_tail() {
        let v = StrategyCode::VISIT;
        let mut c = small_cohort(&[[v, v], [v, v]]);
        c.censor_after(0, 1);
        assert!(c.xi(0, 1) && !c.xi(0, 2));
        assert_eq!(c.value("K1", 0, 2), None);
        assert_eq!(c.cell("Y", 0, 3), Some(CellState::Unavailable));
        assert_eq!(c.outcome(0), None);
        assert!(c.outcome(1).is_some());
    }

    #[test]
    fn fill_only_touches_missing_cells() {
        let v = StrategyCode::VISIT;
        let mut c = small_cohort(&[[v, v]]);
        assert!(c.fill("K1", 0, 1, 3.0, CellState::Imputed).is_err());
        c.mask("K1", 0, 1).unwrap();
        assert_eq!(c.value("K1", 0, 1), None);
        c.fill("K1", 0, 1, 3.0, CellState::Imputed).unwrap();
        assert_eq!(c.value("K1", 0, 1), Some(3.0));
        assert!(c.mask("dN", 0, 1).is_err());
    }

    #[test]
    fn resolved_terms_match_history_evaluation() {
        let v = StrategyCode::VISIT_ADDON;
        let c = small_cohort(&[[v, StrategyCode::NONE], [StrategyCode::VISIT, v]]);
        for s in ["K1", "A0*Y@t-1", "dN@1*K2@2", "A@2*Y"] {
            let term: Term = s.parse().unwrap();
            let r = c.resolve(&term, 2).unwrap();
            for i in 0..c.n() {
                assert_eq!(c.eval(&r, i), term.eval(&c.subject(i), 2));
            }
        }
        assert!(c.resolve(&"Z".parse().unwrap(), 1).is_err());
    }

    #[test]
    fn role_map_rejects_unknown_columns() {
        let c = small_cohort(&[[StrategyCode::NONE; 2]]);
        let mut roles = ColumnRoleMap {
            visit_modifiers: parse_terms(&["K1", "Y"]).unwrap(),
            ..Default::default()
        };
        assert!(roles.check(&c).is_ok());
        roles.addon_modifiers = parse_terms(&["K9"]).unwrap();
        assert!(matches!(roles.check(&c), Err(PanelError::UnknownColumn(_))));
    }
}

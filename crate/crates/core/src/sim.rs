//! Two-decision simulation model for monitoring-and-add-on studies, with
//! missingness and censoring variants, counterfactual generation under a
//! policy and Monte Carlo value evaluation.
//!
//! Times run `0..=3`; decisions are taken at `t = 1, 2` and `Y(3)` is the
//! final outcome. Every subject draws from its own ChaCha stream, so the
//! output does not depend on thread scheduling, and the same uniforms and
//! normal deviates are consumed whatever a policy decides.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::panel::{Cohort, CohortBuilder, History, StrategyCode};

pub const TAU: usize = 3;

/// Visit-blip coefficients `(γ0, γK, γY)` of the final-outcome model.
pub const TRUE_GAMMA: [f64; 3] = [1.0, 1.0, 0.01];
/// Add-on-blip coefficients `(γ0*, γK*, γY*)`.
pub const TRUE_GAMMA_STAR: [f64; 3] = [1.5, -1.2, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Missingness {
    None,
    Mar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Censoring {
    None,
    TimeFixed,
    TimeDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Correct,
    Wrong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgmScenario {
    pub n: usize,
    pub seed: u64,
    pub missingness: Missingness,
    pub censoring: Censoring,
    pub outcome_model: ModelSpec,
    pub weight_model: ModelSpec,
}

impl DgmScenario {
    /// Presets: A (complete data), B (MAR modifiers), C (time-fixed
    /// censoring), D (time-dependent censoring).
    pub fn preset(name: &str, n: usize, seed: u64) -> Option<Self> {
        let (missingness, censoring) = match name.to_ascii_uppercase().as_str() {
            "A" => (Missingness::None, Censoring::None),
            "B" => (Missingness::Mar, Censoring::None),
            "C" => (Missingness::None, Censoring::TimeFixed),
            "D" => (Missingness::None, Censoring::TimeDependent),
            _ => return None,
        };
        Some(Self {
            n,
            seed,
            missingness,
            censoring,
            outcome_model: ModelSpec::Correct,
            weight_model: ModelSpec::Correct,
        })
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed, e.g. for replicate `r` of a study.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

const STREAM_GENERATE: u64 = 1;
const STREAM_CENSOR: u64 = 2;

fn subject_rng(seed: u64, domain: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(i as u64);
    rng
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A decision rule for the simulation. `None` keeps the natural
/// (observational) draw at that stage.
pub trait Policy: Sync {
    fn decide(&self, stage: usize, history: &dyn History) -> Option<StrategyCode>;
}

/// Follows the observational mechanism at every stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct Observational;

impl Policy for Observational {
    fn decide(&self, _: usize, _: &dyn History) -> Option<StrategyCode> {
        None
    }
}

/// Applies the same strategy at every stage.
#[derive(Debug, Clone, Copy)]
pub struct Static(pub StrategyCode);

impl Policy for Static {
    fn decide(&self, _: usize, _: &dyn History) -> Option<StrategyCode> {
        Some(self.0)
    }
}

/// Optimal stage-2 decision from the true blips of the outcome model.
/// Stage 1 follows `stage_one` (observational by default).
#[derive(Clone, Copy, Default)]
pub struct TrueStageTwo<P = Observational> {
    pub stage_one: P,
}

impl<P: Policy> Policy for TrueStageTwo<P> {
    fn decide(&self, stage: usize, h: &dyn History) -> Option<StrategyCode> {
        if stage == 2 {
            let k = h.get("K1", 2)?;
            let y = h.get("Y", 2)?;
            let bv = TRUE_GAMMA[0] + TRUE_GAMMA[1] * k + TRUE_GAMMA[2] * y;
            let bva = TRUE_GAMMA_STAR[0] + TRUE_GAMMA_STAR[1] * k + TRUE_GAMMA_STAR[2] * y;
            Some(crate::engine::decide(bv, bva))
        } else {
            self.stage_one.decide(stage, h)
        }
    }
}

/// Complete trajectory of one simulated subject.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Trajectory {
    pub a0: f64,
    pub k1: [f64; 3],
    pub k2: [f64; 3],
    pub y: [f64; 3],
    /// Visit indicators at t = 1, 2 (index 0 unused).
    pub dn: [f64; 3],
    pub a: [f64; 3],
    pub y_final: f64,
    /// Strategy decided so far is readable up to this time.
    known: usize,
    decided: usize,
}

impl History for Trajectory {
    fn get(&self, column: &str, time: usize) -> Option<f64> {
        if column == "A0" {
            return Some(self.a0);
        }
        if time > self.known.min(2) {
            return None;
        }
        match column {
            "K1" => Some(self.k1[time]),
            "K2" => Some(self.k2[time]),
            "Y" => Some(self.y[time]),
            "dN" if time >= 1 && time <= self.decided => Some(self.dn[time]),
            "A" if time == 0 => Some(self.a0),
            "A" if time <= self.decided => Some(self.a[time]),
            _ => None,
        }
    }
}

impl Trajectory {
    pub fn strategy(&self, t: usize) -> StrategyCode {
        StrategyCode::new(self.dn[t] == 1.0, self.a[t] == 1.0).expect("generator keeps A <= dN")
    }

    /// Mean of `Y(3)` given the history and both strategies.
    pub fn outcome_mean(&self) -> f64 {
        outcome_mean(self)
    }
}

fn outcome_mean(s: &Trajectory) -> f64 {
    let (a0, y0, k10, k20) = (s.a0, s.y[0], s.k1[0], s.k2[0]);
    let (k11, k21, y1, dn1, a1) = (s.k1[1], s.k2[1], s.y[1], s.dn[1], s.a[1]);
    let (k12, k22, y2, dn2, a2) = (s.k1[2], s.k2[2], s.y[2], s.dn[2], s.a[2]);
    let [g0, gk, gy] = TRUE_GAMMA;
    let [s0, sk, sy] = TRUE_GAMMA_STAR;
    134.0 + 0.05 * a0 - 0.005 * y0 + 0.02 * k10 - 0.6 * k20 + 0.02 * a0 * k10 + 0.004 * a0 * y0
        + 0.02 * y0 * k10
        + 0.02 * k11
        - 1.5 * k21
        - 1.4 * a1 * dn1
        - 0.005 * y1
        + 0.18 * k11 * dn1
        + 0.002 * dn1 * y1
        + 0.1 * a1 * dn1 * k11
        + 0.04 * a1 * dn1 * y1
        - 0.005 * y2
        + 0.02 * k12
        - 1.5 * k22
        + dn2 * (g0 + gk * k12 + gy * y2)
        + dn2 * a2 * (s0 + sk * k12 + sy * y2)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

/// Simulate one subject. The draw order is fixed so that every policy sees
/// the same random numbers.
pub fn simulate_subject(rng: &mut ChaCha8Rng, policy: &dyn Policy) -> Trajectory {
    let mut s = Trajectory::default();
    s.k1[0] = normal(rng, 4.0, 3.0);
    s.k2[0] = normal(rng, 5.0, 1.4);
    s.y[0] = normal(rng, 120.0, 13.0);
    s.a0 = f64::from(rng.random::<f64>() < 0.5);
    let (a0, y0, k10, k20) = (s.a0, s.y[0], s.k1[0], s.k2[0]);

    s.k1[1] = normal(rng, -23.0 + 0.8 * k10 + 0.2 * y0 + 0.1 * a0, 3.0);
    s.k2[1] = normal(rng, -43.0 + k20 + 0.2 * y0 - 0.1 * a0, 3.0);
    let base_y = 0.05 * a0 - 0.005 * y0 + 0.02 * k10 + 0.02 * a0 * k10 + 0.004 * a0 * y0 + 0.02 * y0 * k10;
    s.y[1] = normal(rng, 118.0 + base_y, 3.0);
    let (u, ua) = (rng.random::<f64>(), rng.random::<f64>());
    let p_dn = expit(-2.0 + 0.3 * k10 - 0.8 * k20 + 0.1 * a0 + 0.02 * y0);
    let p_a = expit(0.4 * k10 - 0.05 * k20 + 0.2 * a0 - 0.04 * y0);
    s.known = 1;
    let r1 = natural_or(policy, 1, &s, u < p_dn, ua < p_a);
    s.dn[1] = f64::from(u8::from(r1.visit()));
    s.a[1] = f64::from(u8::from(r1.addon()));
    s.decided = 1;

    let (k11, k21, y1, dn1, a1) = (s.k1[1], s.k2[1], s.y[1], s.dn[1], s.a[1]);
    s.k1[2] = normal(rng, -26.0 + 0.8 * k11 + 0.2 * y1 + 0.1 * a1 + 0.1 * dn1, 3.0);
    s.k2[2] = normal(rng, -43.0 + k21 + 0.2 * y1 + 0.1 * a1 - 0.1 * dn1, 3.0);
    // the constant -0.0005 and the unit K1(1)dN(1) coefficient are read literally
    let mu2 = 122.0 + base_y + 0.02 * k11 - 1.4 * a1 * dn1 - 0.0005 + k11 * dn1 + y1 + 0.002 * dn1 * y1
        + 0.1 * a1 * dn1 * k11
        + 0.04 * a1 * dn1 * y1;
    s.y[2] = normal(rng, mu2, 3.0);
    let (u, ua) = (rng.random::<f64>(), rng.random::<f64>());
    let p_dn = expit(-18.0 + 0.3 * k11 - 0.8 * k21 + 0.1 * a1 + 0.02 * y1);
    let p_a = expit(0.4 * k11 - 0.05 * k21 + 0.2 * a1 - 0.04 * y1);
    s.known = 2;
    let r2 = natural_or(policy, 2, &s, u < p_dn, ua < p_a);
    s.dn[2] = f64::from(u8::from(r2.visit()));
    s.a[2] = f64::from(u8::from(r2.addon()));
    s.decided = 2;

    s.y_final = normal(rng, outcome_mean(&s), 3.0);
    s
}

fn natural_or(policy: &dyn Policy, stage: usize, s: &Trajectory, visit: bool, addon: bool) -> StrategyCode {
    policy
        .decide(stage, s)
        .unwrap_or(StrategyCode::new(visit, visit && addon).expect("legal"))
}

/// Simulate `n` subjects under a policy; parallel, order-preserving.
pub fn simulate(n: usize, seed: u64, policy: &dyn Policy) -> Vec<Trajectory> {
    (0..n)
        .into_par_iter()
        .map(|i| simulate_subject(&mut subject_rng(seed, STREAM_GENERATE, i), policy))
        .collect()
}

pub fn to_cohort(trajectories: &[Trajectory]) -> Cohort {
    let mut b = CohortBuilder::new(TAU, &["A0"], &[]).with_capacity(trajectories.len());
    for (i, s) in trajectories.iter().enumerate() {
        let mut rows = Vec::with_capacity(TAU + 1);
        for t in 0..TAU {
            let (d, a) = if t == 0 {
                (None, None)
            } else {
                (Some(s.dn[t]), Some(s.a[t]))
            };
            rows.push(vec![d, a, Some(s.k1[t]), Some(s.k2[t]), Some(s.y[t])]);
        }
        rows.push(vec![None; 5]);
        b.push(i as i64 + 1, TAU, &[s.a0], &rows, Some(s.y_final))
            .expect("generator rows match the layout");
    }
    b.build().expect("generated cohort is valid")
}

/// Full-data cohort under the observational mechanism, then censoring and
/// missingness per the scenario.
pub fn generate_cohort(scenario: &DgmScenario) -> Cohort {
    generate_under_policy(scenario, &Observational)
}

pub fn generate_under_policy(scenario: &DgmScenario, policy: &dyn Policy) -> Cohort {
    let mut c = to_cohort(&simulate(scenario.n, scenario.seed, policy));
    apply_censoring(&mut c, scenario.censoring, scenario.seed);
    if scenario.missingness == Missingness::Mar {
        apply_mar_missingness(&mut c);
    }
    c
}

/// Remove the tailoring variables `K1(t)`, `Y(t)` wherever `dN(t) = 0`.
pub fn apply_mar_missingness(cohort: &mut Cohort) {
    for i in 0..cohort.n() {
        for t in cohort.decision_times() {
            if cohort.xi(i, t) && cohort.value("dN", i, t) == Some(0.0) {
                for col in ["K1", "Y"] {
                    cohort.mask(col, i, t).expect("core column");
                }
            }
        }
    }
}

fn cohort_value(c: &Cohort, col: &str, i: usize, t: usize) -> f64 {
    c.value(col, i, t).expect("censoring model inputs are observed")
}

/// Draw the censoring process. Time-fixed: leave after month 1 with
/// probability `p_c1`, otherwise after month 2 with probability `p_c2`, both
/// driven by baseline values. Time-dependent: at `t = 1, 2` leave with hazard
/// `expit(10 - 0.2 A(t) - 0.1 Y(t) + 0.1 K1(t))`.
pub fn apply_censoring(cohort: &mut Cohort, mode: Censoring, seed: u64) {
    if mode == Censoring::None {
        return;
    }
    let lasts: Vec<usize> = (0..cohort.n())
        .map(|i| {
            let mut rng = subject_rng(seed, STREAM_CENSOR, i);
            let (u1, u2) = (rng.random::<f64>(), rng.random::<f64>());
            let c: &Cohort = cohort;
            match mode {
                Censoring::TimeFixed => {
                    let a0 = cohort_value(c, "A0", i, 0);
                    let y0 = cohort_value(c, "Y", i, 0);
                    let k10 = cohort_value(c, "K1", i, 0);
                    if u1 < expit(10.0 - 0.2 * a0 - 0.1 * y0 + 0.1 * k10) {
                        1
                    } else if u2 < expit(8.0 + 0.2 * a0 - 0.1 * y0 + 0.2 * k10) {
                        2
                    } else {
                        TAU
                    }
                }
                Censoring::TimeDependent => {
                    let hazard = |t: usize| {
                        expit(
                            10.0 - 0.2 * cohort_value(c, "A", i, t) - 0.1 * cohort_value(c, "Y", i, t)
                                + 0.1 * cohort_value(c, "K1", i, t),
                        )
                    };
                    if u1 < hazard(1) {
                        1
                    } else if u2 < hazard(2) {
                        2
                    } else {
                        TAU
                    }
                }
                Censoring::None => TAU,
            }
        })
        .collect();
    for (i, last) in lasts.into_iter().enumerate() {
        cohort.censor_after(i, last);
    }
}

/// Fraction of subjects without the final outcome.
pub fn censoring_proportion(cohort: &Cohort) -> f64 {
    let censored = (0..cohort.n()).filter(|&i| cohort.outcome(i).is_none()).count();
    censored as f64 / cohort.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    /// Monte Carlo standard error of the mean.
    pub se: f64,
    pub n: usize,
}

/// Mean final outcome of a fresh full-data population following `policy`.
pub fn value_function(policy: &dyn Policy, n_eval: usize, seed: u64) -> ValueEstimate {
    let ys: Vec<f64> = simulate(n_eval, seed, policy).iter().map(|s| s.y_final).collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    ValueEstimate {
        mean,
        se: (var / n).sqrt(),
        n: n_eval,
    }
}

/// Observational cohorts share random numbers with every policy at the same
/// seed, so value differences are paired.
pub fn paired_difference(a: &dyn Policy, b: &dyn Policy, n_eval: usize, seed: u64) -> ValueEstimate {
    let ya = simulate(n_eval, seed, a);
    let yb = simulate(n_eval, seed, b);
    let d: Vec<f64> = ya.iter().zip(&yb).map(|(x, y)| x.y_final - y.y_final).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    ValueEstimate {
        mean,
        se: (var / n).sqrt(),
        n: n_eval,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::CellState;

    #[test]
    fn same_seed_same_cohort() {
        let sc = DgmScenario::preset("A", 300, 11).unwrap();
        assert_eq!(generate_cohort(&sc), generate_cohort(&sc));
        let other = DgmScenario { seed: 12, ..sc.clone() };
        assert_ne!(generate_cohort(&sc), generate_cohort(&other));
    }

    #[test]
    fn parallel_matches_sequential() {
        let par = simulate(200, 5, &Observational);
        let seq: Vec<Trajectory> = (0..200)
            .map(|i| simulate_subject(&mut subject_rng(5, STREAM_GENERATE, i), &Observational))
            .collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn addon_requires_visit() {
        for s in simulate(2000, 3, &Observational) {
            for t in 1..=2 {
                assert!(s.a[t] <= s.dn[t]);
            }
        }
    }

    #[test]
    fn policy_changes_only_downstream_values() {
        let obs = simulate(50, 9, &Observational);
        let all = simulate(50, 9, &Static(StrategyCode::VISIT_ADDON));
        for (o, p) in obs.iter().zip(&all) {
            assert_eq!(o.k1[..2], p.k1[..2]);
            assert_eq!(o.y[..2], p.y[..2]);
            assert_eq!(p.strategy(1), StrategyCode::VISIT_ADDON);
        }
    }

    #[test]
    fn outcome_blips_match_true_parameters() {
        let mut s = simulate(1, 1, &Observational)[0];
        s.dn[2] = 0.0;
        s.a[2] = 0.0;
        let base = s.outcome_mean();
        s.dn[2] = 1.0;
        let visit = s.outcome_mean() - base;
        s.a[2] = 1.0;
        let addon = s.outcome_mean() - base - visit;
        let (k, y) = (s.k1[2], s.y[2]);
        assert!((visit - (1.0 + k + 0.01 * y)).abs() < 1e-9);
        assert!((addon - (1.5 - 1.2 * k + 0.01 * y)).abs() < 1e-9);
    }

    #[test]
    fn mar_masks_exactly_non_visits() {
        let sc = DgmScenario::preset("B", 2000, 4).unwrap();
        let c = generate_cohort(&sc);
        for t in 1..=2 {
            let non_visits = (0..c.n()).filter(|&i| c.value("dN", i, t) == Some(0.0)).count();
            assert_eq!(c.count_cells("K1", t, CellState::Missing), non_visits);
            assert_eq!(c.count_cells("Y", t, CellState::Missing), non_visits);
        }
        assert_eq!(c.count_cells("Y", 0, CellState::Missing), 0);
    }

    #[test]
    fn no_censoring_keeps_everyone() {
        let c = generate_cohort(&DgmScenario::preset("A", 500, 2).unwrap());
        assert!((0..c.n()).all(|i| c.xi(i, TAU)));
        assert_eq!(censoring_proportion(&c), 0.0);
    }

    #[test]
    fn trajectory_history_hides_future() {
        let mut s = simulate(1, 8, &Observational)[0];
        s.known = 1;
        s.decided = 0;
        assert!(s.get("K1", 1).is_some());
        assert!(s.get("K1", 2).is_none());
        assert!(s.get("dN", 1).is_none());
    }
}

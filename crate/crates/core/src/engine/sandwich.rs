//! Sandwich covariance for a single weighted stage regression whose weights
//! come from an estimated multinomial propensity model.
//!
//! Stacking the regression equations `g` with the propensity score `m`, the
//! influence of subject `i` is `g_i - G_φ M⁻¹ m_i`, and
//! `Σ = G_γ⁻¹ E[(g - G_φ M⁻¹ m)⊗²] G_γ⁻¹`.

use crate::glm::{multinomial_information, softmax_row};
use crate::linalg::{self, Matrix};
use crate::panel::{Cohort, StrategyCode};
use crate::weights::{covariate_design, ipt_weight, overlap_weight, PropensityEstimates, PropensitySource};

use super::{stage_design, stage_rows, BlipSpec, EngineError, StageFit, TreatmentWeights};

const RELATIVE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichVariance {
    /// Asymptotic covariance of `√n (θ̂ - θ)`.
    pub sigma: Matrix<f64>,
    /// Number of subjects the averages run over.
    pub n: usize,
    pub names: Vec<String>,
}

impl SandwichVariance {
    /// Covariance of the coefficient estimates, `Σ / n`.
    pub fn covariance(&self) -> Matrix<f64> {
        self.sigma.scale(1.0 / self.n as f64)
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        self.covariance().diagonal().into_iter().map(f64::sqrt).collect()
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.sigma[(j, j)] / self.n as f64).sqrt())
    }
}

/// One-stage sandwich variance. `propensity` must hold the joint multinomial
/// model used for the weights unless `kind` is `None`; `ipcw` multiplies the
/// weights as a fixed factor.
pub fn sandwich_variance_one_stage(
    cohort: &Cohort,
    fit: &StageFit,
    spec: &BlipSpec,
    propensity: Option<&PropensityEstimates>,
    kind: TreatmentWeights,
    ipcw: Option<&[f64]>,
) -> Result<SandwichVariance, EngineError> {
    let t = fit.t;
    if spec.stages.len() != 1 || spec.stages[0] != t {
        return Err(EngineError::Spec("sandwich variance needs a single-stage specification".into()));
    }
    let at_risk: Vec<usize> = (0..cohort.n()).filter(|&i| cohort.xi(i, t)).collect();
    let completers = stage_rows(cohort);
    let x = stage_design(cohort, t, spec, &completers)?;
    let p = x.n_cols();
    let theta = fit.coefficients();
    if theta.len() != p {
        return Err(EngineError::Dimension("stage fit does not match the specification".into()));
    }
    let resid: Vec<f64> = completers
        .iter()
        .enumerate()
        .map(|(r, &i)| cohort.outcome(i).expect("completer") - linalg::dot(x.row(r), &theta))
        .collect();
    let censor = |i: usize| ipcw.map_or(1.0, |c| c[i]);
    let n = at_risk.len();
    let nf = n as f64;

    // propensity pieces
    let prop = match kind {
        TreatmentWeights::None => None,
        TreatmentWeights::Overlap | TreatmentWeights::Ipt => {
            let e = propensity.ok_or_else(|| EngineError::Spec("weights need a propensity model".into()))?;
            if e.source != PropensitySource::Joint || e.models.len() != 1 {
                return Err(EngineError::Spec("sandwich variance needs the joint multinomial model".into()));
            }
            let z = covariate_design(cohort, t, &e.covariates, &at_risk)?;
            Some((e.models[0].coefficients.clone(), z))
        }
    };
    let mut pos = vec![usize::MAX; cohort.n()];
    for (r, &i) in at_risk.iter().enumerate() {
        pos[i] = r;
    }
    let received: Vec<usize> = completers
        .iter()
        .map(|&i| cohort.strategy(i, t).map(StrategyCode::index).unwrap_or(0))
        .collect();
    let weight_at = |phi: Option<&[f64]>, r: usize| -> f64 {
        let i = completers[r];
        let tw = match (phi, &prop) {
            (Some(phi), Some((_, z))) => {
                let pr = softmax_row(phi, z.row(pos[i]), 3);
                let e = [pr[0], pr[1], pr[2]];
                match kind {
                    TreatmentWeights::Overlap => overlap_weight(e, received[r]),
                    _ => ipt_weight(e, received[r]),
                }
            }
            _ => 1.0,
        };
        tw * censor(i)
    };
    let phi_hat = prop.as_ref().map(|(c, _)| c.clone());
    let w: Vec<f64> = (0..completers.len()).map(|r| weight_at(phi_hat.as_deref(), r)).collect();

    // G_γ = -E[w x x']
    let mut g_gamma = Matrix::zeros(p, p);
    for (r, &wr) in w.iter().enumerate() {
        let row = x.row(r);
        for a in 0..p {
            for b in 0..p {
                g_gamma[(a, b)] -= wr * row[a] * row[b] / nf;
            }
        }
    }
    let mean_g = |phi: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; p];
        for r in 0..completers.len() {
            let c = weight_at(Some(phi), r) * resid[r] / nf;
            for (gj, &xv) in g.iter_mut().zip(x.row(r)) {
                *gj += c * xv;
            }
        }
        g
    };

    // per-subject influence rows over everyone at risk
    let mut psi = Matrix::zeros(n, p);
    for (r, &i) in completers.iter().enumerate() {
        for (a, &xv) in x.row(r).iter().enumerate() {
            psi[(pos[i], a)] = w[r] * resid[r] * xv;
        }
    }
    if let Some((phi, z)) = &prop {
        let d = phi.len();
        let mut g_phi = Matrix::zeros(p, d);
        for j in 0..d {
            let h = RELATIVE_STEP * phi[j].abs().max(1.0);
            let mut up = phi.clone();
            let mut dn = phi.clone();
            up[j] += h;
            dn[j] -= h;
            let (gu, gd) = (mean_g(&up), mean_g(&dn));
            for a in 0..p {
                g_phi[(a, j)] = (gu[a] - gd[a]) / (2.0 * h);
            }
        }
        // M = -information / n
        let m_mat = multinomial_information(z, 3, phi).scale(-1.0 / nf);
        let a_mat = g_phi.matmul(&linalg::inverse(&m_mat)?)?;
        let all_codes: Vec<usize> = at_risk
            .iter()
            .map(|&i| cohort.strategy(i, t).map(StrategyCode::index).unwrap_or(0))
            .collect();
        let q = z.n_cols();
        for r in 0..n {
            let zr = z.row(r);
            let pr = softmax_row(phi, zr, 3);
            let mut score = vec![0.0; d];
            for k in 1..3 {
                let resk = f64::from(u8::from(all_codes[r] == k)) - pr[k];
                for b in 0..q {
                    score[(k - 1) * q + b] = resk * zr[b];
                }
            }
            let adj = a_mat.matvec(&score);
            for a in 0..p {
                psi[(r, a)] -= adj[a];
            }
        }
    }
    let mut meat = Matrix::zeros(p, p);
    for r in 0..n {
        let row = psi.row(r);
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] += row[a] * row[b] / nf;
            }
        }
    }
    let bread = linalg::inverse(&g_gamma).map_err(|_| EngineError::Spec("singular G_gamma".into()))?;
    let mut sigma = bread.matmul(&meat)?.matmul(&bread.transpose())?;
    sigma.symmetrize();
    Ok(SandwichVariance {
        sigma,
        n,
        names: x.names().to_vec(),
    })
}

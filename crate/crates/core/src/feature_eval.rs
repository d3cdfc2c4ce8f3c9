//! Policy evaluation using only a learned feature model, value errors against
//! exact evaluation, and the approximate-model-features error bound.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{inf_norm, left_pseudo_inverse, vec_inf_norm};
use crate::mdp::{evaluate_policy_exact, Policy, PolicyKind, TabularMdp, EVAL_TOL};
use crate::successor::{sf_norm_check, FeatureModel};

pub const FEATURE_EVAL_TOL: f64 = 1e-9;
pub const FEATURE_EVAL_MAX_ITER: usize = 100_000;

/// Output of feature-space policy evaluation.
#[derive(Debug, Clone)]
pub struct FeatureValues {
    /// Φv_φ^π over ground states.
    pub lifted: DVector<f64>,
    /// v_φ^π over features.
    pub feature_values: DVector<f64>,
    /// q_φ^a over features.
    pub feature_action_values: Vec<DVector<f64>>,
    pub iterations: usize,
    /// Numerical column rank of Φ; below n the pseudo-inverse is minimum-norm.
    pub phi_rank: usize,
}

/// Iterates q_φ^a ← r_φ^a + γP_φ^av_φ and v_φ ← Φ⁺Σ_aΠ^aΦq_φ^a until the
/// change in v_φ is at most `tol` in max-norm.
pub fn feature_policy_evaluation(
    phi: &DMatrix<f64>,
    model: &FeatureModel,
    pi: &Policy,
    tol: f64,
    max_iter: usize,
) -> Result<FeatureValues> {
    let transitions = model
        .transitions()
        .ok_or_else(|| Error::Argument("feature transitions could not be recovered".into()))?;
    let n = model.num_features();
    if phi.ncols() != n {
        return Err(dim_err(format!(
            "Φ has {} columns for {n} features",
            phi.ncols()
        )));
    }
    if pi.num_states() != phi.nrows() || pi.num_actions() != model.num_actions() {
        return Err(dim_err("policy does not match Φ and feature model"));
    }
    let (pinv, phi_rank) = left_pseudo_inverse(phi);
    if phi_rank < n {
        debug!("Φ has column rank {phi_rank} < {n}; using minimum-norm pseudo-inverse");
    }
    // Φ⁺Π^aΦ per action, so each sweep stays in feature space.
    let mixers: Vec<DMatrix<f64>> = (0..model.num_actions())
        .map(|a| {
            let w = pi.action_weights(a);
            let weighted = DMatrix::from_fn(phi.nrows(), n, |s, j| w[s] * phi[(s, j)]);
            &pinv * weighted
        })
        .collect();
    let gamma = model.gamma();
    let rewards = model.feature_rewards();

    let mut v = DVector::zeros(n);
    let mut delta = f64::INFINITY;
    for it in 1..=max_iter {
        let q: Vec<DVector<f64>> = rewards
            .iter()
            .zip(transitions)
            .map(|(r, p)| r + gamma * (p * &v))
            .collect();
        let mut next = DVector::zeros(n);
        for (mix, qa) in mixers.iter().zip(&q) {
            next += mix * qa;
        }
        delta = (&next - &v).amax();
        v = next;
        if !delta.is_finite() {
            break;
        }
        if delta <= tol {
            let q = rewards
                .iter()
                .zip(transitions)
                .map(|(r, p)| r + gamma * (p * &v))
                .collect();
            return Ok(FeatureValues {
                lifted: phi * &v,
                feature_values: v,
                feature_action_values: q,
                iterations: it,
                phi_rank,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_delta: delta,
        last_iterate: v.iter().copied().collect(),
    })
}

/// (ε_r, ε_ψ): max over actions of ‖Φr_φ^a − r^a‖_∞ and
/// ‖Φ + γP^aΦF^π̄ − ΦF^a‖_∞.
pub fn epsilons(phi: &DMatrix<f64>, model: &FeatureModel, mdp: &TabularMdp) -> Result<(f64, f64)> {
    if phi.nrows() != mdp.num_states()
        || phi.ncols() != model.num_features()
        || model.num_actions() != mdp.num_actions()
    {
        return Err(dim_err("Φ, feature model and MDP disagree"));
    }
    let gamma = mdp.discount();
    let f_bar = model.exploratory_sf();
    let mut eps_r: f64 = 0.0;
    let mut eps_psi: f64 = 0.0;
    for a in 0..mdp.num_actions() {
        let er = phi * &model.feature_rewards()[a] - mdp.reward(a);
        eps_r = eps_r.max(vec_inf_norm(&er));
        let res = phi + gamma * (mdp.transition(a) * phi * f_bar) - phi * &model.feature_sf()[a];
        eps_psi = eps_psi.max(inf_norm(&res));
    }
    Ok((eps_r, eps_psi))
}

/// ε_r/(1−γ) + ε_ψ(1+γ)‖r_φ‖_∞/(1−γ)², without checking the norm condition.
pub fn bound_formula(eps_r: f64, eps_psi: f64, reward_norm: f64, gamma: f64) -> f64 {
    let c = 1.0 - gamma;
    eps_r / c + eps_psi * (1.0 + gamma) * reward_norm / (c * c)
}

/// The value-error bound, valid only when every ‖P_φ^a‖_∞ ≤ 1.
pub fn theorem2_bound(
    eps_r: f64,
    eps_psi: f64,
    reward_norm: f64,
    gamma: f64,
    sf_norms: &[f64],
) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("discount {gamma} not in [0, 1)")));
    }
    if eps_r < 0.0 || eps_psi < 0.0 || reward_norm < 0.0 {
        return Err(Error::Argument("bound inputs must be nonnegative".into()));
    }
    let max_norm = sf_norms.iter().cloned().fold(0.0, f64::max);
    if sf_norms.is_empty()
        || max_norm > 1.0 + crate::successor::SF_NORM_SLACK
        || !max_norm.is_finite()
    {
        return Err(Error::BoundInvalid { max_norm });
    }
    Ok(bound_formula(eps_r, eps_psi, reward_norm, gamma))
}

/// Per-policy evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: PolicyKind,
    /// ‖Φv_φ^π − v^π‖_∞, absent when feature evaluation did not converge.
    pub value_error: Option<f64>,
    /// max_a ‖Φq_φ^a − q^a‖_∞.
    pub action_value_error: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policies: Vec<PolicyReport>,
    pub eps_r: f64,
    pub eps_psi: f64,
    pub reward_norm: f64,
    /// Present only when every feature transition norm is at most one.
    pub bound: Option<f64>,
    pub bound_invalid: bool,
    pub sf_norms: Vec<f64>,
}

impl EvalReport {
    pub fn value_error(&self, kind: PolicyKind) -> Option<f64> {
        self.policies
            .iter()
            .find(|p| p.policy == kind)
            .and_then(|p| p.value_error)
    }

    pub fn max_value_error(&self) -> Option<f64> {
        self.policies
            .iter()
            .map(|p| p.value_error)
            .try_fold(0.0, |acc: f64, e| e.map(|e| acc.max(e)))
    }

    pub const CSV_HEADER: &'static str =
        "policy,value_error,action_value_error,converged,eps_r,eps_psi,reward_norm,bound,bound_invalid";

    /// One CSV row per policy, matching [`Self::CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        self.policies
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{:e},{:e},{:e},{},{}",
                    p.policy.name(),
                    opt(p.value_error),
                    opt(p.action_value_error),
                    p.converged,
                    self.eps_r,
                    self.eps_psi,
                    self.reward_norm,
                    opt(self.bound),
                    self.bound_invalid
                )
            })
            .collect()
    }
}

/// Feature evaluation and exact evaluation for each policy, plus the bound.
pub fn evaluate_all(
    phi: &DMatrix<f64>,
    model: &FeatureModel,
    mdp: &TabularMdp,
    policies: &[(PolicyKind, Policy)],
) -> Result<EvalReport> {
    let (eps_r, eps_psi) = epsilons(phi, model, mdp)?;
    let reward_norm = model.reward_norm();
    let sf_norms = model
        .transitions()
        .map(|t| sf_norm_check(t).norms)
        .unwrap_or_default();
    let bound = theorem2_bound(eps_r, eps_psi, reward_norm, mdp.discount(), &sf_norms).ok();

    let mut reports = Vec::with_capacity(policies.len());
    for (kind, pi) in policies {
        let exact = evaluate_policy_exact(mdp, pi, EVAL_TOL)?;
        let report = match feature_policy_evaluation(
            phi,
            model,
            pi,
            FEATURE_EVAL_TOL,
            FEATURE_EVAL_MAX_ITER,
        ) {
            Ok(fv) => {
                let value_error = vec_inf_norm(&(&fv.lifted - &exact.state_values));
                let action_value_error = fv
                    .feature_action_values
                    .iter()
                    .zip(&exact.action_values)
                    .map(|(qf, q)| vec_inf_norm(&(phi * qf - q)))
                    .fold(0.0, f64::max);
                PolicyReport {
                    policy: *kind,
                    value_error: Some(value_error),
                    action_value_error: Some(action_value_error),
                    converged: true,
                }
            }
            Err(Error::NonConvergence { .. }) | Err(Error::Argument(_)) => PolicyReport {
                policy: *kind,
                value_error: None,
                action_value_error: None,
                converged: false,
            },
            Err(e) => return Err(e),
        };
        reports.push(report);
    }
    Ok(EvalReport {
        policies: reports,
        eps_r,
        eps_psi,
        reward_norm,
        bound_invalid: bound.is_none(),
        bound,
        sf_norms,
    })
}

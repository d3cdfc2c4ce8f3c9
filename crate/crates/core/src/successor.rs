//! Successor representations over states and successor features over
//! feature clusters, plus recovery of feature-to-feature transitions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::abstraction::{abstract_policy, PartitionMatrix, WeightMatrix};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{checked_inverse, inf_norm, solve};
use crate::mdp::{mix_policy, Policy, TabularMdp};

/// Condition estimate above which F^π̄ is treated as singular.
pub const MAX_SF_CONDITION: f64 = 1e12;

/// Slack allowed on ‖P_φ^a‖_∞ ≤ 1.
pub const SF_NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SuccessorRepresentation {
    /// Ψ_SR^π = (I − γP^π)⁻¹
    pub policy_sr: DMatrix<f64>,
    /// Ψ_SR^a = I + γP^aΨ_SR^π
    pub action_sr: Vec<DMatrix<f64>>,
}

pub fn successor_representation(mdp: &TabularMdp, pi: &Policy) -> Result<SuccessorRepresentation> {
    let (p_pi, _) = mix_policy(mdp, pi)?;
    let ns = mdp.num_states();
    let gamma = mdp.discount();
    let id = DMatrix::<f64>::identity(ns, ns);
    let policy_sr = solve(&(&id - gamma * p_pi), &id)?;
    let action_sr = mdp
        .transitions()
        .iter()
        .map(|p| &id + gamma * (p * &policy_sr))
        .collect();
    Ok(SuccessorRepresentation {
        policy_sr,
        action_sr,
    })
}

/// Feature-space reward and successor-feature model.
///
/// The exploratory SF F^π̄ is always the uniform average of the per-action
/// F^a, and the feature transitions P_φ^a are recovered from them when F^π̄
/// is invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureModelFile", into = "FeatureModelFile")]
pub struct FeatureModel {
    gamma: f64,
    feature_rewards: Vec<DVector<f64>>,
    feature_sf: Vec<DMatrix<f64>>,
    exploratory_sf: DMatrix<f64>,
    transitions: Option<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureModelFile {
    n: usize,
    gamma: f64,
    feature_rewards: Vec<Vec<f64>>,
    feature_sf: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<FeatureModelFile> for FeatureModel {
    type Error = Error;

    fn try_from(file: FeatureModelFile) -> Result<Self> {
        let n = file.n;
        let rewards = file
            .feature_rewards
            .iter()
            .map(|r| {
                if r.len() != n {
                    return Err(Error::Format(format!(
                        "feature reward of length {}, expected {n}",
                        r.len()
                    )));
                }
                Ok(DVector::from_column_slice(r))
            })
            .collect::<Result<Vec<_>>>()?;
        let sf = file
            .feature_sf
            .iter()
            .map(|m| {
                if m.len() != n || m.iter().any(|row| row.len() != n) {
                    return Err(Error::Format(format!("SF matrix is not {n}x{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureModel::new(file.gamma, rewards, sf)
    }
}

impl From<FeatureModel> for FeatureModelFile {
    fn from(m: FeatureModel) -> Self {
        FeatureModelFile {
            n: m.num_features(),
            gamma: m.gamma,
            feature_rewards: m
                .feature_rewards
                .iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            feature_sf: m
                .feature_sf
                .iter()
                .map(|f| {
                    f.row_iter()
                        .map(|row| row.iter().copied().collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl FeatureModel {
    pub fn new(
        gamma: f64,
        feature_rewards: Vec<DVector<f64>>,
        feature_sf: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if feature_sf.is_empty() || feature_sf.len() != feature_rewards.len() {
            return Err(dim_err(
                "need one reward vector and one SF matrix per action",
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Argument(format!("discount {gamma} not in [0, 1)")));
        }
        let n = feature_sf[0].nrows();
        if n == 0 {
            return Err(dim_err("feature model with zero features"));
        }
        for (f, r) in feature_sf.iter().zip(&feature_rewards) {
            if f.shape() != (n, n) || r.len() != n {
                return Err(dim_err(format!("expected {n} features in every action")));
            }
            if f.iter().chain(r.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Argument("non-finite feature model entry".into()));
            }
        }
        let exploratory_sf = average(&feature_sf);
        let mut model = Self {
            gamma,
            feature_rewards,
            feature_sf,
            exploratory_sf,
            transitions: None,
        };
        model.transitions = recover_feature_transitions(&model).ok();
        Ok(model)
    }

    pub fn num_features(&self) -> usize {
        self.exploratory_sf.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.feature_sf.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn feature_rewards(&self) -> &[DVector<f64>] {
        &self.feature_rewards
    }

    pub fn feature_sf(&self) -> &[DMatrix<f64>] {
        &self.feature_sf
    }

    pub fn exploratory_sf(&self) -> &DMatrix<f64> {
        &self.exploratory_sf
    }

    /// Recovered P_φ^a, if F^π̄ was invertible and γ > 0.
    pub fn transitions(&self) -> Option<&[DMatrix<f64>]> {
        self.transitions.as_deref()
    }

    /// ‖r_φ‖_∞ = max_a ‖r_φ^a‖_∞.
    pub fn reward_norm(&self) -> f64 {
        self.feature_rewards
            .iter()
            .map(|r| r.amax())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn average(ms: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(ms[0].nrows(), ms[0].ncols());
    for m in ms {
        acc += m;
    }
    acc / ms.len() as f64
}

/// Exact feature model of a partition: r_φ^a = Ωr^a, P_φ^a = ΩP^aΦ,
/// F^π̄ = (I − γP_φ^π̄)⁻¹ and F^a = I + γP_φ^aF^π̄.
///
/// The exploratory policy must be uniform so that F^π̄ coincides with the
/// average of the F^a.
pub fn exact_feature_model(
    mdp: &TabularMdp,
    phi: &PartitionMatrix,
    omega: &WeightMatrix,
    pibar: &Policy,
) -> Result<FeatureModel> {
    let abs = crate::abstraction::build_abstract_mdp(mdp, phi, omega)?;
    let partition = phi.to_partition();
    let pibar_abs = abstract_policy(pibar, &partition)?;
    let na = mdp.num_actions() as f64;
    if pibar_abs
        .probs()
        .iter()
        .any(|&p| (p - 1.0 / na).abs() > 1e-12)
    {
        return Err(Error::Argument("exploratory policy must be uniform".into()));
    }
    let m = partition.num_clusters();
    let gamma = mdp.discount();
    let id = DMatrix::<f64>::identity(m, m);
    let (p_bar, _) = mix_policy(&abs, &pibar_abs)?;
    let f_bar = solve(&(&id - gamma * p_bar), &id)?;
    let sf = abs
        .transitions()
        .iter()
        .map(|p| &id + gamma * (p * &f_bar))
        .collect();
    FeatureModel::new(gamma, abs.rewards().to_vec(), sf)
}

/// P_φ^a = (F^a − I)[F^π̄]⁻¹ / γ for every action.
pub fn recover_feature_transitions(model: &FeatureModel) -> Result<Vec<DMatrix<f64>>> {
    if model.gamma == 0.0 {
        return Err(Error::Argument(
            "cannot recover transitions with zero discount".into(),
        ));
    }
    let inv = checked_inverse(&model.exploratory_sf, MAX_SF_CONDITION)?;
    let n = model.num_features();
    let id = DMatrix::<f64>::identity(n, n);
    Ok(model
        .feature_sf
        .iter()
        .map(|f| (f - &id) * &inv / model.gamma)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfNormCheck {
    pub norms: Vec<f64>,
    pub within_bound: bool,
}

/// Per-action ‖P_φ^a‖_∞ and whether all are at most 1 (+1e-9).
pub fn sf_norm_check(transitions: &[DMatrix<f64>]) -> SfNormCheck {
    let norms: Vec<f64> = transitions.iter().map(inf_norm).collect();
    let within_bound = norms.iter().all(|&n| n <= 1.0 + SF_NORM_SLACK);
    SfNormCheck {
        norms,
        within_bound,
    }
}

//! Finite MDPs, policies, and exact (non-abstracted) policy evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Row sums of stochastic matrices must match one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Default tolerance for iterative policy evaluation.
pub const EVAL_TOL: f64 = 1e-9;

/// Safety cap on the number of Bellman backups.
pub const EVAL_MAX_ITER: usize = 1_000_000;

/// A finite MDP with per-action transition matrices and expected-reward vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    transitions: Vec<DMatrix<f64>>,
    rewards: Vec<DVector<f64>>,
    discount: f64,
}

/// On-disk JSON layout of an MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(file: MdpFile) -> Result<Self> {
        let (ns, na) = (file.num_states, file.num_actions);
        if file.transitions.len() != na || file.rewards.len() != na {
            return Err(Error::Format(format!(
                "expected {na} transition matrices and reward vectors"
            )));
        }
        let mut transitions = Vec::with_capacity(na);
        for (a, rows) in file.transitions.iter().enumerate() {
            if rows.len() != ns || rows.iter().any(|r| r.len() != ns) {
                return Err(Error::Format(format!(
                    "transition matrix for action {a} is not {ns}x{ns}"
                )));
            }
            transitions.push(DMatrix::from_fn(ns, ns, |i, j| rows[i][j]));
        }
        let mut rewards = Vec::with_capacity(na);
        for (a, r) in file.rewards.iter().enumerate() {
            if r.len() != ns {
                return Err(Error::Format(format!(
                    "reward vector for action {a} has length {}, expected {ns}",
                    r.len()
                )));
            }
            rewards.push(DVector::from_column_slice(r));
        }
        TabularMdp::new(transitions, rewards, file.discount)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(mdp: TabularMdp) -> Self {
        MdpFile {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            discount: mdp.discount,
            transitions: mdp
                .transitions
                .iter()
                .map(|p| p.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            rewards: mdp
                .rewards
                .iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<DMatrix<f64>>,
        rewards: Vec<DVector<f64>>,
        discount: f64,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Argument("MDP needs at least one action".into()));
        }
        if transitions.len() != rewards.len() {
            return Err(dim_err(format!(
                "{} transition matrices but {} reward vectors",
                transitions.len(),
                rewards.len()
            )));
        }
        let ns = transitions[0].nrows();
        if ns == 0 {
            return Err(Error::Argument("MDP needs at least one state".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Argument(format!(
                "discount {discount} not in [0, 1)"
            )));
        }
        for (a, (p, r)) in transitions.iter().zip(&rewards).enumerate() {
            if p.shape() != (ns, ns) || r.len() != ns {
                return Err(dim_err(format!("action {a}: expected {ns} states")));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::Argument(format!("action {a}: non-finite reward")));
            }
            check_stochastic(p).map_err(|e| Error::Argument(format!("action {a}: {e}")))?;
        }
        Ok(Self {
            transitions,
            rewards,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transitions[0].nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self, action: usize) -> &DMatrix<f64> {
        &self.transitions[action]
    }

    pub fn reward(&self, action: usize) -> &DVector<f64> {
        &self.rewards[action]
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    pub fn rewards(&self) -> &[DVector<f64>] {
        &self.rewards
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Checks that a matrix is nonnegative with unit row sums.
pub(crate) fn check_stochastic(p: &DMatrix<f64>) -> std::result::Result<(), String> {
    for (i, row) in p.row_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(format!("row {i} has a negative or non-finite entry"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(format!("row {i} sums to {sum}"));
        }
    }
    Ok(())
}

/// A stochastic policy stored as an |S|×|A| matrix of action probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(dim_err("empty policy matrix"));
        }
        check_stochastic(&probs).map_err(|e| Error::Argument(format!("policy {e}")))?;
        Ok(Self { probs })
    }

    /// Deterministic policy selecting `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::Argument(format!("action {a} out of range")));
        }
        let probs = DMatrix::from_fn(actions.len(), num_actions, |s, a| {
            f64::from(u8::from(actions[s] == a))
        });
        Self::new(probs)
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[(state, action)]
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    /// Diagonal entries of Π^a = diag{π(s,a)}_s.
    pub fn action_weights(&self, action: usize) -> DVector<f64> {
        self.probs.column(action).into_owned()
    }

    /// The selected action per state if the policy is deterministic.
    pub fn deterministic_actions(&self) -> Option<Vec<usize>> {
        self.probs
            .row_iter()
            .map(|row| {
                let a = row.iter().position(|&p| p == 1.0)?;
                row.iter()
                    .enumerate()
                    .all(|(b, &p)| b == a || p == 0.0)
                    .then_some(a)
            })
            .collect()
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.probs.shape() != (mdp.num_states(), mdp.num_actions()) {
            return Err(dim_err(format!(
                "policy is {}x{}, MDP has {} states and {} actions",
                self.probs.nrows(),
                self.probs.ncols(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

/// State values v^π and per-action values q^a.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub state_values: DVector<f64>,
    pub action_values: Vec<DVector<f64>>,
}

/// Transition matrix P^π and reward vector r^π induced by a policy.
pub fn mix_policy(mdp: &TabularMdp, pi: &Policy) -> Result<(DMatrix<f64>, DVector<f64>)> {
    pi.check_shape(mdp)?;
    let ns = mdp.num_states();
    let mut p = DMatrix::zeros(ns, ns);
    let mut r = DVector::zeros(ns);
    for a in 0..mdp.num_actions() {
        let w = pi.action_weights(a);
        for s in 0..ns {
            if w[s] != 0.0 {
                let mut row = p.row_mut(s);
                row += w[s] * mdp.transitions[a].row(s);
                r[s] += w[s] * mdp.rewards[a][s];
            }
        }
    }
    Ok((p, r))
}

fn action_values(mdp: &TabularMdp, v: &DVector<f64>) -> Vec<DVector<f64>> {
    let gamma = mdp.discount;
    mdp.transitions
        .iter()
        .zip(&mdp.rewards)
        .map(|(p, r)| r + gamma * (p * v))
        .collect()
}

/// Iterates v ← r^π + γP^πv until the update is small enough that the Bellman
/// residual is at most `tol`.
pub fn evaluate_policy_exact(mdp: &TabularMdp, pi: &Policy, tol: f64) -> Result<ValueTable> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    let (p, r) = mix_policy(mdp, pi)?;
    let gamma = mdp.discount;
    let threshold = tol * (1.0 - gamma);
    let mut v = r.clone();
    let mut delta = f64::INFINITY;
    for _ in 0..EVAL_MAX_ITER {
        let next = &r + gamma * (&p * &v);
        delta = (&next - &v).amax();
        v = next;
        if delta <= threshold {
            let action_values = action_values(mdp, &v);
            return Ok(ValueTable {
                state_values: v,
                action_values,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: EVAL_MAX_ITER,
        last_delta: delta,
        last_iterate: v.iter().copied().collect(),
    })
}

/// Optimal state values by value iteration.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<DVector<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    let gamma = mdp.discount;
    let threshold = tol * (1.0 - gamma);
    let mut v = DVector::zeros(mdp.num_states());
    let mut delta = f64::INFINITY;
    for _ in 0..EVAL_MAX_ITER {
        let q = action_values(mdp, &v);
        let next = DVector::from_fn(mdp.num_states(), |s, _| {
            q.iter().map(|qa| qa[s]).fold(f64::NEG_INFINITY, f64::max)
        });
        delta = (&next - &v).amax();
        v = next;
        if delta <= threshold {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence {
        iterations: EVAL_MAX_ITER,
        last_delta: delta,
        last_iterate: v.iter().copied().collect(),
    })
}

/// Deterministic greedy policy with respect to the optimal values.
///
/// Actions whose value is within `10 * tol` of the best are treated as tied and
/// the lowest action index wins.
pub fn greedy_policy(mdp: &TabularMdp, tol: f64) -> Result<Policy> {
    let v = value_iteration(mdp, tol)?;
    let q = action_values(mdp, &v);
    let tie = 10.0 * tol;
    let actions: Vec<usize> = (0..mdp.num_states())
        .map(|s| {
            let best = q.iter().map(|qa| qa[s]).fold(f64::NEG_INFINITY, f64::max);
            q.iter().position(|qa| qa[s] >= best - tie).unwrap_or(0)
        })
        .collect();
    Policy::deterministic(&actions, mdp.num_actions())
}

/// Mixture π(s,a) = ε·1[a = a*(s)] + (1−ε)/|A| around a deterministic policy.
pub fn epsilon_greedy(optimal: &Policy, eps: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Argument(format!("epsilon {eps} not in [0, 1]")));
    }
    let actions = optimal
        .deterministic_actions()
        .ok_or_else(|| Error::Argument("epsilon_greedy needs a deterministic policy".into()))?;
    let na = optimal.num_actions();
    let rest = (1.0 - eps) / na as f64;
    let probs = DMatrix::from_fn(actions.len(), na, |s, a| {
        if actions[s] == a {
            eps + rest
        } else {
            rest
        }
    });
    Policy::new(probs)
}

pub fn uniform_policy(mdp: &TabularMdp) -> Policy {
    let na = mdp.num_actions();
    Policy {
        probs: DMatrix::from_element(mdp.num_states(), na, 1.0 / na as f64),
    }
}

/// The three test policies used throughout the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Optimal,
    Uniform,
    EpsilonGreedy,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Optimal,
        PolicyKind::Uniform,
        PolicyKind::EpsilonGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Uniform => "uniform",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
        }
    }
}

/// Optimal, uniform, and ε = 0.5 greedy policies for an MDP.
pub fn standard_policies(mdp: &TabularMdp) -> Result<Vec<(PolicyKind, Policy)>> {
    let optimal = greedy_policy(mdp, EVAL_TOL)?;
    let eps = epsilon_greedy(&optimal, 0.5)?;
    Ok(vec![
        (PolicyKind::Optimal, optimal),
        (PolicyKind::Uniform, uniform_policy(mdp)),
        (PolicyKind::EpsilonGreedy, eps),
    ])
}

//! Learning model features: the successor-feature loss, its analytic
//! gradients, Adam, k-means re-projection and the training loop.

mod adam;
mod kmeans;
mod objective;
mod train;

pub use adam::adam_step;
pub use kmeans::{kmeans_rows, KMeansResult};
pub use objective::{loss, loss_gradients, LossBreakdown};
pub use train::{
    fit_with_fixed_features, project_parameters, round_to_partition, train,
    train_feature_model_only, train_with_observer, CurvePoint, ProjectionEvent, TrainRun,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::successor::FeatureModel;

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub num_features: usize,
    /// Weight of the successor-feature residual in the loss.
    pub alpha: f64,
    pub learning_rate: f64,
    /// Spacing of the default projection schedule.
    pub updates_per_projection: usize,
    /// Update counts after which a k-means projection runs.
    pub projection_schedule: Vec<usize>,
    pub total_updates: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub rng_seed: u64,
    /// Loss-curve sampling interval (every step is logged when 1).
    pub log_every: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            num_features: 3,
            alpha: 1e-3,
            learning_rate: 1e-3,
            updates_per_projection: 40_000,
            projection_schedule: projection_schedule(40_000, 100_000),
            total_updates: 200_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            init_low: 0.0,
            init_high: 1.0,
            rng_seed: 0,
            log_every: 1000,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
        }
    }
}

/// Multiples of `every` strictly below `until`.
pub fn projection_schedule(every: usize, until: usize) -> Vec<usize> {
    if every == 0 {
        return Vec::new();
    }
    (1..)
        .map(|i| i * every)
        .take_while(|&s| s < until)
        .collect()
}

impl LearnerConfig {
    /// Transfer protocol: feature model only, 30000 updates at learning rate 0.1.
    pub fn transfer_defaults() -> Self {
        Self {
            learning_rate: 0.1,
            total_updates: 30_000,
            projection_schedule: Vec::new(),
            ..Self::default()
        }
    }

    pub fn with_projections(mut self, every: usize, until: usize) -> Self {
        self.updates_per_projection = every;
        self.projection_schedule = projection_schedule(every, until);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Argument(msg.to_string()));
        if self.num_features == 0 {
            return bad("num_features must be at least 1");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.projection_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("projection_schedule must be strictly increasing");
        }
        if !(self.init_low <= self.init_high) {
            return bad("init_low must not exceed init_high");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iter == 0 {
            return bad("k-means needs at least one restart and one iteration");
        }
        Ok(())
    }
}

/// Trainable parameters: Φ (|S|×n), r_φ^a (n) and F^a (n×n) per action.
///
/// The same layout stores gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub phi: DMatrix<f64>,
    pub rewards: Vec<DVector<f64>>,
    pub sf: Vec<DMatrix<f64>>,
}

impl Params {
    pub fn zeros(num_states: usize, num_actions: usize, n: usize) -> Self {
        Self {
            phi: DMatrix::zeros(num_states, n),
            rewards: vec![DVector::zeros(n); num_actions],
            sf: vec![DMatrix::zeros(n, n); num_actions],
        }
    }

    pub fn zeros_like(other: &Params) -> Self {
        Self::zeros(other.phi.nrows(), other.rewards.len(), other.phi.ncols())
    }

    pub fn uniform(
        num_states: usize,
        num_actions: usize,
        n: usize,
        low: f64,
        high: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut draw = || low + (high - low) * rng.random::<f64>();
        let phi = DMatrix::from_fn(num_states, n, |_, _| draw());
        let rewards = (0..num_actions)
            .map(|_| DVector::from_fn(n, |_, _| draw()))
            .collect();
        let sf = (0..num_actions)
            .map(|_| DMatrix::from_fn(n, n, |_, _| draw()))
            .collect();
        Self { phi, rewards, sf }
    }

    pub fn num_features(&self) -> usize {
        self.phi.ncols()
    }

    pub(crate) fn slices(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.phi.as_slice())
            .chain(self.rewards.iter().map(|r| r.as_slice()))
            .chain(self.sf.iter().map(|f| f.as_slice()))
    }

    pub(crate) fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        std::iter::once(self.phi.as_mut_slice())
            .chain(self.rewards.iter_mut().map(|r| r.as_mut_slice()))
            .chain(self.sf.iter_mut().map(|f| f.as_mut_slice()))
    }

    pub fn all_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .flat_map(|s| s.iter())
            .fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

/// Parameters plus optimizer state of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub params: Params,
    pub adam_m: Params,
    pub adam_v: Params,
    /// Adam steps since the moments were last reset.
    pub adam_t: u64,
    /// Gradient updates performed so far.
    pub step: usize,
}

impl LearnerState {
    pub fn new(params: Params) -> Self {
        let zeros = Params::zeros_like(&params);
        Self {
            adam_m: zeros.clone(),
            adam_v: zeros,
            adam_t: 0,
            step: 0,
            params,
        }
    }

    /// Uniform initialization of every parameter from the configured interval.
    pub fn initialize(num_states: usize, num_actions: usize, config: &LearnerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Self::new(Params::uniform(
            num_states,
            num_actions,
            config.num_features,
            config.init_low,
            config.init_high,
            &mut rng,
        ))
    }

    pub fn reset_moments(&mut self) {
        self.adam_m = Params::zeros_like(&self.params);
        self.adam_v = Params::zeros_like(&self.params);
        self.adam_t = 0;
    }

    pub fn feature_model(&self, gamma: f64) -> Result<FeatureModel> {
        FeatureModel::new(gamma, self.params.rewards.clone(), self.params.sf.clone())
    }

    pub fn to_checkpoint(&self, gamma: f64) -> Result<Checkpoint> {
        Ok(Checkpoint {
            step: self.step,
            phi: self
                .params
                .phi
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            model: self.feature_model(gamma)?,
        })
    }
}

/// Serialized learner state (parameters only, no optimizer moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub step: usize,
    pub phi: Vec<Vec<f64>>,
    pub model: FeatureModel,
}

impl Checkpoint {
    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.phi_matrix()?;
        Ok(ck)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn phi_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.model.num_features();
        if self.phi.is_empty() || self.phi.iter().any(|r| r.len() != n) {
            return Err(Error::Format(format!("phi rows must have {n} entries")));
        }
        if self.phi.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite phi entry".into()));
        }
        Ok(DMatrix::from_fn(self.phi.len(), n, |i, j| self.phi[i][j]))
    }

    pub fn into_state(self) -> Result<LearnerState> {
        let phi = self.phi_matrix()?;
        let params = Params {
            phi,
            rewards: self.model.feature_rewards().to_vec(),
            sf: self.model.feature_sf().to_vec(),
        };
        let mut state = LearnerState::new(params);
        state.step = self.step;
        Ok(state)
    }
}

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::objective::Residuals;
use super::{adam_step, kmeans_rows, LearnerConfig, LearnerState, LossBreakdown, Params};
use crate::abstraction::Partition;
use crate::error::{Error, Result};
use crate::linalg::condition_number;
use crate::mdp::TabularMdp;
use crate::successor::FeatureModel;

/// Largest condition number of the centroid matrix accepted for projection.
pub const MAX_PROJECTION_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionEvent {
    Applied,
    /// Centroid matrix too ill-conditioned; parameters left unchanged.
    Skipped,
}

impl ProjectionEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionEvent::Applied => "applied",
            ProjectionEvent::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Number of gradient updates performed before this loss was measured.
    pub step: usize,
    pub loss: LossBreakdown,
    pub projection: Option<ProjectionEvent>,
}

/// Result of a training run. When `diverged` is set the run stopped early and
/// `state` holds the last finite parameters.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub state: LearnerState,
    pub curve: Vec<CurvePoint>,
    pub diverged: Option<usize>,
}

impl TrainRun {
    pub fn into_result(self) -> Result<Self> {
        match self.diverged {
            Some(step) => Err(Error::Diverged { step }),
            None => Ok(self),
        }
    }

    pub fn final_loss(&self) -> Option<LossBreakdown> {
        self.curve.last().map(|p| p.loss)
    }
}

/// Changes basis with M whose rows are the k-means centroids:
/// Φ ← ΦM⁻¹, r_φ^a ← Mr_φ^a, F^a ← MF^aM⁻¹. A row of Φ equal to centroid j
/// becomes the j-th unit vector. Adam moments are reset.
pub fn project_parameters(state: &mut LearnerState, centroids: &DMatrix<f64>) -> ProjectionEvent {
    let n = state.params.num_features();
    if centroids.shape() != (n, n) {
        debug!(
            "projection skipped: centroid matrix has shape {:?}",
            centroids.shape()
        );
        return ProjectionEvent::Skipped;
    }
    let condition = condition_number(centroids);
    let inverse = match (condition <= MAX_PROJECTION_CONDITION)
        .then(|| centroids.clone().try_inverse())
        .flatten()
    {
        Some(inv) => inv,
        None => {
            info!(
                "projection skipped at step {}: condition {condition:e}",
                state.step
            );
            return ProjectionEvent::Skipped;
        }
    };
    let m = centroids;
    let p = &mut state.params;
    p.phi = &p.phi * &inverse;
    for r in &mut p.rewards {
        *r = m * &*r;
    }
    for f in &mut p.sf {
        *f = m * &*f * &inverse;
    }
    state.reset_moments();
    ProjectionEvent::Applied
}

fn projection_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Full training: gradient updates on Φ, r_φ and F with k-means projections
/// at the scheduled update counts, then plain updates up to `total_updates`.
pub fn train(
    mdp: &TabularMdp,
    config: &LearnerConfig,
    callback: &mut dyn FnMut(&CurvePoint),
) -> Result<TrainRun> {
    train_with_observer(mdp, config, &mut |point, _| callback(point))
}

/// Like [`train`], but the observer also sees the learner state at every
/// logged step, after that step's projection and before its update.
pub fn train_with_observer(
    mdp: &TabularMdp,
    config: &LearnerConfig,
    observer: &mut dyn FnMut(&CurvePoint, &LearnerState),
) -> Result<TrainRun> {
    config.validate()?;
    let state = LearnerState::initialize(mdp.num_states(), mdp.num_actions(), config);
    run_loop(mdp, config, state, None, observer)
}

/// Fits r_φ and F for a fixed feature matrix Φ; no projection is performed.
pub fn train_feature_model_only(
    mdp: &TabularMdp,
    phi: &DMatrix<f64>,
    config: &LearnerConfig,
) -> Result<FeatureModel> {
    let run = fit_with_fixed_features(mdp, phi, config, &mut |_| {})?.into_result()?;
    run.state.feature_model(mdp.discount())
}

/// Like [`train_feature_model_only`] but returns the whole run.
pub fn fit_with_fixed_features(
    mdp: &TabularMdp,
    phi: &DMatrix<f64>,
    config: &LearnerConfig,
    callback: &mut dyn FnMut(&CurvePoint),
) -> Result<TrainRun> {
    config.validate()?;
    if phi.nrows() != mdp.num_states() || phi.ncols() != config.num_features {
        return Err(Error::Dimension(format!(
            "fixed features are {}x{}, expected {}x{}",
            phi.nrows(),
            phi.ncols(),
            mdp.num_states(),
            config.num_features
        )));
    }
    let mut state = LearnerState::initialize(mdp.num_states(), mdp.num_actions(), config);
    state.params.phi = phi.clone();
    let p_phi: Vec<DMatrix<f64>> = mdp.transitions().iter().map(|p| p * phi).collect();
    run_loop(mdp, config, state, Some(p_phi), &mut |point, _| {
        callback(point)
    })
}

fn run_loop(
    mdp: &TabularMdp,
    config: &LearnerConfig,
    mut state: LearnerState,
    frozen_p_phi: Option<Vec<DMatrix<f64>>>,
    observer: &mut dyn FnMut(&CurvePoint, &LearnerState),
) -> Result<TrainRun> {
    let frozen = frozen_p_phi.is_some();
    let mut curve = Vec::new();
    let mut schedule = config.projection_schedule.iter().copied().peekable();
    let mut projections = 0usize;
    let mut diverged = None;
    let n = config.num_features;

    for t in 0..=config.total_updates {
        let mut projection = None;
        while schedule.peek().is_some_and(|&s| s < t) {
            schedule.next();
        }
        if !frozen && t > 0 && schedule.peek() == Some(&t) {
            schedule.next();
            let seed = projection_seed(config.rng_seed, projections);
            projections += 1;
            projection = Some(
                match kmeans_rows(
                    &state.params.phi,
                    n,
                    seed,
                    config.kmeans_max_iter,
                    config.kmeans_restarts,
                ) {
                    Ok(km) => project_parameters(&mut state, &km.centroids),
                    Err(e) => {
                        info!("projection skipped at step {t}: {e}");
                        ProjectionEvent::Skipped
                    }
                },
            );
        }

        let residuals = Residuals::compute(&state.params, mdp, frozen_p_phi.as_deref());
        let loss = residuals.breakdown(config.alpha);
        if t % config.log_every == 0 || t == config.total_updates || projection.is_some() {
            let point = CurvePoint {
                step: t,
                loss,
                projection,
            };
            observer(&point, &state);
            curve.push(point);
        }
        if t == config.total_updates {
            break;
        }
        if !loss.total.is_finite() {
            diverged = Some(t);
            break;
        }
        let grads: Params = residuals.gradients(&state.params, mdp, config.alpha, !frozen);
        if !grads.all_finite() {
            diverged = Some(t);
            break;
        }
        let before = state.params.clone();
        match adam_step(&mut state, &grads, config) {
            Ok(()) => {}
            Err(Error::Diverged { step }) => {
                state.params = before;
                diverged = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainRun {
        state,
        curve,
        diverged,
    })
}

/// Assigns each state to the argmax coordinate of its feature row, with
/// cluster ids compacted to `0..m`.
pub fn round_to_partition(phi: &DMatrix<f64>) -> Partition {
    let raw: Vec<usize> = phi
        .row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (j, &x)| if x > b.1 { (j, x) } else { b },
                )
                .0
        })
        .collect();
    let mut map = vec![usize::MAX; phi.ncols()];
    let mut next = 0;
    let compact = raw
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    Partition::new(compact).expect("compacted labels are gap-free")
}

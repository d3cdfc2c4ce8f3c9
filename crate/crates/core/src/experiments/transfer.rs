use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::planted::{lift_abstract_mdp, make_planted_mdp, perturb_partition, sample_abstract_mdp};
use super::{derive_seed, PlantedMdp, PlantedMdpSpec};
use crate::error::{Error, Result};
use crate::feature_eval::{evaluate_all, EvalReport, PolicyReport};
use crate::learner::{fit_with_fixed_features, train, LearnerConfig, TrainRun};
use crate::mdp::standard_policies;
use crate::successor::FeatureModel;

const STREAM_SAME: u64 = 1;
const STREAM_PERTURBED: u64 = 2;

/// Source-task training on a planted MDP.
#[derive(Debug, Clone)]
pub struct SourceRun {
    pub planted: PlantedMdp,
    pub run: TrainRun,
    /// Learned feature matrix Φ̂.
    pub phi: DMatrix<f64>,
    pub model: FeatureModel,
    pub report: EvalReport,
}

/// Trains model features on the planted MDP described by `spec`.
pub fn run_source_training(spec: &PlantedMdpSpec, config: &LearnerConfig) -> Result<SourceRun> {
    let planted = make_planted_mdp(spec)?;
    let run = train(&planted.mdp, config, &mut |_| {})?.into_result()?;
    let phi = run.state.params.phi.clone();
    let model = run.state.feature_model(planted.mdp.discount())?;
    let policies = standard_policies(&planted.mdp)?;
    let report = evaluate_all(&phi, &model, &planted.mdp, &policies)?;
    Ok(SourceRun {
        planted,
        run,
        phi,
        model,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: usize,
    pub seed: u64,
    /// State moved to another cluster when the partition was perturbed.
    pub moved_state: Option<usize>,
    pub policies: Vec<PolicyReport>,
    pub bound: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub perturbed: bool,
    pub source_bound: Option<f64>,
    pub tasks: Vec<TaskResult>,
}

pub const TRANSFER_CSV_HEADER: &str = "task,policy,value_error,bound,perturbed,seed";

impl TransferResult {
    /// Rows matching [`TRANSFER_CSV_HEADER`], one per task and policy.
    pub fn csv_rows(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        self.tasks
            .iter()
            .flat_map(|t| {
                t.policies.iter().map(move |p| {
                    format!(
                        "{},{},{},{},{},{}",
                        t.task,
                        p.policy.name(),
                        opt(p.value_error),
                        opt(t.bound),
                        self.perturbed,
                        t.seed
                    )
                })
            })
            .collect()
    }

    /// All converged per-task, per-policy value errors.
    pub fn errors(&self) -> Vec<f64> {
        self.tasks
            .iter()
            .flat_map(|t| t.policies.iter().filter_map(|p| p.value_error))
            .collect()
    }

    pub fn mean_error(&self) -> f64 {
        let e = self.errors();
        if e.is_empty() {
            f64::NAN
        } else {
            e.iter().sum::<f64>() / e.len() as f64
        }
    }

    pub fn all_converged(&self) -> bool {
        self.tasks
            .iter()
            .all(|t| !t.diverged && t.policies.iter().all(|p| p.converged))
    }
}

fn run_task(
    phi_hat: &DMatrix<f64>,
    source: &PlantedMdp,
    spec: &PlantedMdpSpec,
    task: usize,
    perturb: bool,
    config: &LearnerConfig,
) -> Result<TaskResult> {
    let stream = if perturb {
        STREAM_PERTURBED
    } else {
        STREAM_SAME
    };
    let seed = derive_seed(spec.rng_seed, stream, task as u64);
    let (partition, moved_state) = if perturb {
        let (p, moved) = perturb_partition(&source.partition, derive_seed(seed, 0, 0))?;
        (p, Some(moved))
    } else {
        (source.partition.clone(), None)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let abstract_mdp = sample_abstract_mdp(
        partition.num_clusters(),
        spec.num_actions,
        spec.reward_prob,
        spec.gamma,
        &mut rng,
    )?;
    let mdp = lift_abstract_mdp(&abstract_mdp, &partition)?;
    let task_config = LearnerConfig {
        rng_seed: derive_seed(seed, 2, 0),
        ..config.clone()
    };
    let run = fit_with_fixed_features(&mdp, phi_hat, &task_config, &mut |_| {})?;
    let policies = standard_policies(&mdp)?;
    if run.diverged.is_some() {
        return Ok(TaskResult {
            task,
            seed,
            moved_state,
            policies: policies
                .iter()
                .map(|(kind, _)| PolicyReport {
                    policy: *kind,
                    value_error: None,
                    action_value_error: None,
                    converged: false,
                })
                .collect(),
            bound: None,
            diverged: true,
        });
    }
    let model = run.state.feature_model(mdp.discount())?;
    let report = evaluate_all(phi_hat, &model, &mdp, &policies)?;
    Ok(TaskResult {
        task,
        seed,
        moved_state,
        policies: report.policies,
        bound: report.bound,
        diverged: false,
    })
}

/// Transfers Φ̂ to `num_tasks` freshly sampled planted MDPs sharing the
/// source partition (or a one-state perturbation of it), fitting only the
/// feature model on each. Tasks run on up to `threads` threads; results do
/// not depend on the thread count.
pub fn run_transfer(
    phi_hat: &DMatrix<f64>,
    source: &PlantedMdp,
    spec: &PlantedMdpSpec,
    num_tasks: usize,
    perturb: bool,
    config: &LearnerConfig,
    source_bound: Option<f64>,
    threads: usize,
) -> Result<TransferResult> {
    if phi_hat.nrows() != source.mdp.num_states() {
        return Err(Error::Dimension("Φ̂ does not match the source MDP".into()));
    }
    let config = LearnerConfig {
        num_features: phi_hat.ncols(),
        projection_schedule: Vec::new(),
        ..config.clone()
    };
    let threads = threads.clamp(1, num_tasks.max(1));
    let mut slots: Vec<Option<Result<TaskResult>>> = (0..num_tasks).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (worker, chunk) in slots
            .chunks_mut(num_tasks.div_ceil(threads).max(1))
            .enumerate()
        {
            let config = &config;
            let offset = worker * num_tasks.div_ceil(threads).max(1);
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_task(phi_hat, source, spec, offset + i, perturb, config));
                }
            });
        }
    });
    let tasks = slots
        .into_iter()
        .map(|s| s.expect("every task slot is filled"))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferResult {
        perturbed: perturb,
        source_bound,
        tasks,
    })
}

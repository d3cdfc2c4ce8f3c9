//! Run configuration: compiled-in defaults, overlaid by an optional JSON
//! config file, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use model_features::experiments::{
    make_grid_world, make_planted_mdp, GridWorldSpec, PlantedMdpSpec,
};
use model_features::learner::{projection_schedule, LearnerConfig};
use model_features::mdp::TabularMdp;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{EnvArgs, EnvKind, Format, LearnerArgs, PerturbMode};
use crate::Failure;

/// Upper end of the projection window when only --proj-every is given.
const DEFAULT_PROJ_UNTIL: usize = 100_000;

/// Config file contents. Nested learner sections are partial: missing keys
/// keep their defaults, unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub env: Option<EnvKind>,
    pub mdp: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub gridworld: Option<GridWorldSpec>,
    pub planted: Option<PlantedMdpSpec>,
    pub learner: Option<serde_json::Map<String, Value>>,
    pub transfer: Option<TransferFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferFileConfig {
    pub tasks: Option<usize>,
    pub perturb: Option<PerturbMode>,
    pub learner: Option<serde_json::Map<String, Value>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }
}

/// The environment a command runs on.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum EnvConfig {
    Gridworld(GridWorldSpec),
    Planted(PlantedMdpSpec),
    File { path: PathBuf },
}

impl EnvConfig {
    pub fn resolve(args: &EnvArgs, file: &FileConfig) -> Result<Self, Failure> {
        Self::resolve_or(args, file, EnvKind::Gridworld)
    }

    /// Like [`Self::resolve`] with a command-specific default environment.
    pub fn resolve_or(
        args: &EnvArgs,
        file: &FileConfig,
        default: EnvKind,
    ) -> Result<Self, Failure> {
        let kind = args.env.or(file.env).unwrap_or(default);
        let seed = args.seed.or(file.seed);
        if kind != EnvKind::Planted && (args.states.is_some() || args.clusters.is_some()) {
            return Err(Failure::usage(
                "--states and --clusters apply to --env planted only",
            ));
        }
        Ok(match kind {
            EnvKind::Gridworld => EnvConfig::Gridworld(file.gridworld.clone().unwrap_or_default()),
            EnvKind::Planted => {
                let mut spec = file.planted.clone().unwrap_or_default();
                if let Some(s) = seed {
                    spec.rng_seed = s;
                }
                if let Some(n) = args.states {
                    spec.num_states = n;
                }
                if let Some(m) = args.clusters {
                    spec.num_clusters = m;
                }
                spec.validate().map_err(Failure::from)?;
                EnvConfig::Planted(spec)
            }
            EnvKind::File => {
                let path = args
                    .mdp
                    .clone()
                    .or_else(|| file.mdp.clone())
                    .ok_or_else(|| Failure::usage("--env file requires --mdp PATH"))?;
                EnvConfig::File { path }
            }
        })
    }

    /// Feature dimension used when none is configured: the number of
    /// planted clusters, otherwise three.
    pub fn default_features(&self) -> usize {
        match self {
            EnvConfig::Planted(spec) => spec.num_clusters,
            _ => 3,
        }
    }

    pub fn build(&self) -> Result<TabularMdp, Failure> {
        match self {
            EnvConfig::Gridworld(spec) => Ok(make_grid_world(spec)?),
            EnvConfig::Planted(spec) => Ok(make_planted_mdp(spec)?.mdp),
            EnvConfig::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::usage(format!("cannot read MDP {}: {e}", path.display()))
                })?;
                TabularMdp::from_json(&text)
                    .map_err(|e| Failure::usage(format!("MDP {}: {e}", path.display())))
            }
        }
    }
}

fn overlay<T: Serialize + DeserializeOwned>(
    base: &T,
    patch: Option<&serde_json::Map<String, Value>>,
    what: &str,
) -> Result<T, Failure> {
    let mut value = serde_json::to_value(base).map_err(|e| Failure::usage(e.to_string()))?;
    if let (Value::Object(target), Some(patch)) = (&mut value, patch) {
        for (k, v) in patch {
            target.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(value).map_err(|e| Failure::usage(format!("{what}: {e}")))
}

/// Learner configuration for training: defaults, then the file's `learner`
/// section, then flags.
pub fn resolve_learner(
    base: LearnerConfig,
    patch: Option<&serde_json::Map<String, Value>>,
    args: &LearnerArgs,
    seed: Option<u64>,
    default_features: usize,
) -> Result<LearnerConfig, Failure> {
    let base = LearnerConfig {
        num_features: default_features,
        ..base
    };
    let mut config = overlay(&base, patch, "learner config")?;
    if let Some(s) = seed {
        config.rng_seed = s;
    }
    if let Some(n) = args.features {
        config.num_features = n;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }
    if let Some(u) = args.updates {
        config.total_updates = u;
    }
    if let Some(l) = args.log_every {
        config.log_every = l;
    }
    if args.proj_every.is_some() || args.proj_until.is_some() {
        let every = args.proj_every.unwrap_or(config.updates_per_projection);
        let until = args.proj_until.unwrap_or(DEFAULT_PROJ_UNTIL);
        config.updates_per_projection = every;
        config.projection_schedule = projection_schedule(every, until);
    }
    config.validate()?;
    Ok(config)
}

/// Worker threads: `MF_THREADS` when set, otherwise the available parallelism.
pub fn thread_count() -> Result<usize, Failure> {
    match std::env::var("MF_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::usage(format!(
                "MF_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
    }
}

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::Partition;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Random MDP with a known bisimulation partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedMdpSpec {
    pub num_states: usize,
    pub num_clusters: usize,
    pub num_actions: usize,
    /// Probability that an abstract reward entry is one.
    pub reward_prob: f64,
    pub gamma: f64,
    pub rng_seed: u64,
    /// Equal cluster sizes (up to one state) when true; otherwise each
    /// cluster gets one state and the rest are assigned uniformly.
    pub balanced: bool,
}

impl Default for PlantedMdpSpec {
    fn default() -> Self {
        Self {
            num_states: 50,
            num_clusters: 5,
            num_actions: 4,
            reward_prob: 0.1,
            gamma: 0.9,
            rng_seed: 0,
            balanced: true,
        }
    }
}

impl PlantedMdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 || self.num_clusters > self.num_states {
            return Err(Error::Argument(format!(
                "{} clusters for {} states",
                self.num_clusters, self.num_states
            )));
        }
        if self.num_actions == 0 {
            return Err(Error::Argument("need at least one action".into()));
        }
        if !(0.0..=1.0).contains(&self.reward_prob) {
            return Err(Error::Argument(format!(
                "reward_prob {} not in [0, 1]",
                self.reward_prob
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Argument(format!(
                "discount {} not in [0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedMdp {
    pub mdp: TabularMdp,
    /// Φ_gt as a partition.
    pub partition: Partition,
    pub abstract_mdp: TabularMdp,
}

/// Samples an abstract model: P_φ^a rows uniform on [0,1] then normalized,
/// r_φ^a entries Bernoulli(`reward_prob`). An all-zero reward draw is redrawn
/// when `reward_prob > 0`.
pub fn sample_abstract_mdp(
    num_clusters: usize,
    num_actions: usize,
    reward_prob: f64,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<TabularMdp> {
    let transitions: Vec<DMatrix<f64>> = (0..num_actions)
        .map(|_| {
            let mut p = DMatrix::from_fn(num_clusters, num_clusters, |_, _| rng.random::<f64>());
            for mut row in p.row_iter_mut() {
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    row /= sum;
                } else {
                    row.fill(1.0 / num_clusters as f64);
                }
            }
            p
        })
        .collect();
    let mut draws = 0;
    let rewards = loop {
        draws += 1;
        let rewards: Vec<DVector<f64>> = (0..num_actions)
            .map(|_| {
                DVector::from_fn(num_clusters, |_, _| {
                    if rng.random::<f64>() < reward_prob {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let any = rewards.iter().any(|r| r.iter().any(|&x| x != 0.0));
        if any || reward_prob == 0.0 {
            break rewards;
        }
        debug!("all-zero abstract reward draw {draws}; resampling");
    };
    TabularMdp::new(transitions, rewards, gamma)
}

/// Ground MDP for which `partition` is an exact bisimulation: rewards are
/// copied per cluster and the mass p_φ(φ(s), a, c') is split evenly over the
/// members of c'.
pub fn lift_abstract_mdp(abstract_mdp: &TabularMdp, partition: &Partition) -> Result<TabularMdp> {
    if abstract_mdp.num_states() != partition.num_clusters() {
        return Err(Error::Dimension(format!(
            "abstract MDP has {} states for {} clusters",
            abstract_mdp.num_states(),
            partition.num_clusters()
        )));
    }
    let ns = partition.num_states();
    let sizes = partition.cluster_sizes();
    let transitions = abstract_mdp
        .transitions()
        .iter()
        .map(|pa| {
            DMatrix::from_fn(ns, ns, |s, t| {
                let ct = partition.cluster_of(t);
                pa[(partition.cluster_of(s), ct)] / sizes[ct] as f64
            })
        })
        .collect();
    let rewards = abstract_mdp
        .rewards()
        .iter()
        .map(|ra| DVector::from_fn(ns, |s, _| ra[partition.cluster_of(s)]))
        .collect();
    TabularMdp::new(transitions, rewards, abstract_mdp.discount())
}

fn sample_assignment(spec: &PlantedMdpSpec, rng: &mut impl Rng) -> Result<Partition> {
    let (ns, m) = (spec.num_states, spec.num_clusters);
    let mut labels: Vec<usize> = if spec.balanced {
        (0..ns).map(|i| i % m).collect()
    } else {
        (0..m)
            .chain((m..ns).map(|_| rng.random_range(0..m)))
            .collect()
    };
    labels.shuffle(rng);
    Partition::new(labels)
}

pub fn make_planted_mdp(spec: &PlantedMdpSpec) -> Result<PlantedMdp> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let partition = sample_assignment(spec, &mut rng)?;
    let abstract_mdp = sample_abstract_mdp(
        spec.num_clusters,
        spec.num_actions,
        spec.reward_prob,
        spec.gamma,
        &mut rng,
    )?;
    let mdp = lift_abstract_mdp(&abstract_mdp, &partition)?;
    Ok(PlantedMdp {
        mdp,
        partition,
        abstract_mdp,
    })
}

/// Moves one uniformly chosen state (from a cluster with at least two
/// members) to a uniformly chosen different cluster.
pub fn perturb_partition(p: &Partition, seed: u64) -> Result<(Partition, usize)> {
    let m = p.num_clusters();
    if m < 2 {
        return Err(Error::Protocol(
            "cannot move a state with fewer than two clusters".into(),
        ));
    }
    let sizes = p.cluster_sizes();
    if sizes.iter().all(|&s| s < 2) {
        return Err(Error::Protocol(
            "every cluster is a singleton; a move would empty one".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = loop {
        let s = rng.random_range(0..p.num_states());
        if sizes[p.cluster_of(s)] >= 2 {
            break s;
        }
    };
    let from = p.cluster_of(state);
    let mut to = rng.random_range(0..m - 1);
    if to >= from {
        to += 1;
    }
    let mut assignment = p.assignment().to_vec();
    assignment[state] = to;
    Ok((Partition::new(assignment)?, state))
}

//! Exact state partitions: partition and weight matrices, abstract-MDP
//! construction, bisimulation checking and a partition-refinement oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::mdp::{Policy, TabularMdp};

/// Tolerance used when comparing refinement signatures.
pub const REFINE_TOL: f64 = 1e-9;

/// A clustering of states into `num_clusters` nonempty clusters.
///
/// Serialized as a JSON array of cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    assignment: Vec<usize>,
    num_clusters: usize,
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;

    fn try_from(assignment: Vec<usize>) -> Result<Self> {
        Partition::new(assignment)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.assignment
    }
}

impl Partition {
    /// Builds a partition; cluster ids must cover `0..m` without gaps.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::Format("partition over zero states".into()));
        }
        let max_id = assignment.iter().copied().max().unwrap_or(0);
        // Ids beyond the state count cannot all be used; reject before allocating.
        if max_id >= assignment.len() {
            return Err(Error::Format(format!(
                "cluster id {max_id} exceeds the {} states",
                assignment.len()
            )));
        }
        let num_clusters = max_id + 1;
        let mut used = vec![false; num_clusters];
        for &c in &assignment {
            used[c] = true;
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::Format(format!("cluster {c} has no members")));
        }
        Ok(Self {
            assignment,
            num_clusters,
        })
    }

    /// Every state in its own cluster.
    pub fn identity(num_states: usize) -> Self {
        Self {
            assignment: (0..num_states).collect(),
            num_clusters: num_states,
        }
    }

    pub fn num_states(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_of(&self, state: usize) -> usize {
        self.assignment[state]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&s| self.assignment[s] == cluster)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Relabels clusters in order of first appearance.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.num_clusters];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = next;
                    next += 1;
                }
                map[c]
            })
            .collect();
        Self {
            assignment,
            num_clusters: self.num_clusters,
        }
    }

    pub fn same_up_to_relabeling(&self, other: &Partition) -> bool {
        self.canonical() == other.canonical()
    }

    /// True if every cluster of `self` lies inside a cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.num_states() != coarser.num_states() {
            return false;
        }
        let mut image = vec![usize::MAX; self.num_clusters];
        for (s, &c) in self.assignment.iter().enumerate() {
            let target = coarser.assignment[s];
            if image[c] == usize::MAX {
                image[c] = target;
            } else if image[c] != target {
                return false;
            }
        }
        true
    }

    /// Number of states on which two partitions agree after optimally
    /// matching cluster labels (greedy over the overlap table, exact for
    /// near-identical partitions).
    pub fn agreement(&self, other: &Partition) -> usize {
        if self.num_states() != other.num_states() {
            return 0;
        }
        let mut overlap = vec![vec![0usize; other.num_clusters]; self.num_clusters];
        for (s, &c) in self.assignment.iter().enumerate() {
            overlap[c][other.assignment[s]] += 1;
        }
        let mut cells: Vec<(usize, usize, usize)> = overlap
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &n)| (n, i, j)))
            .filter(|&(n, _, _)| n > 0)
            .collect();
        cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_a = vec![false; self.num_clusters];
        let mut used_b = vec![false; other.num_clusters];
        let mut total = 0;
        for (n, i, j) in cells {
            if !used_a[i] && !used_b[j] {
                used_a[i] = true;
                used_b[j] = true;
                total += n;
            }
        }
        total
    }
}

/// A 0/1 matrix Φ with exactly one 1 per row and no empty column.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMatrix(DMatrix<f64>);

impl PartitionMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        matrix_to_partition(&matrix)?;
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_partition(&self) -> Partition {
        matrix_to_partition(&self.0).expect("validated on construction")
    }
}

pub fn partition_to_matrix(p: &Partition) -> PartitionMatrix {
    PartitionMatrix(DMatrix::from_fn(
        p.num_states(),
        p.num_clusters(),
        |s, c| {
            if p.cluster_of(s) == c {
                1.0
            } else {
                0.0
            }
        },
    ))
}

pub fn matrix_to_partition(phi: &DMatrix<f64>) -> Result<Partition> {
    let mut assignment = Vec::with_capacity(phi.nrows());
    for (s, row) in phi.row_iter().enumerate() {
        let ones: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == 1.0)
            .map(|(c, _)| c)
            .collect();
        let zeros = row.iter().filter(|&&x| x == 0.0).count();
        if ones.len() != 1 || zeros + 1 != row.len() {
            return Err(Error::Format(format!("row {s} is not one-hot")));
        }
        assignment.push(ones[0]);
    }
    let p = Partition::new(assignment)?;
    if p.num_clusters() != phi.ncols() {
        return Err(Error::Format(format!(
            "column {} is empty",
            p.num_clusters()
        )));
    }
    Ok(p)
}

/// Weight matrix Ω (m×|S|): rows are distributions supported inside clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    /// Validates Ω against a partition: support inside clusters and unit row sums.
    pub fn new(matrix: DMatrix<f64>, partition: &Partition) -> Result<Self> {
        check_weights(&matrix, partition)?;
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_weights(omega: &DMatrix<f64>, p: &Partition) -> Result<()> {
    if omega.shape() != (p.num_clusters(), p.num_states()) {
        return Err(dim_err(format!(
            "weight matrix is {}x{}, expected {}x{}",
            omega.nrows(),
            omega.ncols(),
            p.num_clusters(),
            p.num_states()
        )));
    }
    for c in 0..p.num_clusters() {
        let mut sum = 0.0;
        for s in 0..p.num_states() {
            let w = omega[(c, s)];
            if !(w >= 0.0) {
                return Err(Error::Argument(format!("negative weight at ({c}, {s})")));
            }
            if w != 0.0 && p.cluster_of(s) != c {
                return Err(Error::Argument(format!(
                    "weight on state {s} outside cluster {c}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "weights of cluster {c} sum to {sum}"
            )));
        }
    }
    Ok(())
}

/// ω(s) = 1/|cluster of s|.
pub fn uniform_weights(p: &Partition) -> WeightMatrix {
    let sizes = p.cluster_sizes();
    WeightMatrix(DMatrix::from_fn(
        p.num_clusters(),
        p.num_states(),
        |c, s| {
            if p.cluster_of(s) == c {
                1.0 / sizes[c] as f64
            } else {
                0.0
            }
        },
    ))
}

/// ω = 1 on one representative state per cluster.
pub fn dirac_weights(p: &Partition, representatives: &[usize]) -> Result<WeightMatrix> {
    if representatives.len() != p.num_clusters() {
        return Err(Error::Argument(format!(
            "{} representatives for {} clusters",
            representatives.len(),
            p.num_clusters()
        )));
    }
    let mut omega = DMatrix::zeros(p.num_clusters(), p.num_states());
    for (c, &s) in representatives.iter().enumerate() {
        if s >= p.num_states() || p.cluster_of(s) != c {
            return Err(Error::Argument(format!(
                "representative {s} is not a member of cluster {c}"
            )));
        }
        omega[(c, s)] = 1.0;
    }
    Ok(WeightMatrix(omega))
}

/// Abstract MDP with r_φ^a = Ωr^a and P_φ^a = ΩP^aΦ.
pub fn build_abstract_mdp(
    mdp: &TabularMdp,
    phi: &PartitionMatrix,
    omega: &WeightMatrix,
) -> Result<TabularMdp> {
    if phi.0.nrows() != mdp.num_states() {
        return Err(dim_err(format!(
            "partition matrix has {} rows for {} states",
            phi.0.nrows(),
            mdp.num_states()
        )));
    }
    check_weights(&omega.0, &phi.to_partition())?;
    let transitions = mdp
        .transitions()
        .iter()
        .map(|p| &omega.0 * p * &phi.0)
        .collect::<Vec<_>>();
    let rewards = mdp
        .rewards()
        .iter()
        .map(|r| &omega.0 * r)
        .collect::<Vec<_>>();
    TabularMdp::new(transitions, rewards, mdp.discount())
}

/// Probability mass that state `s` sends onto each cluster under `action`.
pub fn cluster_masses(mdp: &TabularMdp, p: &Partition, action: usize, s: usize) -> Vec<f64> {
    let mut masses = vec![0.0; p.num_clusters()];
    for (s2, &prob) in mdp.transition(action).row(s).iter().enumerate() {
        masses[p.cluster_of(s2)] += prob;
    }
    masses
}

/// Why two states of the same cluster are not bisimilar.
#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Reward { difference: f64 },
    Transition { cluster: usize, difference: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisimulationWitness {
    pub state: usize,
    pub other: usize,
    pub action: usize,
    pub kind: ViolationKind,
}

/// Checks the bisimulation conditions for every same-cluster pair of states.
pub fn is_bisimulation(
    mdp: &TabularMdp,
    p: &Partition,
    tol: f64,
) -> Result<(), BisimulationWitness> {
    assert_eq!(
        p.num_states(),
        mdp.num_states(),
        "partition does not match MDP"
    );
    for c in 0..p.num_clusters() {
        let members = p.members(c);
        if members.len() < 2 {
            continue;
        }
        for a in 0..mdp.num_actions() {
            let r = mdp.reward(a);
            let masses: Vec<Vec<f64>> = members
                .iter()
                .map(|&s| cluster_masses(mdp, p, a, s))
                .collect();
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    let (s, t) = (members[i], members[j]);
                    let difference = (r[s] - r[t]).abs();
                    if difference > tol {
                        return Err(BisimulationWitness {
                            state: s,
                            other: t,
                            action: a,
                            kind: ViolationKind::Reward { difference },
                        });
                    }
                    for (cluster, (x, y)) in masses[i].iter().zip(&masses[j]).enumerate() {
                        let difference = (x - y).abs();
                        if difference > tol {
                            return Err(BisimulationWitness {
                                state: s,
                                other: t,
                                action: a,
                                kind: ViolationKind::Transition {
                                    cluster,
                                    difference,
                                },
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Coarsest partition passing [`is_bisimulation`], by iterated splitting on
/// (reward, per-action cluster-mass) signatures until a fixpoint.
///
/// Clusters are numbered by their smallest member, so the result does not
/// depend on how states are labeled beyond that canonical renaming.
pub fn coarsest_bisimulation(mdp: &TabularMdp, tol: f64) -> Partition {
    let ns = mdp.num_states();
    let mut current = Partition {
        assignment: vec![0; ns],
        num_clusters: 1,
    };
    loop {
        let signatures: Vec<Vec<f64>> = (0..ns)
            .map(|s| {
                let mut sig = Vec::new();
                for a in 0..mdp.num_actions() {
                    sig.push(mdp.reward(a)[s]);
                    sig.extend(cluster_masses(mdp, &current, a, s));
                }
                sig
            })
            .collect();
        let next = split_by_signature(&current, &signatures, tol);
        if next.num_clusters == current.num_clusters {
            return next;
        }
        current = next;
    }
}

/// Splits each cluster into groups whose signatures lie within `tol` (max-norm)
/// of the group's first member, scanning states in index order.
fn split_by_signature(p: &Partition, signatures: &[Vec<f64>], tol: f64) -> Partition {
    let ns = p.num_states();
    let mut group = vec![0usize; ns];
    let mut reps: Vec<usize> = Vec::new();
    for s in 0..ns {
        let found = reps.iter().position(|&r| {
            p.assignment[r] == p.assignment[s]
                && signatures[r]
                    .iter()
                    .zip(&signatures[s])
                    .all(|(x, y)| (x - y).abs() <= tol)
        });
        group[s] = match found {
            Some(g) => g,
            None => {
                reps.push(s);
                reps.len() - 1
            }
        };
    }
    Partition {
        assignment: group,
        num_clusters: reps.len(),
    }
}

/// Restricts a cluster-constant policy to the abstract state space.
pub fn abstract_policy(pi: &Policy, p: &Partition) -> Result<Policy> {
    if pi.num_states() != p.num_states() {
        return Err(dim_err("policy and partition disagree on state count"));
    }
    let na = pi.num_actions();
    let mut probs = DMatrix::zeros(p.num_clusters(), na);
    for c in 0..p.num_clusters() {
        let members = p.members(c);
        let first = members[0];
        for &s in &members {
            for a in 0..na {
                if (pi.prob(s, a) - pi.prob(first, a)).abs() > 1e-12 {
                    return Err(Error::Argument(format!(
                        "policy differs between states {first} and {s} of cluster {c}"
                    )));
                }
            }
        }
        for a in 0..na {
            probs[(c, a)] = pi.prob(first, a);
        }
    }
    Policy::new(probs)
}

/// Lifts an abstract vector back to ground states: (Φv)(s) = v(φ(s)).
pub fn lift(p: &Partition, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(p.num_states(), |s, _| v[p.cluster_of(s)])
}

#![allow(dead_code)]

use model_features::abstraction::Partition;
use model_features::mdp::{Policy, TabularMdp};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stochastic_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() + 1e-3);
    for mut row in m.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
    }
    m
}

pub fn random_mdp(ns: usize, na: usize, gamma: f64, rng: &mut impl Rng) -> TabularMdp {
    let transitions = (0..na).map(|_| stochastic_rows(ns, ns, rng)).collect();
    let rewards = (0..na)
        .map(|_| DVector::from_fn(ns, |_, _| rng.random::<f64>()))
        .collect();
    TabularMdp::new(transitions, rewards, gamma).unwrap()
}

pub fn random_policy(ns: usize, na: usize, rng: &mut impl Rng) -> Policy {
    Policy::new(stochastic_rows(ns, na, rng)).unwrap()
}

/// Random partition of `ns` states into exactly `m` nonempty clusters.
pub fn random_partition(ns: usize, m: usize, rng: &mut impl Rng) -> Partition {
    let mut labels: Vec<usize> = (0..ns)
        .map(|s| if s < m { s } else { rng.random_range(0..m) })
        .collect();
    for i in (1..ns).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    Partition::new(labels).unwrap()
}

/// Dense Gaussian elimination with partial pivoting, kept independent of the
/// library's linear algebra.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = m[i][col] / m[col][col];
                for k in col..=n {
                    m[i][k] -= f * m[col][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

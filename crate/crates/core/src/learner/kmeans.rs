use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// k×n, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

fn sq_dist(data: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    data.row(i)
        .iter()
        .zip(centroids.row(c).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

fn count_distinct_rows(data: &DMatrix<f64>, limit: usize) -> usize {
    let mut distinct: Vec<usize> = Vec::new();
    for i in 0..data.nrows() {
        if !distinct.iter().any(|&j| data.row(i) == data.row(j)) {
            distinct.push(i);
            if distinct.len() >= limit {
                break;
            }
        }
    }
    distinct.len()
}

/// Lloyd's algorithm on the rows of `data` with k-means++ seeding, keeping the
/// restart with the lowest inertia. Empty clusters are re-seeded from the
/// point farthest from its centroid.
pub fn kmeans_rows(
    data: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansResult> {
    if k == 0 || k > data.nrows() {
        return Err(Error::Argument(format!(
            "k = {k} for {} rows",
            data.nrows()
        )));
    }
    let distinct = count_distinct_rows(data, k);
    if distinct < k {
        return Err(Error::DegenerateClustering { distinct, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(data, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn seed_plus_plus(data: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let rows = data.nrows();
    let mut centroids = DMatrix::zeros(k, data.ncols());
    let first = rng.random_range(0..rows);
    centroids.row_mut(0).copy_from(&data.row(first));
    let mut d2: Vec<f64> = (0..rows).map(|i| sq_dist(data, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = rows - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            if d2[chosen] == 0.0 {
                // rounding pushed us onto an existing centroid
                chosen = argmax(&d2);
            }
            chosen
        } else {
            argmax(&d2)
        };
        centroids.row_mut(c).copy_from(&data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data, i, &centroids, c));
        }
    }
    centroids
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn lloyd(data: &DMatrix<f64>, k: usize, max_iter: usize, rng: &mut impl Rng) -> KMeansResult {
    let (rows, dim) = data.shape();
    let mut centroids = seed_plus_plus(data, k, rng);
    let mut assignment = vec![usize::MAX; rows];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..rows {
            let best = (0..k)
                .map(|c| (c, sq_dist(data, i, &centroids, c)))
                .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
                .0;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        // Re-seed empty clusters from the farthest point of a cluster with
        // at least two members.
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..rows)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .map(|i| (i, sq_dist(data, i, &centroids, assignment[i])))
                    .fold((usize::MAX, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                counts[assignment[far]] -= 1;
                assignment[far] = c;
                counts[c] = 1;
                changed = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        for (i, &c) in assignment.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += data.row(i);
        }
        for c in 0..k {
            let mut row = centroids.row_mut(c);
            row.copy_from(&(sums.row(c) / counts[c] as f64));
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..rows)
        .map(|i| sq_dist(data, i, &centroids, assignment[i]))
        .sum();
    KMeansResult {
        centroids,
        assignment,
        inertia,
    }
}

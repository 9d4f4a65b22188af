use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbeddingError;
use crate::model::{FeatureMatrix, LabelVector, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// k×dim matrix, each row the mean of its assigned points.
    pub centers: Matrix,
    pub assignment: LabelVector,
    /// Sum of squared distances after each Lloyd round.
    pub objective_history: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter_rows().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest sampled proportionally
/// to squared distance from the nearest chosen center.
fn seed_plus_plus(z: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = z.n_samples();
    let dim = z.n_features();
    let mut centers = Matrix::zeros(k, dim);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(z.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(z.row(i), centers.row(0))).collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can leave target ≥ 0 past the end; fall back to the
            // last point with positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(z.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), centers.row(c)));
        }
    }
    centers
}

/// Moves, for each empty cluster, the point farthest from its current center
/// (among clusters with more than one member) into that cluster.
fn repair_empty(z: &FeatureMatrix, centers: &Matrix, assignment: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    assignment.iter().for_each(|&a| counts[a] += 1);
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignment.iter().enumerate() {
            if counts[a] <= 1 {
                continue;
            }
            let d = sq_dist(z.row(i), centers.row(a));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = empty;
            counts[empty] = 1;
        }
    }
}

fn means(z: &FeatureMatrix, assignment: &[usize], k: usize) -> Matrix {
    let dim = z.n_features();
    let mut centers = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (c, v) in centers.row_mut(a).iter_mut().zip(z.row(i)) {
            *c += v;
        }
    }
    for (a, &count) in counts.iter().enumerate() {
        if count > 0 {
            centers.row_mut(a).iter_mut().for_each(|c| *c /= count as f64);
        }
    }
    centers
}

fn objective(z: &FeatureMatrix, centers: &Matrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(z.row(i), centers.row(a)))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding. Ties in assignment go to the
/// lowest center index. Deterministic for a given seed.
pub fn kmeans(
    z: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult, EmbeddingError> {
    let n = z.n_samples();
    if k == 0 {
        return Err(EmbeddingError::ZeroClusters);
    }
    if k > n {
        return Err(EmbeddingError::TooManyClusters { k, n });
    }
    if max_iters == 0 {
        return Err(EmbeddingError::ZeroIterations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(z, k, &mut rng);
    let mut assignment: Vec<usize> = (0..n).map(|i| nearest(z.row(i), &centers).0).collect();
    let mut history = Vec::new();

    for _ in 0..max_iters {
        repair_empty(z, &centers, &mut assignment, k);
        centers = means(z, &assignment, k);
        history.push(objective(z, &centers, &assignment));
        let next: Vec<usize> = (0..n).map(|i| nearest(z.row(i), &centers).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    // if the round budget ran out, bring centers in line with the latest
    // assignment
    let refreshed = means(z, &assignment, k);
    if refreshed != centers {
        repair_empty(z, &centers, &mut assignment, k);
        centers = means(z, &assignment, k);
        history.push(objective(z, &centers, &assignment));
    }

    Ok(KMeansResult {
        centers,
        assignment: LabelVector::new(assignment),
        objective_history: history,
    })
}

//! K-means with k-means++ seeding, Lloyd iterations and independent
//! restarts. Restart `r` draws from ChaCha8 stream `r` of the configured
//! seed, so results never depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the objective improves by less than this fraction.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k x d, one centroid per row.
    pub centroids: Matrix,
    /// Sum of squared distances to the assigned centroids.
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
    /// Final objective of every restart, in restart order.
    pub restart_objectives: Vec<f64>,
}

/// Clusters the rows of `points` into `k` groups.
pub fn kmeans(points: &Matrix, k: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let (n, d) = (points.nrows(), points.ncols());
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must lie in 1..={n}"
        )));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is needed".into()));
    }
    let data = Data {
        n,
        d,
        values: (0..n)
            .flat_map(|i| points.row(i).iter().copied().collect::<Vec<_>>())
            .collect(),
    };

    let mut best: Option<Run> = None;
    let mut restart_objectives = Vec::with_capacity(cfg.restarts);
    let mut best_restart = 0;
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let run = lloyd(&data, k, cfg, &mut rng);
        restart_objectives.push(run.objective);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
            best_restart = r;
        }
    }
    let best = best.expect("restarts >= 1");

    let mut sizes = vec![0usize; k];
    best.labels.iter().for_each(|&c| sizes[c] += 1);
    let empty = sizes.iter().filter(|&&s| s == 0).count();
    if empty > 0 {
        return Err(Error::EmptyCluster { k, empty });
    }
    Ok(KMeansResult {
        centroids: Matrix::from_row_slice(k, d, &best.centroids),
        labels: best.labels,
        objective: best.objective,
        history: best.history,
        restart: best_restart,
        restart_objectives,
    })
}

struct Data {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Data {
    fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    objective: f64,
    history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_plus_plus(data: &Data, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * data.d);
    let first = rng.random_range(0..data.n);
    centroids.extend_from_slice(data.point(first));
    let mut nearest: Vec<f64> = (0..data.n)
        .map(|i| sq_dist(data.point(i), data.point(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = data.n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can walk past the last positive weight
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..data.n)
        };
        let c = data.point(pick).to_vec();
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(sq_dist(data.point(i), &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Assigns every point to its nearest centroid (lowest index on ties) and
/// returns the objective together with each point's distance.
fn assign(data: &Data, centroids: &[f64], k: usize, labels: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut objective = 0.0;
    for i in 0..data.n {
        let p = data.point(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dd = sq_dist(p, &centroids[c * data.d..(c + 1) * data.d]);
            if dd < best_d {
                best_d = dd;
                best = c;
            }
        }
        labels[i] = best;
        dist[i] = best_d;
        objective += best_d;
    }
    objective
}

fn lloyd(data: &Data, k: usize, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> Run {
    let d = data.d;
    let mut centroids = seed_plus_plus(data, k, rng);
    let mut labels = vec![0; data.n];
    let mut dist = vec![0.0; data.n];
    let mut objective = assign(data, &centroids, k, &mut labels, &mut dist);
    let mut history = vec![objective];

    for _ in 0..cfg.max_iter {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..data.n {
            let c = labels[i];
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(data.point(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for x in 0..d {
                    centroids[c * d + x] = sums[c * d + x] / counts[c] as f64;
                }
            }
        }
        // Re-seed empty clusters at the points farthest from the new means.
        if counts.contains(&0) {
            for i in 0..data.n {
                let c = labels[i];
                dist[i] = sq_dist(data.point(i), &centroids[c * d..(c + 1) * d]);
            }
            let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
            for c in empty {
                let far = (0..data.n)
                    .filter(|&i| counts[labels[i]] > 1 && dist[i] > 0.0)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] += 1;
                    dist[i] = 0.0;
                    labels[i] = c;
                    centroids[c * d..(c + 1) * d].copy_from_slice(data.point(i));
                }
            }
        }

        let previous = labels.clone();
        let new_objective = assign(data, &centroids, k, &mut labels, &mut dist);
        history.push(new_objective);
        let improvement = objective - new_objective;
        objective = new_objective;
        if labels == previous || improvement <= cfg.tol * objective.abs() {
            break;
        }
    }
    Run {
        labels,
        centroids,
        objective,
        history,
    }
}

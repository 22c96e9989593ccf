//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use super::codec::{Reader, Writer};
use crate::error::{LulcError, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 7,
            max_iters: 300,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub k: usize,
    pub dim: usize,
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    /// Assignment of every training vector under the final centroids.
    pub labels: Vec<usize>,
    /// Objective after each assignment step, starting with the seeding.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid index (ties → lowest id) and its squared distance.
fn nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(centroid, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(centroids: &[f64], data: &[f64], dim: usize) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(data.len() / dim);
    let mut dists = Vec::with_capacity(data.len() / dim);
    for x in data.chunks_exact(dim) {
        let (c, d) = nearest(centroids, dim, x);
        labels.push(c);
        dists.push(d);
    }
    let j = dists.iter().sum();
    (labels, dists, j)
}

fn plus_plus(data: &[f64], dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let n = data.len() / dim;
    let mut rng = seed::rng(seed, "kmeans/init");
    let first = rng.random_range(0..n);
    let mut centroids = data[first * dim..(first + 1) * dim].to_vec();
    let mut d2: Vec<f64> = data.chunks_exact(dim).map(|x| sq_dist(x, &centroids)).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = &data[pick * dim..(pick + 1) * dim];
        for (x, d) in data.chunks_exact(dim).zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, c));
        }
        centroids.extend_from_slice(c);
    }
    centroids
}

/// Fits `k` centroids to the rows of `data` (`n x dim`, row-major).
///
/// Each iteration recomputes centroids as cluster means, re-seeds empty
/// clusters at the point farthest from its centroid, then reassigns.
pub fn kmeans_fit(data: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<KMeansFit> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(LulcError::Shape(format!(
            "{} values do not form rows of {dim}",
            data.len()
        )));
    }
    if cfg.k == 0 {
        return Err(LulcError::Config("k must be at least 1".into()));
    }
    let n = data.len() / dim;
    if n < cfg.k {
        return Err(LulcError::InsufficientData(format!("{n} vectors for k = {}", cfg.k)));
    }
    let k = cfg.k;
    let mut centroids = plus_plus(data, dim, k, cfg.seed);
    let (mut labels, mut dists, j) = assign(&centroids, data, dim);
    let mut objective = vec![j];
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &c) in data.chunks_exact(dim).zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for (t, s) in next[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *t = s / counts[c] as f64;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                next[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
                dists[far] = 0.0;
            }
        }
        let movement = next
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let (l, d, j) = assign(&centroids, data, dim);
        labels = l;
        dists = d;
        objective.push(j);
        if movement <= cfg.tol {
            break;
        }
    }

    Ok(KMeansFit {
        model: KMeansModel {
            k,
            dim,
            centroids,
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            seed: cfg.seed,
        },
        labels,
        objective,
        iterations,
    })
}

impl KMeansModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, self.dim, x).0
    }

    /// Nearest-centroid ids, ties → lowest id.
    pub fn predict(&self, data: &[f64]) -> Result<Vec<usize>> {
        if data.len() % self.dim != 0 {
            return Err(LulcError::Shape(format!(
                "{} values do not form rows of {}",
                data.len(),
                self.dim
            )));
        }
        Ok(data.chunks_exact(self.dim).map(|x| self.predict_one(x)).collect())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usizes(&[self.k, self.dim, self.max_iters]);
        w.f64(self.tol);
        w.u64(self.seed);
        w.f64s(&self.centroids);
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        let [k, dim, max_iters] = r.usizes()?[..] else {
            return Err(LulcError::Format("bad k-means header".into()));
        };
        let tol = r.f64()?;
        let seed = r.u64()?;
        let centroids = r.f64s()?;
        if dim == 0 || centroids.len() != k * dim {
            return Err(LulcError::Format("centroid table has the wrong size".into()));
        }
        Ok(KMeansModel {
            k,
            dim,
            centroids,
            max_iters,
            tol,
            seed,
        })
    }
}

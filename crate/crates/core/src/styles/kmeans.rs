use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RESTARTS: usize = 10;
const TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of unsquared Euclidean distances from points to their centroids.
    pub qe: f64,
    /// Sum of squared distances, the objective Lloyd iterations minimize.
    pub sse: f64,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Every point coincides with a centroid already.
            Err(_) => rng.random_range(0..points.len()),
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let dim = points[0].len();
    let k = centroids.len();
    let mut assignment = vec![0; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut moved: f64 = 0.0;
        for c in 0..k {
            // An emptied cluster keeps its previous centroid.
            if counts[c] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        if moved <= TOLERANCE {
            break;
        }
    }
    let mut qe = 0.0;
    let mut sse = 0.0;
    for (a, p) in assignment.iter_mut().zip(points) {
        let (c, d) = nearest(p, &centroids);
        *a = c;
        sse += d;
        qe += d.sqrt();
    }
    KMeansResult {
        assignment,
        centroids,
        qe,
        sse,
    }
}

/// Best of `restarts` seeded k-means++ / Lloyd runs, judged by squared error.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    if k == 0 || restarts == 0 {
        return Err(Error::invalid("k and restarts must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!("k = {k} exceeds the {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("points have differing dimensions"));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let mut g = rng::seeded(rng::derive_seed(seed, "kmeans", r as u64));
        let run = lloyd(points, plus_plus_init(points, k, &mut g));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

use serde::{Deserialize, Serialize};

use super::kmeans::sq_dist;
use crate::error::{Error, Result};

/// One agglomeration step. Clusters `0..n` are the input points; the merge
/// at position `i` creates cluster `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Increase in total within-cluster sum of squares.
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

/// Ward agglomeration with merge costs updated by the Lance-Williams recurrence.
pub fn ward_cluster(points: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("Ward clustering needs at least two points"));
    }
    // Active cluster slots: id, size, and a dense cost matrix indexed by slot.
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active = vec![true; n];
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = sq_dist(&points[i], &points[j]) / 2.0;
            cost[i * n + j] = c;
            cost[j * n + i] = c;
        }
    }
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                if cost[i * n + j] < best.2 {
                    best = (i, j, cost[i * n + j]);
                }
            }
        }
        let (a, b, c_ab) = best;
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let nk = sizes[k] as f64;
            let updated = ((na + nk) * cost[a * n + k] + (nb + nk) * cost[b * n + k] - nk * c_ab) / (na + nb + nk);
            cost[a * n + k] = updated;
            cost[k * n + a] = updated;
        }
        let (left, right) = (ids[a].min(ids[b]), ids[a].max(ids[b]));
        sizes[a] += sizes[b];
        active[b] = false;
        ids[a] = n + step;
        merges.push(Merge {
            left,
            right,
            cost: c_ab,
            size: sizes[a],
        });
    }
    Ok(Dendrogram { n, merges })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Dendrogram {
    /// Point labels after applying the merges selected by `apply`, numbered
    /// by first appearance in point order.
    fn labels(&self, apply: impl Fn(usize, &Merge) -> bool) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n + self.merges.len()).collect();
        for (i, m) in self.merges.iter().enumerate() {
            if apply(i, m) {
                parent[m.left] = self.n + i;
                parent[m.right] = self.n + i;
            }
        }
        let mut label_of = std::collections::HashMap::new();
        (0..self.n)
            .map(|p| {
                let root = find(&mut parent, p);
                let next = label_of.len();
                *label_of.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Applies every merge with cost at most `threshold`.
    pub fn cut(&self, threshold: f64) -> Result<Vec<usize>> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::invalid("cut threshold must be non-negative"));
        }
        Ok(self.labels(|_, m| m.cost <= threshold))
    }

    /// Assignment with exactly `k` clusters: the last `k - 1` merges are undone.
    pub fn cut_k(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return Err(Error::invalid(format!(
                "cannot cut {} points into {k} clusters",
                self.n
            )));
        }
        let keep = self.n - k;
        Ok(self.labels(|i, _| i < keep))
    }
}

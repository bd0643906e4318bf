use std::collections::BTreeMap;

use super::kmeans::sq_dist;
use crate::error::{Error, Result};

/// `100 (QE(k-1) - QE(k)) / QE(k-1)` for consecutive entries; `None` where QE(k-1) is 0.
pub fn percent_decrease(qe: &[f64]) -> Vec<Option<f64>> {
    qe.windows(2)
        .map(|w| (w[0] != 0.0).then(|| 100.0 * (w[0] - w[1]) / w[0]))
        .collect()
}

/// Mean silhouette coefficient over all points; singleton members score 0.
pub fn silhouette(points: &[Vec<f64>], assignment: &[usize]) -> Result<f64> {
    if points.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: assignment.len(),
        });
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SilhouetteUndefined);
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        sums.fill(0.0);
        for (q, &b) in points.iter().zip(assignment) {
            sums[b] += sq_dist(p, q).sqrt();
        }
        let own = assignment[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// Normalized Shannon entropy of cluster sizes.
pub fn partition_entropy(sizes: &[usize]) -> Result<f64> {
    if sizes.len() < 2 {
        return Err(Error::invalid("entropy needs at least two clusters"));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("cluster sizes must be positive"));
    }
    let n: usize = sizes.iter().sum();
    let h: f64 = sizes
        .iter()
        .map(|&s| {
            let p = s as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    Ok(h / (sizes.len() as f64).ln())
}

pub fn cluster_sizes(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sum_a * sum_b / choose2(a.len());
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percent_decrease_series() {
        let pd = percent_decrease(&[100.0, 47.0, 37.6]);
        assert!((pd[0].unwrap() - 53.0).abs() < 1e-12);
        assert!((pd[1].unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(percent_decrease(&[5.0, 5.0]), vec![Some(0.0)]);
        assert_eq!(percent_decrease(&[5.0, 0.0, 0.0])[1], None);
    }

    #[test]
    fn silhouette_fixtures() {
        let p = vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]];
        assert_eq!(silhouette(&p, &[0, 0, 1, 1]).unwrap(), 1.0);
        let same = vec![vec![3.0]; 4];
        assert_eq!(silhouette(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(matches!(silhouette(&p, &[0, 0, 0, 0]), Err(Error::SilhouetteUndefined)));
    }

    #[test]
    fn entropy_of_equal_sizes_is_one() {
        assert!((partition_entropy(&[7, 7, 7]).unwrap() - 1.0).abs() < 1e-15);
        assert!(partition_entropy(&[3, 0]).is_err());
        assert!(partition_entropy(&[3]).is_err());
    }

    #[test]
    fn ari_identical_and_permuted() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1]).unwrap(), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() < 0.0);
    }

    proptest! {
        #[test]
        fn entropy_below_one_unless_equal(sizes in prop::collection::vec(1usize..50, 2..6)) {
            let h = partition_entropy(&sizes).unwrap();
            if sizes.iter().all(|&s| s == sizes[0]) {
                prop_assert!((h - 1.0).abs() < 1e-12);
            } else {
                prop_assert!(h < 1.0);
            }
            prop_assert!(h > 0.0);
        }
    }
}

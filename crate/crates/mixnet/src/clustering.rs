//! Hard-decision initialization: k-means with k-means++ seeding, knee-method
//! selection of the component count, and the clustering-purity metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::{sq_dist, Mat};
use crate::rng::{self, StreamId};

/// Result of a hard-decision clustering: one cluster index per point.
#[derive(Debug, Clone)]
pub struct HardClustering {
    /// Length-N cluster indices in `[0, K)`; every index occurs at least once.
    pub assignments: Vec<usize>,
    /// `K x D` cluster centers.
    pub centroids: Mat,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

impl HardClustering {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    /// Point indices of each cluster, in original order.
    pub fn cluster_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }

    /// Cluster sizes `|X^j|`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.k()];
        for &a in &self.assignments {
            out[a] += 1;
        }
        out
    }
}

fn nearest_centroid(x: &[f64], centroids: &Mat) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first center uniform, the rest sampled with
/// probability proportional to squared distance from the chosen set.
fn seed_centroids(x: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = x.rows();
    let mut centroids = Mat::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));

    let mut d2 = vec![0.0f64; n];
    for i in 0..n {
        d2[i] = sq_dist(x.row(i), centroids.row(0));
    }
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            // All remaining mass on duplicates of chosen centers.
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for i in 0..n {
            let d = sq_dist(x.row(i), centroids.row(c));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

fn lloyd(x: &Mat, mut centroids: Mat, max_iter: usize) -> (HardClustering, Vec<f64>) {
    let n = x.rows();
    let k = centroids.rows();
    let d = x.cols();
    let mut assignments = vec![0usize; n];
    let mut inertia_trace = Vec::new();

    for _ in 0..max_iter.max(1) {
        // Assignment step.
        let mut changed = false;
        let mut dists = vec![0.0f64; n];
        for i in 0..n {
            let (a, dist) = nearest_centroid(x.row(i), &centroids);
            if assignments[i] != a {
                changed = true;
            }
            assignments[i] = a;
            dists[i] = dist;
        }

        // Re-seed empty clusters to the point farthest from its centroid.
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| !taken[i] && counts[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap())
                .expect("k <= n guarantees a splittable cluster");
            taken[far] = true;
            counts[assignments[far]] -= 1;
            centroids.row_mut(c).copy_from_slice(x.row(far));
            assignments[far] = c;
            counts[c] = 1;
            dists[far] = 0.0;
            changed = true;
        }

        // Update step.
        let mut sums = Mat::zeros(k, d);
        for i in 0..n {
            let a = assignments[i];
            let xi = x.row(i);
            let row = sums.row_mut(a);
            for (s, v) in row.iter_mut().zip(xi) {
                *s += v;
            }
        }
        for c in 0..k {
            let cnt = counts[c] as f64;
            let row = sums.row_mut(c);
            for v in row.iter_mut() {
                *v /= cnt;
            }
            centroids.row_mut(c).copy_from_slice(sums.row(c));
        }

        let inertia: f64 = (0..n)
            .map(|i| sq_dist(x.row(i), centroids.row(assignments[i])))
            .sum();
        inertia_trace.push(inertia);

        if !changed {
            break;
        }
    }

    let inertia = *inertia_trace.last().unwrap();
    (
        HardClustering {
            assignments,
            centroids,
            inertia,
        },
        inertia_trace,
    )
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic given `seed`;
/// empty clusters are repaired by re-seeding at the farthest point.
pub fn kmeans(x: &Mat, k: usize, seed: u64, max_iter: usize) -> Result<HardClustering> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if x.rows() < k {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} points into {} clusters",
            x.rows(),
            k
        )));
    }
    let mut r = rng::derive(seed, StreamId::Kmeans, k as u64);
    let centroids = seed_centroids(x, k, &mut r);
    Ok(lloyd(x, centroids, max_iter).0)
}

#[cfg(test)]
fn kmeans_with_trace(x: &Mat, k: usize, seed: u64, max_iter: usize) -> (HardClustering, Vec<f64>) {
    let mut r = rng::derive(seed, StreamId::Kmeans, k as u64);
    let centroids = seed_centroids(x, k, &mut r);
    lloyd(x, centroids, max_iter)
}

/// Knee-method choice of the cluster count: runs k-means for each k in
/// `[k_min, k_max]` and returns the k whose `(k, inertia)` point lies
/// farthest (perpendicular distance) from the chord joining the curve's
/// endpoints. Ties break toward the smaller k.
pub fn knee_select_k(x: &Mat, k_min: usize, k_max: usize, seed: u64) -> Result<usize> {
    if k_min == 0 || k_min > k_max || k_max > x.rows() {
        return Err(Error::InvalidArgument(format!(
            "invalid knee range [{k_min}, {k_max}] for {} points",
            x.rows()
        )));
    }
    if k_min == k_max {
        return Ok(k_min);
    }
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let inertias: Vec<f64> = ks
        .iter()
        .map(|&k| kmeans(x, k, seed, 100).map(|c| c.inertia))
        .collect::<Result<_>>()?;

    let (x0, y0) = (ks[0] as f64, inertias[0]);
    let (x1, y1) = (*ks.last().unwrap() as f64, *inertias.last().unwrap());
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = (dx * dx + dy * dy).sqrt();

    let mut best_k = ks[0];
    let mut best_dist = f64::NEG_INFINITY;
    for (&k, &inertia) in ks.iter().zip(&inertias) {
        let cross = dx * (inertia - y0) - dy * (k as f64 - x0);
        let dist = cross.abs() / norm;
        if dist > best_dist {
            best_dist = dist;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Clustering purity: the fraction of points lying in their cluster's
/// majority class. In `(0, 1]`; 1 means clusters refine the classes.
pub fn clustering_purity(assignments: &[usize], labels: &[i64]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} assignments vs {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if assignments.is_empty() {
        return Err(Error::InvalidArgument("empty clustering".into()));
    }
    let k = assignments.iter().max().unwrap() + 1;
    let mut counts: Vec<std::collections::HashMap<i64, usize>> = vec![Default::default(); k];
    for (&a, &l) in assignments.iter().zip(labels) {
        *counts[a].entry(l).or_insert(0) += 1;
    }
    let matched: usize = counts
        .iter()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    Ok(matched as f64 / assignments.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Isotropic Gaussian blobs via Box-Muller, `per` points per center.
    fn blobs(centers: &[(f64, f64)], per: usize, sigma: f64, seed: u64) -> Mat {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                let u1: f64 = r.random_range(1e-12..1.0);
                let u2: f64 = r.random_range(0.0..std::f64::consts::TAU);
                let g1 = (-2.0 * u1.ln()).sqrt() * u2.cos();
                let g2 = (-2.0 * u1.ln()).sqrt() * u2.sin();
                rows.push(vec![cx + sigma * g1, cy + sigma * g2]);
            }
        }
        Mat::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let x = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 0.0]]).unwrap();
        let c = kmeans(&x, 1, 0, 100).unwrap();
        assert_eq!(c.assignments, vec![0, 0, 0]);
        assert!((c.centroids.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((c.centroids.get(0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_clusters_match_exhaustive_partition_search() {
        let pts = [(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)];
        let x = Mat::from_rows(&pts.map(|(a, b)| vec![a, b])).unwrap();

        // Oracle: enumerate every 2-partition, score by within-cluster sum
        // of squares around the part means.
        let mut best = f64::INFINITY;
        let mut best_mask = 0u32;
        for mask in 1..(1u32 << 4) - 1 {
            let mut cost = 0.0;
            for part in [mask, !mask & 0b1111] {
                let idx: Vec<usize> = (0..4).filter(|i| part & (1 << i) != 0).collect();
                if idx.is_empty() {
                    cost = f64::INFINITY;
                    break;
                }
                let mx = idx.iter().map(|&i| pts[i].0).sum::<f64>() / idx.len() as f64;
                let my = idx.iter().map(|&i| pts[i].1).sum::<f64>() / idx.len() as f64;
                cost += idx
                    .iter()
                    .map(|&i| (pts[i].0 - mx).powi(2) + (pts[i].1 - my).powi(2))
                    .sum::<f64>();
            }
            if cost < best {
                best = cost;
                best_mask = mask;
            }
        }
        assert_eq!(best, 1.0);
        assert!(best_mask == 0b0011 || best_mask == 0b1100);

        let c = kmeans(&x, 2, 3, 100).unwrap();
        assert!((c.inertia - 1.0).abs() < 1e-12);
        assert_eq!(c.assignments[0], c.assignments[1]);
        assert_eq!(c.assignments[2], c.assignments[3]);
        assert_ne!(c.assignments[0], c.assignments[2]);
    }

    #[test]
    fn k_equal_n_gives_zero_inertia() {
        let x = Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![5.0]]).unwrap();
        let c = kmeans(&x, 4, 1, 100).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut sorted = c.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_rejects_more_clusters_than_points() {
        let x = Mat::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(kmeans(&x, 3, 0, 10).is_err());
    }

    #[test]
    fn every_cluster_is_nonempty_even_with_duplicates() {
        let mut rows = vec![vec![0.0, 0.0]; 50];
        rows.extend(vec![vec![1.0, 1.0]; 50]);
        rows.push(vec![5.0, 5.0]);
        let x = Mat::from_rows(&rows).unwrap();
        for seed in 0..5 {
            let c = kmeans(&x, 3, seed, 100).unwrap();
            assert!(c.sizes().iter().all(|&s| s > 0), "seed {seed}: {:?}", c.sizes());
        }
    }

    #[test]
    fn inertia_is_non_increasing_across_lloyd_iterations() {
        let x = blobs(&[(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)], 60, 0.8, 5);
        for seed in 0..5 {
            let (_, trace) = kmeans_with_trace(&x, 3, seed, 100);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "trace not monotone: {:?}", trace);
            }
        }
    }

    #[test]
    fn knee_finds_three_well_separated_blobs() {
        // Separation 10 sigma=0.1: inertia collapses after k=3.
        let x = blobs(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], 50, 0.1, 9);
        let k = knee_select_k(&x, 1, 8, 4).unwrap();
        assert_eq!(k, 3);
    }

    #[test]
    fn knee_with_forced_range_returns_that_k() {
        let x = blobs(&[(0.0, 0.0)], 30, 1.0, 2);
        assert_eq!(knee_select_k(&x, 4, 4, 0).unwrap(), 4);
    }

    #[test]
    fn knee_on_single_tight_blob_stays_low() {
        // One tight 1-D blob: inertia falls like k^-2, so the curve is
        // near-flat after the first split and the chord distance peaks early.
        let mut r = rng::seeded(3);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let u1: f64 = r.random_range(1e-12..1.0);
                let u2: f64 = r.random_range(0.0..std::f64::consts::TAU);
                vec![0.05 * (-2.0 * u1.ln()).sqrt() * u2.cos()]
            })
            .collect();
        let x = Mat::from_rows(&rows).unwrap();
        let k = knee_select_k(&x, 1, 6, 7).unwrap();
        assert!(k <= 2, "got k={k}");
    }

    #[test]
    fn knee_is_deterministic_given_seed() {
        let x = blobs(&[(0.0, 0.0), (6.0, 0.0)], 40, 0.5, 11);
        let a = knee_select_k(&x, 1, 6, 13).unwrap();
        let b = knee_select_k(&x, 1, 6, 13).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn purity_matches_hand_enumerated_example() {
        // clusters {0,0,1,1} vs labels {0,1,1,1}: (1 + 2) / 4.
        let v = clustering_purity(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn purity_is_one_for_identical_partitions() {
        let v = clustering_purity(&[0, 1, 2, 0], &[0, 1, 2, 0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn purity_of_single_cluster_is_inverse_class_count() {
        // One cluster over 4 equal-size classes.
        let labels: Vec<i64> = (0..4).flat_map(|c| std::iter::repeat_n(c, 5)).collect();
        let assignments = vec![0usize; 20];
        let v = clustering_purity(&assignments, &labels).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn purity_rejects_length_mismatch() {
        assert!(clustering_purity(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn purity_is_invariant_under_cluster_relabeling(
            assignments in proptest::collection::vec(0usize..4, 1..40),
            labels_seed in 0u64..100,
        ) {
            let mut r = rng::seeded(labels_seed);
            let labels: Vec<i64> = assignments.iter().map(|_| r.random_range(0..3)).collect();
            let base = clustering_purity(&assignments, &labels).unwrap();
            // Swap cluster ids 0 and 3.
            let swapped: Vec<usize> = assignments
                .iter()
                .map(|&a| match a { 0 => 3, 3 => 0, v => v })
                .collect();
            let perm = clustering_purity(&swapped, &labels).unwrap();
            prop_assert!((base - perm).abs() < 1e-15);
        }
    }
}


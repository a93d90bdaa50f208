//! Model evaluation: Parzen-window average log-likelihood of a test set
//! under a kernel density fit to generated samples, bandwidth selection on
//! a validation set, and a nearest-neighbor audit showing that samples are
//! not training-set copies.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mat::{sq_dist, Mat};

/// Average test log-likelihood under an isotropic Gaussian Parzen window.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenEstimate {
    /// Mean per-point log density over the test set.
    pub mean_ll: f64,
    /// Sample standard deviation of the per-point values over sqrt(T).
    pub std_err: f64,
    /// Bandwidth the window used.
    pub sigma: f64,
}

/// Per-test-point log densities under the Parzen fit, via log-sum-exp.
fn parzen_point_lls(generated: &Mat, test: &Mat, sigma: f64) -> Result<Vec<f64>> {
    if generated.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(
            "parzen evaluation needs nonempty generated and test sets".into(),
        ));
    }
    if generated.cols() != test.cols() {
        return Err(Error::ShapeMismatch(format!(
            "generated dimension {} vs test dimension {}",
            generated.cols(),
            test.cols()
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "parzen sigma must be positive, got {sigma}"
        )));
    }
    let d = test.cols() as f64;
    let log_norm = -(generated.rows() as f64).ln()
        - 0.5 * d * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let inv_two_sq = 1.0 / (2.0 * sigma * sigma);

    let lls: Vec<f64> = (0..test.rows())
        .into_par_iter()
        .map(|i| {
            let x = test.row(i);
            let mut max = f64::NEG_INFINITY;
            let mut exps: Vec<f64> = Vec::with_capacity(generated.rows());
            for y in generated.iter_rows() {
                let e = -sq_dist(x, y) * inv_two_sq;
                exps.push(e);
                if e > max {
                    max = e;
                }
            }
            let sum: f64 = exps.iter().map(|&e| (e - max).exp()).sum();
            max + sum.ln() + log_norm
        })
        .collect();
    Ok(lls)
}

/// Mean over test points of `log[(1/S) sum_s N(x | y_s, sigma^2 I)]`.
pub fn parzen_log_likelihood(generated: &Mat, test: &Mat, sigma: f64) -> Result<ParzenEstimate> {
    let lls = parzen_point_lls(generated, test, sigma)?;
    let t = lls.len() as f64;
    let mean_ll = lls.iter().sum::<f64>() / t;
    let std_err = if lls.len() > 1 {
        let var = lls.iter().map(|l| (l - mean_ll) * (l - mean_ll)).sum::<f64>() / (t - 1.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    Ok(ParzenEstimate {
        mean_ll,
        std_err,
        sigma,
    })
}

/// Returns the grid bandwidth with the highest validation mean
/// log-likelihood. Ties break toward the earlier grid entry.
pub fn select_parzen_sigma(generated: &Mat, validation: &Mat, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sigma grid".into()));
    }
    let mut best = grid[0];
    let mut best_ll = f64::NEG_INFINITY;
    for &sigma in grid {
        let est = parzen_log_likelihood(generated, validation, sigma)?;
        if est.mean_ll > best_ll {
            best_ll = est.mean_ll;
            best = sigma;
        }
    }
    Ok(best)
}

/// For every generated sample, the index and Euclidean distance of its
/// nearest training point (ties go to the lower index).
pub fn nearest_neighbor_audit(generated: &Mat, train: &Mat) -> Result<Vec<(usize, f64)>> {
    if generated.is_empty() || train.is_empty() {
        return Err(Error::InvalidArgument(
            "nearest-neighbor audit needs nonempty sets".into(),
        ));
    }
    if generated.cols() != train.cols() {
        return Err(Error::ShapeMismatch(format!(
            "generated dimension {} vs train dimension {}",
            generated.cols(),
            train.cols()
        )));
    }
    Ok((0..generated.rows())
        .into_par_iter()
        .map(|i| {
            let g = generated.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, t) in train.iter_rows().enumerate() {
                let d = sq_dist(g, t);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            (best, best_d.sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut r = rng::seeded(seed);
        let mut m = Mat::zeros(rows, cols);
        for v in m.data_mut() {
            *v = r.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn single_kernel_at_its_mode_matches_closed_form() {
        let generated = Mat::from_rows(&[vec![0.0]]).unwrap();
        let test = Mat::from_rows(&[vec![0.0]]).unwrap();
        let est = parzen_log_likelihood(&generated, &test, 1.0).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((est.mean_ll - want).abs() < 1e-14);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn single_kernel_at_distance_matches_closed_form() {
        let d = 1.7;
        let generated = Mat::from_rows(&[vec![0.0]]).unwrap();
        let test = Mat::from_rows(&[vec![d]]).unwrap();
        let est = parzen_log_likelihood(&generated, &test, 1.0).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI).ln() - d * d / 2.0;
        assert!((est.mean_ll - want).abs() < 1e-14);
    }

    #[test]
    fn matches_naive_density_oracle() {
        // Direct per-point density summation without log-sum-exp; only valid
        // at small scale where nothing underflows.
        let generated = random_mat(20, 3, 1);
        let test = random_mat(10, 3, 2);
        let sigma = 0.8;
        let est = parzen_log_likelihood(&generated, &test, sigma).unwrap();

        let d = 3.0;
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d / 2.0);
        let mut total = 0.0;
        for i in 0..test.rows() {
            let mut density = 0.0;
            for j in 0..generated.rows() {
                let sq = sq_dist(test.row(i), generated.row(j));
                density += norm * (-sq / (2.0 * sigma * sigma)).exp();
            }
            total += (density / generated.rows() as f64).ln();
        }
        let want = total / test.rows() as f64;
        assert!((est.mean_ll - want).abs() < 1e-10, "{} vs {want}", est.mean_ll);
    }

    #[test]
    fn invariant_under_permuting_the_generated_set() {
        let generated = random_mat(30, 2, 3);
        let test = random_mat(12, 2, 4);
        let perm: Vec<usize> = (0..30).rev().collect();
        let shuffled = generated.select_rows(&perm);
        let a = parzen_log_likelihood(&generated, &test, 0.5).unwrap();
        let b = parzen_log_likelihood(&shuffled, &test, 0.5).unwrap();
        assert!((a.mean_ll - b.mean_ll).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_duplicating_the_generated_set() {
        let generated = random_mat(15, 2, 5);
        let test = random_mat(8, 2, 6);
        let doubled_idx: Vec<usize> = (0..15).chain(0..15).collect();
        let doubled = generated.select_rows(&doubled_idx);
        let a = parzen_log_likelihood(&generated, &test, 0.4).unwrap();
        let b = parzen_log_likelihood(&doubled, &test, 0.4).unwrap();
        assert!((a.mean_ll - b.mean_ll).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sigma() {
        let m = random_mat(3, 1, 7);
        assert!(parzen_log_likelihood(&m, &m, 0.0).is_err());
        assert!(parzen_log_likelihood(&m, &m, -1.0).is_err());
    }

    #[test]
    fn sigma_selection_on_singleton_grid_is_forced() {
        let generated = random_mat(10, 2, 8);
        let validation = random_mat(5, 2, 9);
        assert_eq!(
            select_parzen_sigma(&generated, &validation, &[0.37]).unwrap(),
            0.37
        );
    }

    #[test]
    fn sigma_selection_matches_brute_force_over_the_grid() {
        let generated = random_mat(40, 2, 10);
        let validation = generated.clone();
        let grid = [0.1, 1.0, 10.0];
        let picked = select_parzen_sigma(&generated, &validation, &grid).unwrap();
        let lls: Vec<f64> = grid
            .iter()
            .map(|&s| parzen_log_likelihood(&generated, &validation, s).unwrap().mean_ll)
            .collect();
        let best = grid[lls
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0];
        assert_eq!(picked, best);
    }

    #[test]
    fn adding_a_strictly_worse_sigma_never_changes_the_selection() {
        let generated = random_mat(25, 2, 11);
        let validation = random_mat(10, 2, 12);
        let grid = [0.2, 0.5, 1.0];
        let picked = select_parzen_sigma(&generated, &validation, &grid).unwrap();
        // 1e6 flattens the density to ~0 everywhere: strictly worse.
        let extended = [0.2, 0.5, 1.0, 1e6];
        let picked2 = select_parzen_sigma(&generated, &validation, &extended).unwrap();
        assert_eq!(picked, picked2);
        assert!(select_parzen_sigma(&generated, &validation, &[]).is_err());
    }

    #[test]
    fn audit_finds_exact_copies_at_distance_zero() {
        let train = random_mat(20, 3, 13);
        let subset: Vec<usize> = vec![4, 9, 17];
        let generated = train.select_rows(&subset);
        let audit = nearest_neighbor_audit(&generated, &train).unwrap();
        for (k, &(idx, dist)) in audit.iter().enumerate() {
            assert_eq!(idx, subset[k]);
            assert_eq!(dist, 0.0);
        }
    }

    #[test]
    fn audit_breaks_ties_toward_the_lower_index() {
        let train = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let generated = Mat::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let audit = nearest_neighbor_audit(&generated, &train).unwrap();
        assert_eq!(audit[0].0, 0);
        assert!((audit[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn audit_matches_an_independent_rescan() {
        let train = random_mat(50, 4, 14);
        let generated = random_mat(30, 4, 15);
        let audit = nearest_neighbor_audit(&generated, &train).unwrap();
        // Re-scan with the loops inverted.
        let mut best = vec![(usize::MAX, f64::INFINITY); generated.rows()];
        for j in 0..train.rows() {
            for i in 0..generated.rows() {
                let d = sq_dist(generated.row(i), train.row(j)).sqrt();
                if d < best[i].1 {
                    best[i] = (j, d);
                }
            }
        }
        for (a, b) in audit.iter().zip(&best) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
    }
}

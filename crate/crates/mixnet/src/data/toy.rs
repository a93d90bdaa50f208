//! The three 2-D toy datasets: two interlocking moons, a moon inside a
//! circle, and two concentric circles. Ground-truth labels come from the
//! construction; coordinates are min-max normalized to the unit square.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{self, StreamId};

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    TwoMoon,
    MoonCircle,
    TwoCircle,
}

impl std::str::FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ToyKind> {
        match s {
            "two_moon" => Ok(ToyKind::TwoMoon),
            "moon_circle" => Ok(ToyKind::MoonCircle),
            "two_circle" => Ok(ToyKind::TwoCircle),
            other => Err(Error::InvalidArgument(format!(
                "unknown toy kind '{other}' (expected two_moon, moon_circle, or two_circle)"
            ))),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random_range(1e-300..1.0);
    let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Generates `n` points of the requested kind with isotropic Gaussian noise
/// of standard deviation `noise` (in construction units), deterministic in
/// `seed`. Labels 0 and 1 split `ceil(n/2)` / `floor(n/2)`.
pub fn gen_toy(kind: ToyKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "toy datasets need at least 2 points, got {n}"
        )));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!("bad noise level {noise}")));
    }
    let mut r = rng::derive(seed, StreamId::Toy, kind as u64);
    let n_first = n - n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);

    for i in 0..n {
        let first = i < n_first;
        let (mut x, mut y) = match kind {
            ToyKind::TwoMoon => {
                let t = r.random_range(0.0..std::f64::consts::PI);
                if first {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                }
            }
            ToyKind::MoonCircle => {
                // A circle nested in the moon's concave pocket.
                if first {
                    let t = r.random_range(0.0..std::f64::consts::PI);
                    (t.cos(), t.sin())
                } else {
                    let t = r.random_range(0.0..std::f64::consts::TAU);
                    (0.25 * t.cos(), 0.25 + 0.25 * t.sin())
                }
            }
            ToyKind::TwoCircle => {
                let t = r.random_range(0.0..std::f64::consts::TAU);
                let radius = if first { 1.0 } else { 0.3 };
                (radius * t.cos(), radius * t.sin())
            }
        };
        if noise > 0.0 {
            x += noise * gaussian(&mut r);
            y += noise * gaussian(&mut r);
        }
        rows.push(vec![x, y]);
        labels.push(i64::from(!first));
    }

    Dataset::from_raw(Mat::from_rows(&rows)?, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_two_circle_radii_are_exact() {
        let ds = gen_toy(ToyKind::TwoCircle, 100, 0.0, 5).unwrap();
        let raw = ds.original_data();
        let labels = ds.labels.as_ref().unwrap();
        for (row, &label) in raw.iter_rows().zip(labels) {
            let radius = (row[0] * row[0] + row[1] * row[1]).sqrt();
            let expected = if label == 0 { 1.0 } else { 0.5 };
            assert!(
                (radius - expected).abs() < 1e-9,
                "label {label} radius {radius}"
            );
        }
    }

    #[test]
    fn two_moon_labels_are_exactly_balanced() {
        let ds = gen_toy(ToyKind::TwoMoon, 4000, 0.08, 1).unwrap();
        let labels = ds.labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 2000);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 2000);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = gen_toy(ToyKind::MoonCircle, 500, 0.08, 42).unwrap();
        let b = gen_toy(ToyKind::MoonCircle, 500, 0.08, 42).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
        let c = gen_toy(ToyKind::MoonCircle, 500, 0.08, 43).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn normalized_coordinates_fill_the_unit_square() {
        let ds = gen_toy(ToyKind::TwoMoon, 1000, 0.05, 9).unwrap();
        assert!(ds.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn kind_parsing_rejects_unknown_names() {
        assert!("two_moon".parse::<ToyKind>().is_ok());
        assert!("mystery".parse::<ToyKind>().is_err());
    }
}

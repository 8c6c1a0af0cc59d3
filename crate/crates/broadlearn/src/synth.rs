//! Seeded synthetic dataset generators, used by the examples and by the
//! acceptance suite when no real data is on disk.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::Result;
use crate::rng::stream_rng;

const TAG: u64 = 0x53594e54; // "SYNT"

/// Isotropic Gaussian blobs: one center row per class, `counts[c]` samples
/// per class, shared standard deviation.
pub fn gaussian_blobs(
    centers: &Array2<f64>,
    counts: &[usize],
    std: f64,
    name: &str,
    seed: u64,
) -> Result<Dataset> {
    assert_eq!(centers.nrows(), counts.len(), "one center per class");
    let dim = centers.ncols();
    let total: usize = counts.iter().sum();
    let mut rng = stream_rng(seed, TAG);
    let mut features = Array2::zeros((total, dim));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for j in 0..dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features[(row, j)] = centers[(class, j)] + std * noise;
            }
            labels.push(class);
            row += 1;
        }
    }
    Dataset::new(features, labels, counts.len(), name)
}

/// Rotates 2-D features counter-clockwise by `degrees` about the origin.
pub fn rotate_2d(features: &Array2<f64>, degrees: f64) -> Array2<f64> {
    assert_eq!(features.ncols(), 2, "rotation is defined for 2-D features");
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut out = features.clone();
    for mut row in out.rows_mut() {
        let (x, y) = (row[0], row[1]);
        row[0] = cos * x - sin * y;
        row[1] = sin * x + cos * y;
    }
    out
}

/// Adds a constant offset to every row.
pub fn shift(features: &Array2<f64>, offset: &[f64]) -> Array2<f64> {
    assert_eq!(features.ncols(), offset.len());
    let mut out = features.clone();
    for mut row in out.rows_mut() {
        for (v, o) in row.iter_mut().zip(offset) {
            *v += o;
        }
    }
    out
}

/// A domain-shifted copy of a 2-D dataset: rotated then translated, same
/// labels and class layout.
pub fn shifted_domain(source: &Dataset, degrees: f64, offset: &[f64], name: &str) -> Result<Dataset> {
    let rotated = rotate_2d(&source.features, degrees);
    Dataset::new(
        shift(&rotated, offset),
        source.labels.clone(),
        source.num_classes,
        name,
    )
}

/// Uniform random matrix in [-1, 1), handy for quick numeric instances.
pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, TAG ^ 1);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

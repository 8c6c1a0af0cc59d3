//! Locally-linear-embedding neighborhood graph.
//!
//! Each training row is expressed as an affine combination (weights summing
//! to one) of its k nearest neighbors. The reconstruction weights V feed the
//! graph matrix `M = (I − V)ᵀ(I − V)`, whose quadratic form
//! `Tr(YᵀMY) = Σᵢ ‖yᵢ − Σⱼ Vᵢⱼ yⱼ‖²` penalizes outputs that break the local
//! linear structure of the inputs.

use std::io::Write;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;

/// Row-sparse reconstruction weights: row i holds `(column, value)` pairs
/// for its neighbors only, with `V_ii = 0` and each row summing to one.
#[derive(Debug, Clone)]
pub struct ReconstructionWeights {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl ReconstructionWeights {
    pub fn to_dense(&self) -> Array2<f64> {
        let mut v = Array2::zeros((self.n, self.n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                v[(i, j)] = w;
            }
        }
        v
    }

    /// `(I − V)·Y` without materializing a dense V.
    pub fn residual_operator(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut out = y.clone();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                for c in 0..y.ncols() {
                    out[(i, c)] -= w * y[(j, c)];
                }
            }
        }
        out
    }
}

/// Exact k-nearest-neighbor sets under Euclidean distance, self excluded,
/// distance ties broken by the lower index.
pub fn knn_neighbors(x: &Array2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = x.nrows();
    if k < 1 || k >= n {
        return Err(Error::Parameter(format!(
            "neighbor count k={k} must satisfy 1 <= k <= N-1 (N={n})"
        )));
    }
    let mut result = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i);
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2 = xi
                    .iter()
                    .zip(x.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, j)
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        result.push(dists[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(result)
}

/// Constrained reconstruction weights: per row i, minimize
/// `‖xᵢ − Σⱼ Vᵢⱼ xⱼ‖²` over the neighbors, subject to `Σⱼ Vᵢⱼ = 1`.
///
/// The local system uses the Gram matrix of neighbor differences,
/// `G_ab = (xᵢ−x_a)·(xᵢ−x_b)`, regularized by `reg·tr(G)/k·I` (with an
/// absolute 1e-12 floor when the trace vanishes, i.e. all neighbors
/// coincide with xᵢ). Solving `G w = 1` and renormalizing to unit sum gives
/// the constrained minimizer.
pub fn reconstruction_weights(
    x: &Array2<f64>,
    neighbors: &[Vec<usize>],
    reg: f64,
) -> Result<ReconstructionWeights> {
    if reg < 0.0 {
        return Err(Error::Parameter(format!(
            "gram regularization must be nonnegative, got {reg}"
        )));
    }
    let n = x.nrows();
    if neighbors.len() != n {
        return Err(Error::Data(format!(
            "{} neighbor sets for {n} samples",
            neighbors.len()
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, set) in neighbors.iter().enumerate() {
        let k = set.len();
        if k == 0 {
            return Err(Error::Data(format!("sample {i} has an empty neighbor set")));
        }
        let xi = x.row(i);
        let diffs: Vec<Array1<f64>> = set
            .iter()
            .map(|&j| (&xi - &x.row(j)).to_owned())
            .collect();
        let mut gram = Array2::zeros((k, k));
        for a in 0..k {
            for b in a..k {
                let v = diffs[a].dot(&diffs[b]);
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let trace: f64 = (0..k).map(|a| gram[(a, a)]).sum();
        let ridge = if trace > 0.0 { reg * trace / k as f64 } else { 1e-12 };
        for a in 0..k {
            gram[(a, a)] += ridge;
        }
        let ones = Array2::ones((k, 1));
        let w = linalg::solve_spd(&gram, &ones)
            .map_err(|e| Error::Numeric(format!("sample {i}: singular local system ({e})")))?;
        let sum: f64 = w.iter().sum();
        if !sum.is_finite() || sum.abs() < f64::MIN_POSITIVE {
            return Err(Error::Numeric(format!(
                "sample {i}: reconstruction weights do not normalize (sum {sum})"
            )));
        }
        rows.push(set.iter().zip(w.iter()).map(|(&j, &v)| (j, v / sum)).collect());
    }
    Ok(ReconstructionWeights { n, rows })
}

/// Dense graph matrix `M = (I − V)ᵀ(I − V)`, symmetrized to purge round-off.
pub fn graph_matrix(weights: &ReconstructionWeights) -> Array2<f64> {
    let n = weights.n;
    let mut residual = Array2::eye(n);
    for (i, row) in weights.rows.iter().enumerate() {
        for &(j, w) in row {
            residual[(i, j)] -= w;
        }
    }
    let m = residual.t().dot(&residual);
    let mut sym = &m + &m.t();
    sym.mapv_inplace(|v| v / 2.0);
    sym
}

/// The assembled neighborhood graph over one training matrix.
#[derive(Debug, Clone)]
pub struct LleGraph {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
    pub weights: ReconstructionWeights,
    pub graph: Array2<f64>,
}

impl LleGraph {
    pub fn build(x: &Array2<f64>, k: usize, reg: f64) -> Result<Self> {
        let neighbors = knn_neighbors(x, k)?;
        let weights = reconstruction_weights(x, &neighbors, reg)?;
        let graph = graph_matrix(&weights);
        Ok(Self {
            k,
            neighbors,
            weights,
            graph,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.n
    }

    pub fn is_empty(&self) -> bool {
        self.weights.n == 0
    }

    /// Coordinate-format dump of V: one `row col value` line per nonzero.
    pub fn write_weights_coo(&self, mut out: impl Write) -> Result<()> {
        for (i, row) in self.weights.rows.iter().enumerate() {
            for &(j, w) in row {
                writeln!(out, "{i} {j} {w}")?;
            }
        }
        Ok(())
    }

    /// Coordinate-format dump of M (nonzero entries only).
    pub fn write_graph_coo(&self, mut out: impl Write) -> Result<()> {
        for ((i, j), &v) in self.graph.indexed_iter() {
            if v != 0.0 {
                writeln!(out, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }
}

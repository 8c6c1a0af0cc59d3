//! The broad learning system: random feature nodes, optional sparse
//! autoencoder fine-tuning, random enhancement nodes, and a closed-form
//! ridge-regression output layer.
//!
//! The hidden representation of input `X` is `A = [Mⁿ | Eᵐ]`, where group
//! `j` of the feature nodes is `φ(X·W_ej + b_ej)` and group `i` of the
//! enhancement nodes is `ξ(Mⁿ·W_hi + b_hi)`. All hidden-layer weights are
//! drawn once from a seeded PRNG and frozen; only the output weights are
//! learned.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{one_hot, Dataset, Normalization, Normalizer};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply_inplace(&self, m: &mut Array2<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Tanh => m.mapv_inplace(f64::tanh),
            Activation::Sigmoid => m.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Relu => m.mapv_inplace(|v| v.max(0.0)),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Parameter(format!(
                "unknown activation {other:?} (expected linear|tanh|sigmoid|relu)"
            ))),
        }
    }
}

/// Structural hyper-parameters of the network.
///
/// `feature_groups` (n) groups of `feature_nodes` (q) nodes each feed
/// `enhancement_groups` (m) groups of `enhancement_nodes` (r) nodes, for a
/// hidden width of `F = n·q + m·r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlsConfig {
    pub feature_groups: usize,
    pub feature_nodes: usize,
    pub enhancement_groups: usize,
    pub enhancement_nodes: usize,
    pub feature_activation: Activation,
    pub enhancement_activation: Activation,
    /// Scale applied to the column-normalized enhancement weights; keeps a
    /// saturating activation in its responsive range.
    pub enhancement_scale: f64,
    /// L1 penalty of the sparse-autoencoder fine-tune.
    pub sae_lambda: f64,
    /// Soft-thresholding iterations; 0 disables the fine-tune and keeps the
    /// raw random feature weights.
    pub sae_iters: usize,
    /// Ridge coefficient of the output-layer solve.
    pub ridge_lambda: f64,
}

impl Default for BlsConfig {
    fn default() -> Self {
        Self {
            feature_groups: 20,
            feature_nodes: 10,
            enhancement_groups: 1,
            enhancement_nodes: 400,
            feature_activation: Activation::Linear,
            enhancement_activation: Activation::Tanh,
            enhancement_scale: 0.8,
            sae_lambda: 1e-3,
            sae_iters: 50,
            ridge_lambda: 1e-8,
        }
    }
}

impl BlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_groups < 1
            || self.feature_nodes < 1
            || self.enhancement_groups < 1
            || self.enhancement_nodes < 1
        {
            return Err(Error::Parameter(
                "feature/enhancement group counts and widths must be at least 1".into(),
            ));
        }
        if self.enhancement_activation == Activation::Linear {
            return Err(Error::Parameter(
                "enhancement activation must be nonlinear (tanh|sigmoid|relu)".into(),
            ));
        }
        if !(self.enhancement_scale > 0.0) {
            return Err(Error::Parameter(format!(
                "enhancement scale must be positive, got {}",
                self.enhancement_scale
            )));
        }
        if self.sae_lambda < 0.0 {
            return Err(Error::Parameter(format!(
                "sae_lambda must be nonnegative, got {}",
                self.sae_lambda
            )));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::Parameter(format!(
                "ridge_lambda must be nonnegative, got {}",
                self.ridge_lambda
            )));
        }
        Ok(())
    }

    /// Hidden width F = n·q + m·r.
    pub fn hidden_width(&self) -> usize {
        self.feature_groups * self.feature_nodes
            + self.enhancement_groups * self.enhancement_nodes
    }
}

/// One hidden group: a weight matrix and a bias row broadcast over samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupMapping {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All frozen hidden-layer parameters. Applying the same mapping to the
/// same input always produces the same hidden matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlsMapping {
    pub config: BlsConfig,
    pub input_dim: usize,
    pub feature: Vec<GroupMapping>,
    pub enhancement: Vec<GroupMapping>,
    /// Set when a sparse fine-tune hit an all-zero pre-activation block and
    /// fell back to zero weights.
    pub sae_degenerate: bool,
}

/// Draws the frozen random mapping and, when configured, replaces each
/// feature weight block with its sparse-autoencoder solution.
///
/// Draw order is fixed (all feature groups, then all enhancement groups) so
/// a given seed and config always yield the same matrices.
pub fn init_mapping(
    input_dim: usize,
    config: &BlsConfig,
    train_features: Option<&Array2<f64>>,
    seed: u64,
) -> Result<BlsMapping> {
    config.validate()?;
    if input_dim < 1 {
        return Err(Error::Parameter("input dimension must be at least 1".into()));
    }
    if config.sae_iters > 0 && train_features.is_none() {
        return Err(Error::Config(
            "sparse-autoencoder fine-tuning requires training features".into(),
        ));
    }
    let mut rng = stream_rng(seed, tags::MAPPING);
    let mut uniform =
        |rows: usize, cols: usize| Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..=1.0));

    let q = config.feature_nodes;
    let r = config.enhancement_nodes;
    let mut feature = Vec::with_capacity(config.feature_groups);
    for _ in 0..config.feature_groups {
        let weight = uniform(input_dim, q);
        let bias = uniform(1, q).row(0).to_owned();
        feature.push(GroupMapping { weight, bias });
    }
    let nq = config.feature_groups * q;
    let mut enhancement = Vec::with_capacity(config.enhancement_groups);
    for _ in 0..config.enhancement_groups {
        let mut weight = uniform(nq, r);
        // Unit-norm columns scaled by s.
        for mut col in weight.columns_mut() {
            let norm = col.dot(&col).sqrt().max(f64::MIN_POSITIVE);
            col.mapv_inplace(|v| v / norm * config.enhancement_scale);
        }
        let bias = uniform(1, r).row(0).to_owned();
        enhancement.push(GroupMapping { weight, bias });
    }

    let mut sae_degenerate = false;
    if config.sae_iters > 0 {
        let x = train_features.expect("checked above");
        if x.ncols() != input_dim {
            return Err(Error::Data(format!(
                "training features have {} columns, expected {input_dim}",
                x.ncols()
            )));
        }
        for group in &mut feature {
            let mut z = x.dot(&group.weight);
            z += &group.bias;
            let tuned = sparse_finetune(&z, x, config.sae_lambda, config.sae_iters)?;
            sae_degenerate |= tuned.degenerate;
            group.weight = tuned.weights;
        }
    }

    Ok(BlsMapping {
        config: config.clone(),
        input_dim,
        feature,
        enhancement,
        sae_degenerate,
    })
}

/// Result of a sparse fine-tune; `degenerate` marks the all-zero fallback.
#[derive(Debug, Clone)]
pub struct SparseFinetune {
    pub weights: Array2<f64>,
    pub degenerate: bool,
}

/// Sparse linear autoencoder solve: finds `W` minimizing
/// `‖Z·W − X‖² + λ‖W‖₁` by ISTA and returns `Wᵀ` (shape D×q), ready to be
/// installed as a feature weight block.
///
/// The step size is `1/L` with `L` a power-iteration estimate of the top
/// eigenvalue of `ZᵀZ`, padded 2% to stay on the stable side.
pub fn sparse_finetune(
    z: &Array2<f64>,
    x: &Array2<f64>,
    sae_lambda: f64,
    iters: usize,
) -> Result<SparseFinetune> {
    if iters < 1 {
        return Err(Error::Parameter("sparse_finetune requires iters >= 1".into()));
    }
    if z.nrows() != x.nrows() {
        return Err(Error::Data(format!(
            "pre-activation has {} rows, input has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    if sae_lambda < 0.0 {
        return Err(Error::Parameter(format!(
            "sae_lambda must be nonnegative, got {sae_lambda}"
        )));
    }
    let q = z.ncols();
    let d = x.ncols();
    // Gram form keeps each iteration at O(q²·D) regardless of sample count.
    let gram = z.t().dot(z);
    let zx = z.t().dot(x);
    let lip = linalg::largest_eigenvalue_psd(&gram, 150) * 1.02;
    if lip <= f64::MIN_POSITIVE {
        return Ok(SparseFinetune {
            weights: Array2::zeros((d, q)),
            degenerate: true,
        });
    }
    let step = 1.0 / lip;
    let threshold = step * sae_lambda / 2.0;
    let mut w: Array2<f64> = Array2::zeros((q, d));
    for _ in 0..iters {
        let grad = gram.dot(&w) - &zx;
        w.zip_mut_with(&grad, |wi, gi| {
            let v = *wi - step * gi;
            *wi = v.signum() * (v.abs() - threshold).max(0.0);
        });
    }
    Ok(SparseFinetune {
        weights: w.t().to_owned(),
        degenerate: false,
    })
}

/// Feature-node matrix Mⁿ: per group, `φ(X·W + b)`, groups concatenated.
pub fn feature_nodes(x: &Array2<f64>, mapping: &BlsMapping) -> Result<Array2<f64>> {
    if x.ncols() != mapping.input_dim {
        return Err(Error::Data(format!(
            "input has {} features, mapping expects {}",
            x.ncols(),
            mapping.input_dim
        )));
    }
    let q = mapping.config.feature_nodes;
    let mut out = Array2::zeros((x.nrows(), mapping.config.feature_groups * q));
    for (j, group) in mapping.feature.iter().enumerate() {
        let mut block = x.dot(&group.weight);
        block += &group.bias;
        mapping.config.feature_activation.apply_inplace(&mut block);
        out.slice_mut(s![.., j * q..(j + 1) * q]).assign(&block);
    }
    Ok(out)
}

/// Enhancement-node matrix Eᵐ computed from the concatenated feature nodes.
pub fn enhancement_nodes(feature_matrix: &Array2<f64>, mapping: &BlsMapping) -> Result<Array2<f64>> {
    let nq = mapping.config.feature_groups * mapping.config.feature_nodes;
    if feature_matrix.ncols() != nq {
        return Err(Error::Data(format!(
            "feature matrix has {} columns, mapping expects {nq}",
            feature_matrix.ncols()
        )));
    }
    let r = mapping.config.enhancement_nodes;
    let mut out = Array2::zeros((feature_matrix.nrows(), mapping.config.enhancement_groups * r));
    for (i, group) in mapping.enhancement.iter().enumerate() {
        let mut block = feature_matrix.dot(&group.weight);
        block += &group.bias;
        mapping.config.enhancement_activation.apply_inplace(&mut block);
        out.slice_mut(s![.., i * r..(i + 1) * r]).assign(&block);
    }
    Ok(out)
}

/// Full hidden representation `A = [Mⁿ | Eᵐ]`.
pub fn hidden(x: &Array2<f64>, mapping: &BlsMapping) -> Result<Array2<f64>> {
    let m = feature_nodes(x, mapping)?;
    let e = enhancement_nodes(&m, mapping)?;
    Ok(concatenate(Axis(1), &[m.view(), e.view()]).expect("row counts match"))
}

/// Output-layer ridge solve `W = (AᵀA + λI)⁻¹AᵀY` via Cholesky. When the
/// Gram matrix is numerically too close to singular to factorize, the same
/// ridge solution is recovered from an SVD of `A` instead; with λ = 0 that
/// is the singular-value-thresholded pseudo-inverse `A⁺Y`.
pub fn bls_train(a: &Array2<f64>, y: &Array2<f64>, ridge_lambda: f64) -> Result<Array2<f64>> {
    if a.nrows() != y.nrows() {
        return Err(Error::Data(format!(
            "hidden matrix has {} rows, labels have {}",
            a.nrows(),
            y.nrows()
        )));
    }
    if ridge_lambda < 0.0 {
        return Err(Error::Parameter(format!(
            "ridge_lambda must be nonnegative, got {ridge_lambda}"
        )));
    }
    if !linalg::all_finite(a) || !linalg::all_finite(y) {
        return Err(Error::Numeric("non-finite entries in the ridge system".into()));
    }
    let mut gram = a.t().dot(a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge_lambda;
    }
    let rhs = a.t().dot(y);
    match linalg::solve_spd(&gram, &rhs) {
        Ok(w) => Ok(w),
        Err(_) => linalg::ridge_via_svd(a, y, ridge_lambda),
    }
}

/// A trained plain-BLS classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlsModel {
    pub mapping: BlsMapping,
    pub normalizer: Option<Normalizer>,
    /// F×C output weights.
    pub weights: Array2<f64>,
    pub num_classes: usize,
}

/// Fits a plain BLS classifier on one labeled dataset.
pub fn bls_fit(
    train: &Dataset,
    config: &BlsConfig,
    normalization: Normalization,
    seed: u64,
) -> Result<BlsModel> {
    let normalizer = match normalization {
        Normalization::None => None,
        Normalization::Zscore => Some(Normalizer::fit(&train.features)?),
    };
    let x = match &normalizer {
        Some(n) => n.apply(&train.features)?,
        None => train.features.clone(),
    };
    let mapping = init_mapping(train.dim(), config, Some(&x), seed)?;
    let a = hidden(&x, &mapping)?;
    let y = one_hot(&train.labels, train.num_classes)?;
    let weights = bls_train(&a, &y, config.ridge_lambda)?;
    Ok(BlsModel {
        mapping,
        normalizer,
        weights,
        num_classes: train.num_classes,
    })
}

/// Raw class scores and argmax labels (ties go to the lowest class index).
pub fn bls_predict(model: &BlsModel, x: &Array2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
    let x = match &model.normalizer {
        Some(n) => n.apply(x)?,
        None => x.clone(),
    };
    let a = hidden(&x, &model.mapping)?;
    let scores = a.dot(&model.weights);
    let labels = linalg::row_argmax(&scores);
    Ok((scores, labels))
}

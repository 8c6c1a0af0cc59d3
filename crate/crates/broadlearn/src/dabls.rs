//! Domain-adaptation trainer.
//!
//! Couples the source-domain and labeled-target losses of a BLS classifier
//! with per-sample class-imbalance weights and the LLE graph penalty, and
//! solves for the shared output weights in closed form:
//!
//! ```text
//! L(W) = ‖W‖²/2 + c_s‖δ_s(Y_s − A_s W)‖²/2 + c_t‖δ_t(Y_t − A_t W)‖²/2
//!        + σ·Tr((A W)ᵀ M (A W))/2,        A = [A_s; A_t]
//! W* = (I + c_s A_sᵀδ_s²A_s + c_t A_tᵀδ_t²A_t + σ AᵀMA)⁻¹
//!      (c_s A_sᵀδ_s²Y_s + c_t A_tᵀδ_t²Y_t)
//! ```
//!
//! The identity block keeps the system positive definite, so one Cholesky
//! solve yields the global minimizer.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::bls::{self, BlsConfig, BlsMapping};
use crate::data::{one_hot, vstack, Dataset, Normalization, Normalizer};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lle::LleGraph;

/// How per-sample loss weights are derived from class frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalancePolicy {
    /// δ = I: every sample weighs the same.
    Off,
    /// τᵢ = τ₀/Nᵢ with τ₀ the partition's mean class size, so balanced
    /// data degenerates to δ ≈ I.
    MeanClassSize,
    /// τᵢ = τ₀/Nᵢ with an explicit τ₀ > 0.
    Tau0(f64),
}

impl Default for ImbalancePolicy {
    fn default() -> Self {
        ImbalancePolicy::MeanClassSize
    }
}

impl ImbalancePolicy {
    /// Per-sample weights for one labeled partition. Class counts are taken
    /// within that partition only.
    pub fn resolve(&self, labels: &[usize]) -> Result<ImbalanceWeights> {
        match self {
            ImbalancePolicy::Off => Ok(ImbalanceWeights {
                tau: vec![1.0; labels.len()],
            }),
            ImbalancePolicy::MeanClassSize => imbalance_weights(labels, mean_class_size(labels)),
            ImbalancePolicy::Tau0(t) => imbalance_weights(labels, *t),
        }
    }
}

/// Mean number of samples per class present in the partition.
pub fn mean_class_size(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 1.0;
    }
    let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
    labels.len() as f64 / distinct as f64
}

/// Per-sample weights τᵢ = τ₀/Nᵢ, the diagonal of δ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceWeights {
    pub tau: Vec<f64>,
}

pub fn imbalance_weights(labels: &[usize], tau0: f64) -> Result<ImbalanceWeights> {
    if !(tau0 > 0.0) {
        return Err(Error::Parameter(format!("tau0 must be positive, got {tau0}")));
    }
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(ImbalanceWeights {
        tau: labels.iter().map(|&l| tau0 / counts[l] as f64).collect(),
    })
}

/// All tunables of the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Source-domain error weight c_s.
    pub c_source: f64,
    /// Labeled-target error weight c_t.
    pub c_target: f64,
    /// Manifold-regularizer weight σ.
    pub sigma: f64,
    pub imbalance: ImbalancePolicy,
    /// Neighbor count k of the LLE graph.
    pub lle_neighbors: usize,
    /// Relative ridge for the local Gram systems of the graph.
    pub lle_reg: f64,
    pub normalization: Normalization,
    pub bls: BlsConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            c_source: 1e3,
            c_target: 10.0,
            sigma: 0.1,
            imbalance: ImbalancePolicy::MeanClassSize,
            lle_neighbors: 5,
            lle_reg: 1e-3,
            normalization: Normalization::Zscore,
            bls: BlsConfig::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.c_source < 0.0 || self.c_target < 0.0 {
            return Err(Error::Parameter(format!(
                "error weights must be nonnegative (c_source={}, c_target={})",
                self.c_source, self.c_target
            )));
        }
        if self.sigma < 0.0 {
            return Err(Error::Parameter(format!(
                "manifold weight sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if let ImbalancePolicy::Tau0(t) = self.imbalance {
            if !(t > 0.0) {
                return Err(Error::Parameter(format!("tau0 must be positive, got {t}")));
            }
        }
        if self.lle_neighbors < 1 {
            return Err(Error::Parameter("lle_neighbors must be at least 1".into()));
        }
        if self.lle_reg < 0.0 {
            return Err(Error::Parameter(format!(
                "lle_reg must be nonnegative, got {}",
                self.lle_reg
            )));
        }
        self.bls.validate()
    }
}

/// The assembled training problem: hidden matrices, one-hot targets, the
/// graph over the stacked training rows, and the loss weights.
///
/// Row order is load-bearing: `graph` indexes `[source rows; target rows]`,
/// exactly the vertical stack of `a_source` and `a_target`.
pub struct DablsProblem<'a> {
    a_source: &'a Array2<f64>,
    y_source: &'a Array2<f64>,
    a_target: &'a Array2<f64>,
    y_target: &'a Array2<f64>,
    graph: &'a Array2<f64>,
    tau_source: &'a [f64],
    tau_target: &'a [f64],
    c_source: f64,
    c_target: f64,
    sigma: f64,
}

impl<'a> DablsProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_source: &'a Array2<f64>,
        y_source: &'a Array2<f64>,
        a_target: &'a Array2<f64>,
        y_target: &'a Array2<f64>,
        graph: &'a Array2<f64>,
        tau_source: &'a [f64],
        tau_target: &'a [f64],
        c_source: f64,
        c_target: f64,
        sigma: f64,
    ) -> Result<Self> {
        let (ns, f) = a_source.dim();
        let nt = a_target.nrows();
        if a_target.ncols() != f {
            return Err(Error::Data(format!(
                "hidden widths differ: source {f}, target {}",
                a_target.ncols()
            )));
        }
        if y_source.nrows() != ns || y_target.nrows() != nt {
            return Err(Error::Data("label row counts do not match hidden matrices".into()));
        }
        if y_source.ncols() != y_target.ncols() {
            return Err(Error::Data("source and target class counts differ".into()));
        }
        if tau_source.len() != ns || tau_target.len() != nt {
            return Err(Error::Data("imbalance weight lengths do not match partitions".into()));
        }
        // Structural guard for the row-order contract.
        if graph.nrows() != ns + nt || graph.ncols() != ns + nt {
            return Err(Error::Data(format!(
                "graph is {}x{}, expected {} training rows (source first, then target)",
                graph.nrows(),
                graph.ncols(),
                ns + nt
            )));
        }
        if c_source < 0.0 || c_target < 0.0 || sigma < 0.0 {
            return Err(Error::Parameter("c_source, c_target, sigma must be nonnegative".into()));
        }
        Ok(Self {
            a_source,
            y_source,
            a_target,
            y_target,
            graph,
            tau_source,
            tau_target,
            c_source,
            c_target,
            sigma,
        })
    }

    fn stacked_hidden(&self) -> Array2<f64> {
        vstack(self.a_source, self.a_target)
    }

    fn scale_rows(m: &Array2<f64>, tau: &[f64]) -> Array2<f64> {
        let mut out = m.clone();
        for (mut row, &t) in out.rows_mut().into_iter().zip(tau) {
            row.mapv_inplace(|v| v * t);
        }
        out
    }

    /// Loss value at `w`.
    pub fn objective(&self, w: &Array2<f64>) -> f64 {
        let fit = |a: &Array2<f64>, y: &Array2<f64>, tau: &[f64]| -> f64 {
            let resid = Self::scale_rows(&(y - &a.dot(w)), tau);
            linalg::frobenius_sq(&resid)
        };
        let mut total = 0.5 * linalg::frobenius_sq(w);
        if self.c_source > 0.0 {
            total += 0.5 * self.c_source * fit(self.a_source, self.y_source, self.tau_source);
        }
        if self.c_target > 0.0 {
            total += 0.5 * self.c_target * fit(self.a_target, self.y_target, self.tau_target);
        }
        if self.sigma > 0.0 {
            let p = self.stacked_hidden().dot(w);
            let mp = self.graph.dot(&p);
            let quad: f64 = p.iter().zip(mp.iter()).map(|(a, b)| a * b).sum();
            total += 0.5 * self.sigma * quad;
        }
        total
    }

    /// Analytic gradient of [`Self::objective`] at `w`.
    pub fn gradient(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut grad = w.clone();
        let fit_grad = |a: &Array2<f64>, y: &Array2<f64>, tau: &[f64], c: f64| -> Array2<f64> {
            let mut resid = a.dot(w) - y;
            for (mut row, &t) in resid.rows_mut().into_iter().zip(tau) {
                row.mapv_inplace(|v| v * t * t);
            }
            a.t().dot(&resid) * c
        };
        if self.c_source > 0.0 {
            grad += &fit_grad(self.a_source, self.y_source, self.tau_source, self.c_source);
        }
        if self.c_target > 0.0 {
            grad += &fit_grad(self.a_target, self.y_target, self.tau_target, self.c_target);
        }
        if self.sigma > 0.0 {
            let a_train = self.stacked_hidden();
            let p = a_train.dot(w);
            let mp = self.graph.dot(&p);
            grad += &(a_train.t().dot(&mp) * self.sigma);
        }
        grad
    }

    /// Closed-form global minimizer via one symmetric positive-definite
    /// factorization; the inverse is never formed.
    pub fn solve(&self) -> Result<Array2<f64>> {
        let f = self.a_source.ncols();
        let c = self.y_source.ncols();
        for (name, m) in [
            ("source hidden", self.a_source),
            ("target hidden", self.a_target),
            ("graph", self.graph),
        ] {
            if !linalg::all_finite(m) {
                return Err(Error::Numeric(format!("non-finite entries in {name} matrix")));
            }
        }
        let mut lhs = Array2::eye(f);
        let mut rhs = Array2::zeros((f, c));
        let mut accumulate = |a: &Array2<f64>, y: &Array2<f64>, tau: &[f64], cw: f64| {
            if cw <= 0.0 {
                return;
            }
            let sa = Self::scale_rows(a, tau);
            let sy = Self::scale_rows(y, tau);
            lhs.scaled_add(cw, &sa.t().dot(&sa));
            rhs.scaled_add(cw, &sa.t().dot(&sy));
        };
        accumulate(self.a_source, self.y_source, self.tau_source, self.c_source);
        accumulate(self.a_target, self.y_target, self.tau_target, self.c_target);
        if self.sigma > 0.0 {
            let a_train = self.stacked_hidden();
            let ma = self.graph.dot(&a_train);
            lhs.scaled_add(self.sigma, &a_train.t().dot(&ma));
        }
        // Purge the asymmetry the matrix products leave behind.
        let sym = {
            let mut s = &lhs + &lhs.t();
            s.mapv_inplace(|v| v / 2.0);
            s
        };
        linalg::solve_spd(&sym, &rhs)
    }
}

/// A trained domain-adaptation classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DablsModel {
    pub mapping: BlsMapping,
    pub normalizer: Option<Normalizer>,
    /// F×C output weights.
    pub weights: Array2<f64>,
    pub hyperparams: HyperParams,
    pub num_classes: usize,
}

/// Fits the adaptation model from a fully labeled source and a small
/// labeled target slice.
///
/// Pipeline: fit the normalizer on the stacked training rows, build the LLE
/// graph and the per-partition imbalance weights over them, draw (and
/// optionally fine-tune) the BLS mapping, compute the hidden matrices, and
/// solve for the output weights. The unlabeled-target hidden matrix is not
/// needed here; prediction computes it on demand.
pub fn dabls_fit(
    source: &Dataset,
    target_labeled: &Dataset,
    hp: &HyperParams,
    seed: u64,
) -> Result<DablsModel> {
    hp.validate()?;
    if source.dim() != target_labeled.dim() {
        return Err(Error::Data(format!(
            "source has {} features, target has {}",
            source.dim(),
            target_labeled.dim()
        )));
    }
    if source.num_classes != target_labeled.num_classes {
        return Err(Error::Data(format!(
            "source has {} classes, target has {}",
            source.num_classes, target_labeled.num_classes
        )));
    }
    let x_train_raw = vstack(&source.features, &target_labeled.features);
    let normalizer = match hp.normalization {
        Normalization::None => None,
        Normalization::Zscore => Some(Normalizer::fit(&x_train_raw)?),
    };
    let x_train = match &normalizer {
        Some(n) => n.apply(&x_train_raw)?,
        None => x_train_raw,
    };

    let graph = LleGraph::build(&x_train, hp.lle_neighbors, hp.lle_reg)?;
    let tau_source = hp.imbalance.resolve(&source.labels)?;
    let tau_target = hp.imbalance.resolve(&target_labeled.labels)?;

    let mapping = bls::init_mapping(source.dim(), &hp.bls, Some(&x_train), seed)?;
    let a_train = bls::hidden(&x_train, &mapping)?;
    let ns = source.len();
    let (a_source, a_target) = a_train.view().split_at(Axis(0), ns);
    let a_source = a_source.to_owned();
    let a_target = a_target.to_owned();

    let y_source = one_hot(&source.labels, source.num_classes)?;
    let y_target = one_hot(&target_labeled.labels, target_labeled.num_classes)?;

    let problem = DablsProblem::new(
        &a_source,
        &y_source,
        &a_target,
        &y_target,
        &graph.graph,
        &tau_source.tau,
        &tau_target.tau,
        hp.c_source,
        hp.c_target,
        hp.sigma,
    )?;
    let weights = problem.solve()?;

    Ok(DablsModel {
        mapping,
        normalizer,
        weights,
        hyperparams: hp.clone(),
        num_classes: source.num_classes,
    })
}

/// Scores and argmax labels for unlabeled target rows (ties resolve to the
/// lowest class index). Zero rows in, zero rows out.
pub fn dabls_predict(model: &DablsModel, x: &Array2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
    let x = match &model.normalizer {
        Some(n) => n.apply(x)?,
        None => x.clone(),
    };
    let a = bls::hidden(&x, &model.mapping)?;
    let scores = a.dot(&model.weights);
    let labels = linalg::row_argmax(&scores);
    Ok((scores, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::synth;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn imbalance_weight_arithmetic() {
        let w = imbalance_weights(&[0, 0, 0, 0, 0], 10.0).unwrap();
        assert!(w.tau.iter().all(|&t| (t - 2.0).abs() < 1e-15));

        // Balanced classes with τ₀ = common class size: δ = I.
        let w = imbalance_weights(&[0, 0, 1, 1], 2.0).unwrap();
        assert!(w.tau.iter().all(|&t| t == 1.0));

        let labels: Vec<usize> = [vec![0; 9], vec![1; 1]].concat();
        let w = imbalance_weights(&labels, 9.0).unwrap();
        assert!(w.tau[..9].iter().all(|&t| t == 1.0));
        assert_eq!(w.tau[9], 9.0);

        assert!(matches!(
            imbalance_weights(&[0], 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn mean_class_size_policy_neutralizes_balanced_data() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        let w = ImbalancePolicy::MeanClassSize.resolve(&labels).unwrap();
        assert!(w.tau.iter().all(|&t| (t - 1.0).abs() < 1e-12));
    }

    /// A consistent random problem: real LLE graph, one-hot labels, positive
    /// weights. Sizes stay small enough for scalar-loop oracles.
    pub(super) struct Instance {
        pub a_source: Array2<f64>,
        pub y_source: Array2<f64>,
        pub a_target: Array2<f64>,
        pub y_target: Array2<f64>,
        pub graph: Array2<f64>,
        pub tau_source: Vec<f64>,
        pub tau_target: Vec<f64>,
        pub c_source: f64,
        pub c_target: f64,
        pub sigma: f64,
    }

    impl Instance {
        pub fn random(seed: u64, ns: usize, nt: usize, f: usize, c: usize) -> Self {
            let mut rng = stream_rng(seed, 600);
            let a_source = Array2::from_shape_fn((ns, f), |_| rng.random_range(-1.0..1.0));
            let a_target = Array2::from_shape_fn((nt, f), |_| rng.random_range(-1.0..1.0));
            let labels_s: Vec<usize> = (0..ns).map(|_| rng.random_range(0..c)).collect();
            let labels_t: Vec<usize> = (0..nt).map(|_| rng.random_range(0..c)).collect();
            let y_source = one_hot(&labels_s, c).unwrap();
            let y_target = one_hot(&labels_t, c).unwrap();
            let x = Array2::from_shape_fn((ns + nt, 3), |_| rng.random_range(-2.0..2.0));
            let k = 3.min(ns + nt - 1);
            let graph = LleGraph::build(&x, k, 1e-3).unwrap().graph;
            let tau_source = imbalance_weights(&labels_s, mean_class_size(&labels_s))
                .unwrap()
                .tau;
            let tau_target = imbalance_weights(&labels_t, mean_class_size(&labels_t))
                .unwrap()
                .tau;
            Self {
                a_source,
                y_source,
                a_target,
                y_target,
                graph,
                tau_source,
                tau_target,
                c_source: rng.random_range(0.1..100.0),
                c_target: rng.random_range(0.1..100.0),
                sigma: rng.random_range(0.0..5.0),
            }
        }

        pub fn problem(&self) -> DablsProblem<'_> {
            DablsProblem::new(
                &self.a_source,
                &self.y_source,
                &self.a_target,
                &self.y_target,
                &self.graph,
                &self.tau_source,
                &self.tau_target,
                self.c_source,
                self.c_target,
                self.sigma,
            )
            .unwrap()
        }

        /// Objective recomputed with nothing but scalar loops.
        pub fn objective_scalar(&self, w: &Array2<f64>) -> f64 {
            let f = w.nrows();
            let c = w.ncols();
            let mut total = 0.0;
            for v in w.iter() {
                total += 0.5 * v * v;
            }
            let fit = |a: &Array2<f64>, y: &Array2<f64>, tau: &[f64], cw: f64| -> f64 {
                let mut acc = 0.0;
                for i in 0..a.nrows() {
                    for j in 0..c {
                        let mut pred = 0.0;
                        for k in 0..f {
                            pred += a[(i, k)] * w[(k, j)];
                        }
                        let e = tau[i] * (y[(i, j)] - pred);
                        acc += e * e;
                    }
                }
                0.5 * cw * acc
            };
            total += fit(&self.a_source, &self.y_source, &self.tau_source, self.c_source);
            total += fit(&self.a_target, &self.y_target, &self.tau_target, self.c_target);
            // manifold term over the stacked rows
            let ns = self.a_source.nrows();
            let n = ns + self.a_target.nrows();
            let hid = |i: usize, k: usize| -> f64 {
                if i < ns {
                    self.a_source[(i, k)]
                } else {
                    self.a_target[(i - ns, k)]
                }
            };
            let mut p = vec![vec![0.0; c]; n];
            for (i, row) in p.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    for k in 0..f {
                        *cell += hid(i, k) * w[(k, j)];
                    }
                }
            }
            let mut quad = 0.0;
            for col in 0..c {
                for i in 0..n {
                    for j in 0..n {
                        quad += p[i][col] * self.graph[(i, j)] * p[j][col];
                    }
                }
            }
            total + 0.5 * self.sigma * quad
        }
    }

    #[test]
    fn objective_degenerate_cases() {
        let inst = Instance::random(1, 6, 4, 5, 2);
        let w0 = Array2::zeros((5, 2));
        // All-zero weights and labels: every term vanishes.
        let ys0 = Array2::zeros(inst.y_source.raw_dim());
        let yt0 = Array2::zeros(inst.y_target.raw_dim());
        let zeroed = DablsProblem::new(
            &inst.a_source,
            &ys0,
            &inst.a_target,
            &yt0,
            &inst.graph,
            &inst.tau_source,
            &inst.tau_target,
            inst.c_source,
            inst.c_target,
            inst.sigma,
        )
        .unwrap();
        assert_eq!(zeroed.objective(&w0), 0.0);

        // Only the ridge survives when every loss weight is zero.
        let ridge_only = DablsProblem::new(
            &inst.a_source,
            &inst.y_source,
            &inst.a_target,
            &inst.y_target,
            &inst.graph,
            &inst.tau_source,
            &inst.tau_target,
            0.0,
            0.0,
            0.0,
        )
        .unwrap();
        let mut rng = stream_rng(2, 601);
        let w = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let expect = 0.5 * linalg::frobenius_sq(&w);
        assert!((ridge_only.objective(&w) - expect).abs() < 1e-12);
        // And the gradient is exactly the weight matrix itself.
        assert_eq!(ridge_only.gradient(&w), w);
    }

    #[test]
    fn objective_matches_scalar_loop_oracle() {
        for seed in 0..5u64 {
            let inst = Instance::random(seed, 5, 3, 4, 3);
            let mut rng = stream_rng(seed, 602);
            let w = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
            let fast = inst.problem().objective(&w);
            let slow = inst.objective_scalar(&w);
            assert!(
                (fast - slow).abs() <= 1e-10 * (1.0 + slow.abs()),
                "seed {seed}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..4u64 {
            let inst = Instance::random(seed, 6, 4, 5, 2);
            let problem = inst.problem();
            let mut rng = stream_rng(seed, 603);
            for _ in 0..10 {
                let w = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
                let grad = problem.gradient(&w);
                let h = 1e-5;
                for idx in [(0usize, 0usize), (2, 1), (4, 0), (3, 1)] {
                    let mut wp = w.clone();
                    wp[idx] += h;
                    let mut wm = w.clone();
                    wm[idx] -= h;
                    let numeric = (problem.objective(&wp) - problem.objective(&wm)) / (2.0 * h);
                    let analytic = grad[idx];
                    let denom = 1.0 + numeric.abs().max(analytic.abs());
                    assert!(
                        (numeric - analytic).abs() / denom < 1e-4,
                        "seed {seed} idx {idx:?}: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn solver_is_stationary() {
        for seed in 0..10u64 {
            let inst = Instance::random(seed, 8, 5, 6, 3);
            let problem = inst.problem();
            let w = problem.solve().unwrap();
            let grad = problem.gradient(&w);
            let scale = 1.0 + linalg::max_abs(&inst.a_source.t().dot(&inst.y_source));
            assert!(
                linalg::max_abs(&grad) < 1e-6 * scale,
                "seed {seed}: residual gradient {}",
                linalg::max_abs(&grad)
            );
        }
    }

    #[test]
    fn zero_loss_weights_give_zero_solution() {
        let inst = Instance::random(3, 6, 4, 5, 2);
        let problem = DablsProblem::new(
            &inst.a_source,
            &inst.y_source,
            &inst.a_target,
            &inst.y_target,
            &inst.graph,
            &inst.tau_source,
            &inst.tau_target,
            0.0,
            0.0,
            inst.sigma,
        )
        .unwrap();
        let w = problem.solve().unwrap();
        assert!(linalg::max_abs(&w) == 0.0);
    }

    #[test]
    fn reduces_to_ridge_when_manifold_and_imbalance_are_off() {
        for seed in 0..6u64 {
            let mut inst = Instance::random(seed, 7, 5, 6, 3);
            inst.tau_source = vec![1.0; 7];
            inst.tau_target = vec![1.0; 5];
            inst.sigma = 0.0;
            let c = 4.0;
            inst.c_source = c;
            inst.c_target = c;
            let w = inst.problem().solve().unwrap();

            let a = vstack(&inst.a_source, &inst.a_target);
            let y = vstack(&inst.y_source, &inst.y_target);
            let expected = bls::bls_train(&a, &y, 1.0 / c).unwrap();
            let diff = linalg::max_abs(&(&w - &expected));
            assert!(
                diff <= 1e-8 * (1.0 + linalg::max_abs(&expected)),
                "seed {seed}: {diff}"
            );
        }
    }

    /// Scalar-loop gradient descent with an exact parabola line search; the
    /// objective is quadratic so three samples pin the step.
    fn gradient_descent_oracle(inst: &Instance, steps: usize) -> Array2<f64> {
        let f = inst.a_source.ncols();
        let c = inst.y_source.ncols();
        let obj = |w: &Array2<f64>| inst.objective_scalar(w);
        let grad_fd = |w: &Array2<f64>| -> Array2<f64> {
            let h = 1e-6;
            let mut g = Array2::zeros((f, c));
            for i in 0..f {
                for j in 0..c {
                    let mut wp = w.clone();
                    wp[(i, j)] += h;
                    let mut wm = w.clone();
                    wm[(i, j)] -= h;
                    g[(i, j)] = (obj(&wp) - obj(&wm)) / (2.0 * h);
                }
            }
            g
        };
        let mut w = Array2::zeros((f, c));
        for _ in 0..steps {
            let g = grad_fd(&w);
            let gnorm: f64 = g.iter().map(|v| v * v).sum();
            if gnorm < 1e-24 {
                break;
            }
            let h = 1e-3;
            let f0 = obj(&w);
            let f1 = obj(&(&w - &(&g * h)));
            let f2 = obj(&(&w - &(&g * (2.0 * h))));
            let denom = f2 - 2.0 * f1 + f0;
            let t = if denom.abs() < 1e-300 {
                h
            } else {
                h * (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * denom)
            };
            w = &w - &(&g * t.max(0.0));
        }
        w
    }

    #[test]
    fn closed_form_beats_gradient_descent() {
        let inst = Instance::random(11, 8, 4, 8, 3);
        let problem = inst.problem();
        let w_star = problem.solve().unwrap();
        let w_gd = gradient_descent_oracle(&inst, 2000);
        let f_star = problem.objective(&w_star);
        let f_gd = problem.objective(&w_gd);
        assert!(f_star <= f_gd + 1e-12, "{f_star} > {f_gd}");
        assert!(f_gd - f_star < 1e-6, "gap {}", f_gd - f_star);
    }

    #[test]
    fn global_minimum_beats_random_probes() {
        let inst = Instance::random(13, 10, 6, 7, 2);
        let problem = inst.problem();
        let w_star = problem.solve().unwrap();
        let f_star = problem.objective(&w_star);
        let mut rng = stream_rng(13, 604);
        for _ in 0..100 {
            let w = Array2::from_shape_fn((7, 2), |_| rng.random_range(-2.0..2.0));
            assert!(problem.objective(&w) >= f_star - 1e-12);
        }
    }

    #[test]
    fn manifold_penalty_shrinks_as_sigma_grows() {
        let mut inst = Instance::random(17, 12, 6, 6, 3);
        let mut previous = f64::INFINITY;
        for sigma in [0.0, 0.01, 0.1, 1.0, 10.0] {
            inst.sigma = sigma;
            let problem = inst.problem();
            let w = problem.solve().unwrap();
            let a = vstack(&inst.a_source, &inst.a_target);
            let p = a.dot(&w);
            let mp = inst.graph.dot(&p);
            let penalty: f64 = p.iter().zip(mp.iter()).map(|(x, y)| x * y).sum();
            assert!(
                penalty <= previous * (1.0 + 1e-9) + 1e-12,
                "σ={sigma}: penalty {penalty} rose above {previous}"
            );
            previous = penalty;
        }
    }

    fn two_domain_task(seed: u64) -> (Dataset, Dataset) {
        let centers = array![[-2.0, 0.0], [2.0, 0.0], [0.0, 2.5]];
        let source = synth::gaussian_blobs(&centers, &[40, 40, 40], 0.5, "src", seed).unwrap();
        let target = synth::shifted_domain(&source, 25.0, &[0.5, -0.3], "tgt").unwrap();
        (source, target)
    }

    fn quick_hp() -> HyperParams {
        HyperParams {
            bls: BlsConfig {
                feature_groups: 3,
                feature_nodes: 4,
                enhancement_groups: 1,
                enhancement_nodes: 16,
                sae_iters: 0,
                ..BlsConfig::default()
            },
            lle_neighbors: 4,
            ..HyperParams::default()
        }
    }

    #[test]
    fn operating_point_hyperparams_validate() {
        let hp = HyperParams {
            c_source: 1e3,
            c_target: 10.0,
            sigma: 0.1,
            ..HyperParams::default()
        };
        assert_eq!(hp.bls.feature_nodes, 10);
        assert_eq!(hp.bls.feature_groups, 20);
        assert_eq!(hp.bls.enhancement_nodes, 400);
        assert_eq!(hp.bls.enhancement_groups, 1);
        hp.validate().unwrap();
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (source, target) = two_domain_task(3);
        let labeled = target.select(&(0..24).collect::<Vec<_>>()).unwrap();
        let hp = quick_hp();
        let m1 = dabls_fit(&source, &labeled, &hp, 9).unwrap();
        let m2 = dabls_fit(&source, &labeled, &hp, 9).unwrap();
        assert!(m1
            .weights
            .iter()
            .zip(m2.weights.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn degenerates_to_plain_bls_on_duplicated_source() {
        // σ = 0, δ = I, target = source: the closed form collapses to the
        // ridge solution with λ = 1/(c_s + c_t).
        let (source, _) = two_domain_task(5);
        let c_s = 40.0;
        let c_t = 8.0;
        let hp = HyperParams {
            c_source: c_s,
            c_target: c_t,
            sigma: 0.0,
            imbalance: ImbalancePolicy::Off,
            ..quick_hp()
        };
        let model = dabls_fit(&source, &source, &hp, 31).unwrap();

        let bls_cfg = BlsConfig {
            ridge_lambda: 1.0 / (c_s + c_t),
            ..hp.bls.clone()
        };
        // Same normalizer domain: the stacked training set duplicates the
        // source, so mean/std match a source-only fit.
        let reference = bls::bls_fit(&source, &bls_cfg, hp.normalization, 31).unwrap();

        let probe = synth::shifted_domain(&source, 10.0, &[0.2, 0.1], "probe").unwrap();
        let (score_a, labels_a) = dabls_predict(&model, &probe.features).unwrap();
        let (score_b, labels_b) = bls::bls_predict(&reference, &probe.features).unwrap();
        assert_eq!(labels_a, labels_b);
        let diff = linalg::max_abs(&(&score_a - &score_b));
        assert!(diff < 1e-6, "score gap {diff}");
    }

    #[test]
    fn fit_rejects_mismatched_domains() {
        let (source, _) = two_domain_task(7);
        let other = synth::gaussian_blobs(&array![[0.0, 0.0, 0.0]], &[10], 1.0, "bad", 1).unwrap();
        let hp = quick_hp();
        assert!(matches!(
            dabls_fit(&source, &other, &hp, 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn predict_edge_cases() {
        let (source, target) = two_domain_task(9);
        let labeled = target.select(&(0..30).collect::<Vec<_>>()).unwrap();
        let mut model = dabls_fit(&source, &labeled, &quick_hp(), 4).unwrap();

        let empty = Array2::zeros((0, 2));
        let (scores, labels) = dabls_predict(&model, &empty).unwrap();
        assert_eq!(scores.nrows(), 0);
        assert!(labels.is_empty());

        model.weights.fill(0.0);
        let (scores, labels) = dabls_predict(&model, &target.features).unwrap();
        assert!(scores.iter().all(|&v| v == 0.0));
        assert!(labels.iter().all(|&l| l == 0));
    }
}

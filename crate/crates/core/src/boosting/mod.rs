//! Boulevard boosting, its tail-snapshot variant, and the baseline ensembles
//! it is compared against.

mod baseline;
mod format;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::seed;
use crate::trees::{
    self, grow_greedy, grow_randomized, FittedTree, LeafId, StructureConstraints, Subsample,
};

pub use baseline::{gbt_fit, rf_fit, BaselineKind, BaselineModel};
pub use format::{read_model, write_model, SavedModel};

/// How tree structures are chosen at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureMode {
    /// Completely randomized structures that never look at the residuals.
    Randomized,
    /// Greedy structures fit to the residuals on the iteration's subsample.
    Adaptive,
}

impl StructureMode {
    pub fn name(self) -> &'static str {
        match self {
            StructureMode::Randomized => "randomized",
            StructureMode::Adaptive => "adaptive",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "randomized" => Some(StructureMode::Randomized),
            "adaptive" => Some(StructureMode::Adaptive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoulevardConfig {
    pub lambda: f64,
    /// Subsample rate; each tree sees `round(theta * n)` points.
    pub theta: f64,
    pub n_trees: usize,
    /// Truncation level applied to fitted values before residuals are taken.
    /// `None` means `10 * max|y|` at fit time.
    pub truncation: Option<f64>,
    pub mode: StructureMode,
    pub constraints: StructureConstraints,
    pub seed: u64,
}

impl BoulevardConfig {
    pub fn new(lambda: f64, theta: f64, n_trees: usize) -> Self {
        BoulevardConfig {
            lambda,
            theta,
            n_trees,
            truncation: None,
            mode: StructureMode::Randomized,
            constraints: StructureConstraints::default(),
            seed: 0,
        }
    }

    pub fn with_mode(mut self, mode: StructureMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_constraints(mut self, constraints: StructureConstraints) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_truncation(mut self, m: f64) -> Self {
        self.truncation = Some(m);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!(
                "theta {} outside (0, 1]",
                self.theta
            )));
        }
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if let Some(m) = self.truncation {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("truncation {m} must be positive")));
            }
        }
        Ok(())
    }

    /// Truncation level actually used for responses `y`.
    pub fn resolve_truncation(&self, y: &[f64]) -> Result<f64> {
        let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match self.truncation {
            Some(m) if m <= max_abs => Err(Error::Config(format!(
                "truncation {m} must exceed max|y| = {max_abs}"
            ))),
            Some(m) => Ok(m),
            None if max_abs > 0.0 => Ok(10.0 * max_abs),
            None => Ok(1.0),
        }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Config(format!("lambda {lambda} outside (0, 1)")));
    }
    Ok(())
}

/// `sign(v) * min(|v|, m)`.
pub fn truncate(v: f64, m: f64) -> f64 {
    v.clamp(-m, m)
}

/// Per-iteration training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// `(1/2n) * sum((lambda/(1+lambda) * y_i - yhat_i)^2)` after the update.
    pub loss: f64,
    /// Euclidean norm of the change in fitted values.
    pub step_norm: f64,
    /// Number of fitted values the truncation changed when forming residuals.
    pub clipped: usize,
}

/// Tail-snapshot bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotState {
    pub loss_threshold: f64,
    /// First iteration (1-based) whose training loss fell below the threshold.
    pub b_star: Option<usize>,
    /// Residuals that generate every structure after `b_star`.
    pub frozen_residuals: Option<Vec<f64>>,
}

impl SnapshotState {
    pub fn reached(&self) -> bool {
        self.b_star.is_some()
    }
}

/// How an ordered list of trees is turned into a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Combiner {
    /// `(lambda / b) * sum(t_j)`, built as a running average.
    Boulevard { lambda: f64 },
    /// `rate * sum(t_j)`.
    Additive { rate: f64 },
    /// `sum(t_j) / b`.
    Average,
}

impl Combiner {
    /// Value after tree `b` (1-based) given the value after `b - 1`.
    pub fn step(self, previous: f64, tree: f64, b: usize) -> f64 {
        let bf = b as f64;
        match self {
            Combiner::Boulevard { lambda } => (bf - 1.0) / bf * previous + lambda / bf * tree,
            Combiner::Additive { rate } => previous + rate * tree,
            Combiner::Average => (bf - 1.0) / bf * previous + tree / bf,
        }
    }

    /// Value from the plain sum of `b` tree outputs.
    pub fn finish(self, sum: f64, b: usize) -> f64 {
        let bf = b as f64;
        match self {
            Combiner::Boulevard { lambda } => lambda / bf * sum,
            Combiner::Additive { rate } => rate * sum,
            Combiner::Average => sum / bf,
        }
    }
}

/// Anything that predicts from an ordered list of fitted trees.
pub trait Ensemble {
    fn trees(&self) -> &[FittedTree];

    fn combiner(&self) -> Combiner;

    /// Multiplier applied to the combined value to give the final prediction.
    fn output_scale(&self) -> f64 {
        1.0
    }

    /// Final predictions for the rows of `x`.
    fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let trees = self.trees();
        check_rows(x, trees)?;
        let (combiner, scale, b) = (self.combiner(), self.output_scale(), trees.len());
        Ok(x.outer_iter()
            .map(|row| {
                let sum: f64 = trees.iter().map(|t| t.predict_row(row)).sum();
                scale * combiner.finish(sum, b)
            })
            .collect())
    }

    /// Calls `visit(b, predictions)` after each tree with the final-scale
    /// predictions of the first `b` trees at the rows of `x`.
    fn for_each_stage(
        &self,
        x: ArrayView2<f64>,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let trees = self.trees();
        check_rows(x, trees)?;
        let (combiner, scale) = (self.combiner(), self.output_scale());
        let mut current = vec![0.0; x.nrows()];
        let mut scaled = vec![0.0; x.nrows()];
        for (stage, tree) in trees.iter().enumerate() {
            for (i, row) in x.outer_iter().enumerate() {
                current[i] = combiner.step(current[i], tree.predict_row(row), stage + 1);
                scaled[i] = scale * current[i];
            }
            visit(stage + 1, &scaled);
        }
        Ok(())
    }

    /// Stage-by-row matrix of the predictions visited by [`Ensemble::for_each_stage`].
    fn staged_predictions(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.trees().len(), x.nrows()));
        self.for_each_stage(x, |b, p| {
            out.row_mut(b - 1).assign(&ArrayView1::from(p));
        })?;
        Ok(out)
    }
}

fn check_rows(x: ArrayView2<f64>, trees: &[FittedTree]) -> Result<()> {
    let dim = trees
        .first()
        .map(|t| t.structure().dim())
        .ok_or_else(|| Error::Config("ensemble has no trees".into()))?;
    trees::check_sample(x, dim)
}

/// A fitted Boulevard ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BoulevardModel {
    pub(crate) config: BoulevardConfig,
    pub(crate) truncation: f64,
    pub(crate) trees: Vec<FittedTree>,
    pub(crate) trace: Vec<TraceEntry>,
    pub(crate) fitted: Vec<f64>,
    pub(crate) snapshot: Option<SnapshotState>,
}

impl BoulevardModel {
    pub fn config(&self) -> &BoulevardConfig {
        &self.config
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// `(1 + lambda) / lambda`.
    pub fn rescale(&self) -> f64 {
        (1.0 + self.config.lambda) / self.config.lambda
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Training fitted values after the last iteration, from the recursion.
    pub fn fitted_values(&self) -> &[f64] {
        &self.fitted
    }

    pub fn snapshot(&self) -> Option<&SnapshotState> {
        self.snapshot.as_ref()
    }

    pub fn n_train(&self) -> usize {
        self.fitted.len()
    }

    /// `(lambda / B) * sum(t_b(x))`, times `(1 + lambda) / lambda` when
    /// `rescaled` is set.
    pub fn predict(&self, x: &[f64], rescaled: bool) -> Result<f64> {
        let raw = self.config.lambda / self.trees.len() as f64
            * self.tree_outputs(x)?.iter().sum::<f64>();
        Ok(if rescaled { self.rescale() * raw } else { raw })
    }

    /// Output of each tree at `x`, in fitting order.
    pub fn tree_outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dim = self.trees[0].structure().dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        trees::check_unit(x)?;
        let x = ArrayView1::from(x);
        Ok(self.trees.iter().map(|t| t.predict_row(x)).collect())
    }

    pub fn raw(&self) -> RawView<'_> {
        RawView(self)
    }
}

impl Ensemble for BoulevardModel {
    fn trees(&self) -> &[FittedTree] {
        &self.trees
    }

    fn combiner(&self) -> Combiner {
        Combiner::Boulevard {
            lambda: self.config.lambda,
        }
    }

    fn output_scale(&self) -> f64 {
        self.rescale()
    }
}

/// A Boulevard model viewed without the final rescale.
pub struct RawView<'a>(&'a BoulevardModel);

impl Ensemble for RawView<'_> {
    fn trees(&self) -> &[FittedTree] {
        &self.0.trees
    }

    fn combiner(&self) -> Combiner {
        self.0.combiner()
    }
}

pub fn boulevard_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    config: &BoulevardConfig,
) -> Result<BoulevardModel> {
    run(x, y, config, None)
}

/// Boulevard that freezes its structure distribution once the training loss
/// against `lambda/(1+lambda) * y` drops below `loss_threshold`.
///
/// After the freeze at iteration `b*`, structures are grown from the
/// residual vector of iteration `b*` on fresh subsamples, while leaf values
/// keep using current residuals. If the threshold is never reached the model
/// is returned with `b_star` unset and a warning is logged.
pub fn tail_snapshot_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    config: &BoulevardConfig,
    loss_threshold: f64,
) -> Result<BoulevardModel> {
    if !(loss_threshold >= 0.0) {
        return Err(Error::Config(format!(
            "loss threshold {loss_threshold} must be nonnegative"
        )));
    }
    let model = run(x, y, config, Some(loss_threshold))?;
    if !model.snapshot.as_ref().is_some_and(SnapshotState::reached) {
        log::warn!(
            "tail snapshot: loss never fell below {loss_threshold} in {} trees",
            config.n_trees
        );
    }
    Ok(model)
}

fn run(
    x: ArrayView2<f64>,
    y: &[f64],
    config: &BoulevardConfig,
    loss_threshold: Option<f64>,
) -> Result<BoulevardModel> {
    config.validate()?;
    let (n, dim) = x.dim();
    trees::check_sample(x, dim)?;
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let size = Subsample::size_for(n, config.theta);
    if size < 1 {
        return Err(Error::Config(format!(
            "subsample rate {} leaves no points",
            config.theta
        )));
    }
    let m = config.resolve_truncation(y)?;
    let lambda = config.lambda;
    let target_scale = lambda / (1.0 + lambda);

    let mut rng = seed::rng(config.seed);
    let mut fitted = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut tree_out = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut trace = Vec::with_capacity(config.n_trees);
    let mut snapshot = loss_threshold.map(|t| SnapshotState {
        loss_threshold: t,
        b_star: None,
        frozen_residuals: None,
    });

    for b in 1..=config.n_trees {
        let mut clipped = 0;
        for i in 0..n {
            let f = truncate(fitted[i], m);
            if f != fitted[i] {
                clipped += 1;
            }
            z[i] = y[i] - f;
        }
        if clipped > 0 {
            log::warn!("iteration {b}: truncation at {m} changed {clipped} fitted values");
        }

        let subsample = Subsample::draw(n, size, &mut rng);
        let structure_z = snapshot
            .as_ref()
            .and_then(|s| s.frozen_residuals.as_deref())
            .unwrap_or(&z);
        let (structure, row_leaves): (_, Vec<LeafId>) = match config.mode {
            StructureMode::Randomized => grow_randomized(x, &config.constraints, &mut rng)?,
            StructureMode::Adaptive => {
                grow_greedy(x, structure_z, &config.constraints, &subsample)?
            }
        };
        let tree = FittedTree::from_row_leaves(structure, &row_leaves, &z, subsample);

        for (out, &leaf) in tree_out.iter_mut().zip(&row_leaves) {
            *out = tree.leaf_value(leaf);
        }
        let combiner = Combiner::Boulevard { lambda };
        let mut step = 0.0;
        let mut loss = 0.0;
        for i in 0..n {
            let next = combiner.step(fitted[i], tree_out[i], b);
            step += (next - fitted[i]).powi(2);
            loss += (target_scale * y[i] - next).powi(2);
            fitted[i] = next;
        }
        let loss = loss / (2.0 * n as f64);
        trace.push(TraceEntry {
            loss,
            step_norm: step.sqrt(),
            clipped,
        });
        trees.push(tree);

        if let Some(s) = snapshot.as_mut() {
            if s.b_star.is_none() && loss < s.loss_threshold {
                s.b_star = Some(b);
                s.frozen_residuals = Some(z.clone());
            }
        }
    }

    Ok(BoulevardModel {
        config: config.clone(),
        truncation: m,
        trees,
        trace,
        fitted,
        snapshot,
    })
}

/// Sup-norm distance of the raw fitted values at each iteration from
/// `y_star`, or from the previous iteration when `y_star` is `None`.
/// `x` must be the training sample.
pub fn convergence_trace(
    model: &BoulevardModel,
    x: ArrayView2<f64>,
    y_star: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if x.nrows() != model.n_train() {
        return Err(Error::DimensionMismatch {
            expected: model.n_train(),
            found: x.nrows(),
        });
    }
    if let Some(target) = y_star {
        if target.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: target.len(),
            });
        }
    }
    let mut previous = vec![0.0; x.nrows()];
    let mut out = Vec::with_capacity(model.trees.len());
    model.raw().for_each_stage(x, |_, current| {
        let reference = y_star.unwrap_or(&previous);
        let dist = current
            .iter()
            .zip(reference)
            .fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        out.push(dist);
        previous.copy_from_slice(current);
    })?;
    Ok(out)
}

use ndarray::ArrayView2;

use super::{Combiner, Ensemble};
use crate::error::{Error, Result};
use crate::seed;
use crate::trees::{
    self, grow_greedy, grow_randomized, FittedTree, StructureConstraints, Subsample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    RandomForest,
    Gbt,
    /// Gradient boosting with a fresh subsample per tree.
    Sgbt,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::RandomForest => "rf",
            BaselineKind::Gbt => "gbt",
            BaselineKind::Sgbt => "sgbt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "rf" => Some(BaselineKind::RandomForest),
            "gbt" => Some(BaselineKind::Gbt),
            "sgbt" => Some(BaselineKind::Sgbt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub(crate) kind: BaselineKind,
    pub(crate) combiner: Combiner,
    pub(crate) trees: Vec<FittedTree>,
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let sum = self
            .trees
            .iter()
            .map(|t| t.predict(x))
            .sum::<Result<f64>>()?;
        Ok(self.combiner.finish(sum, self.trees.len()))
    }
}

impl Ensemble for BaselineModel {
    fn trees(&self) -> &[FittedTree] {
        &self.trees
    }

    fn combiner(&self) -> Combiner {
        self.combiner
    }
}

fn check_inputs(x: ArrayView2<f64>, y: &[f64], n_trees: usize) -> Result<()> {
    trees::check_sample(x, x.ncols())?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    Ok(())
}

fn subsample_size(n: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!(
            "subsample rate {rate} outside (0, 1]"
        )));
    }
    match Subsample::size_for(n, rate) {
        0 => Err(Error::Config(format!(
            "subsample rate {rate} leaves no points"
        ))),
        size => Ok(size),
    }
}

/// Additive boosting `f_b = f_{b-1} + learning_rate * t_b` with greedy trees
/// fit to the residuals. Structure and leaf values use the same points: the
/// whole sample, or a fresh subsample per tree when `subsample_rate` is set.
pub fn gbt_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    learning_rate: f64,
    n_trees: usize,
    constraints: &StructureConstraints,
    subsample_rate: Option<f64>,
    seed_value: u64,
) -> Result<BaselineModel> {
    check_inputs(x, y, n_trees)?;
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate {learning_rate} must be positive"
        )));
    }
    let n = x.nrows();
    let size = subsample_rate.map(|r| subsample_size(n, r)).transpose()?;
    let mut rng = seed::rng(seed_value);
    let mut fitted = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut out = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        for i in 0..n {
            z[i] = y[i] - fitted[i];
        }
        let w = match size {
            Some(m) => Subsample::draw(n, m, &mut rng),
            None => Subsample::full(n),
        };
        let (structure, row_leaves) = grow_greedy(x, &z, constraints, &w)?;
        let tree = FittedTree::from_row_leaves(structure, &row_leaves, &z, w);
        for (f, &leaf) in fitted.iter_mut().zip(&row_leaves) {
            *f += learning_rate * tree.leaf_value(leaf);
        }
        out.push(tree);
    }
    Ok(BaselineModel {
        kind: if size.is_some() {
            BaselineKind::Sgbt
        } else {
            BaselineKind::Gbt
        },
        combiner: Combiner::Additive {
            rate: learning_rate,
        },
        trees: out,
    })
}

/// Average of `n_trees` randomized trees, each valued on its own subsample
/// of `y`.
pub fn rf_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    n_trees: usize,
    constraints: &StructureConstraints,
    theta: f64,
    seed_value: u64,
) -> Result<BaselineModel> {
    check_inputs(x, y, n_trees)?;
    let n = x.nrows();
    let size = subsample_size(n, theta)?;
    let mut rng = seed::rng(seed_value);
    let mut out = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let w = Subsample::draw(n, size, &mut rng);
        let (structure, row_leaves) = grow_randomized(x, constraints, &mut rng)?;
        out.push(FittedTree::from_row_leaves(structure, &row_leaves, y, w));
    }
    Ok(BaselineModel {
        kind: BaselineKind::RandomForest,
        combiner: Combiner::Average,
        trees: out,
    })
}

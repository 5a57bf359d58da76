//! Named model recipes shared by the experiments and the command line.

use anyhow::{bail, Result};
use boulevard::boosting::{
    boulevard_fit, gbt_fit, rf_fit, BaselineModel, BoulevardConfig, BoulevardModel, Ensemble,
    SavedModel, StructureMode,
};
use boulevard::StructureConstraints;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Boulevard with greedy structures.
    Blv,
    /// Boulevard with completely randomized structures.
    Rblv,
    Gbt,
    Sgbt,
    Rf,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Blv,
        Method::Rblv,
        Method::Gbt,
        Method::Sgbt,
        Method::Rf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Blv => "blv",
            Method::Rblv => "rblv",
            Method::Gbt => "gbt",
            Method::Sgbt => "sgbt",
            Method::Rf => "rf",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "blv" => Method::Blv,
            "rblv" => Method::Rblv,
            "gbt" => Method::Gbt,
            "sgbt" => Method::Sgbt,
            "rf" => Method::Rf,
            other => bail!("unknown method '{other}' (expected blv, rblv, gbt, sgbt or rf)"),
        })
    }

    /// Whether the structure of each tree is grown on the whole sample
    /// rather than on its subsample.
    fn grows_on_full_sample(self) -> bool {
        matches!(self, Method::Rblv | Method::Rf | Method::Gbt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub method: Method,
    pub lambda: f64,
    pub theta: f64,
    pub trees: usize,
    /// Leaf-size floor counted after subsampling.
    pub leaf_size: usize,
    pub depth: usize,
    /// Step size of the additive baselines.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Recipe {
    /// Tree constraints for this method. Structures grown on the whole
    /// sample get the floor `ceil(leaf_size / theta)`, so leaves hold about
    /// `leaf_size` subsample points.
    pub fn constraints(&self) -> StructureConstraints {
        let floor = if self.method.grows_on_full_sample() {
            (self.leaf_size as f64 / self.theta).ceil() as usize
        } else {
            self.leaf_size
        };
        StructureConstraints::new(floor.max(1), self.depth)
    }

    pub fn boulevard_config(&self) -> BoulevardConfig {
        let mode = if self.method == Method::Blv {
            StructureMode::Adaptive
        } else {
            StructureMode::Randomized
        };
        BoulevardConfig::new(self.lambda, self.theta, self.trees)
            .with_mode(mode)
            .with_constraints(self.constraints())
            .with_seed(self.seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn fit(&self, x: ArrayView2<f64>, y: &[f64]) -> Result<Model> {
        let c = self.constraints();
        Ok(match self.method {
            Method::Blv | Method::Rblv => {
                Model::Boulevard(boulevard_fit(x, y, &self.boulevard_config())?)
            }
            Method::Gbt => Model::Baseline(gbt_fit(
                x,
                y,
                self.learning_rate,
                self.trees,
                &c,
                None,
                self.seed,
            )?),
            Method::Sgbt => Model::Baseline(gbt_fit(
                x,
                y,
                self.learning_rate,
                self.trees,
                &c,
                Some(self.theta),
                self.seed,
            )?),
            Method::Rf => Model::Baseline(rf_fit(x, y, self.trees, &c, self.theta, self.seed)?),
        })
    }
}

/// A fitted model of any recipe. Boulevard models predict on the rescaled
/// scale.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Boulevard(BoulevardModel),
    Baseline(BaselineModel),
}

impl Model {
    fn ensemble(&self) -> &dyn EnsembleDyn {
        match self {
            Model::Boulevard(m) => m,
            Model::Baseline(m) => m,
        }
    }

    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.ensemble().rows(x)?)
    }

    pub fn for_each_stage(
        &self,
        x: ArrayView2<f64>,
        visit: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<()> {
        Ok(self.ensemble().stages(x, visit)?)
    }

    pub fn n_trees(&self) -> usize {
        self.ensemble().count()
    }

    pub fn into_saved(self) -> SavedModel {
        match self {
            Model::Boulevard(m) => SavedModel::Boulevard(m),
            Model::Baseline(m) => SavedModel::Baseline(m),
        }
    }

    pub fn from_saved(saved: SavedModel) -> Self {
        match saved {
            SavedModel::Boulevard(m) => Model::Boulevard(m),
            SavedModel::Baseline(m) => Model::Baseline(m),
        }
    }
}

/// Object-safe view of [`Ensemble`].
trait EnsembleDyn {
    fn rows(&self, x: ArrayView2<f64>) -> boulevard::Result<Vec<f64>>;
    fn stages(
        &self,
        x: ArrayView2<f64>,
        visit: &mut dyn FnMut(usize, &[f64]),
    ) -> boulevard::Result<()>;
    fn count(&self) -> usize;
}

impl<E: Ensemble> EnsembleDyn for E {
    fn rows(&self, x: ArrayView2<f64>) -> boulevard::Result<Vec<f64>> {
        self.predict_rows(x)
    }

    fn stages(
        &self,
        x: ArrayView2<f64>,
        visit: &mut dyn FnMut(usize, &[f64]),
    ) -> boulevard::Result<()> {
        self.for_each_stage(x, visit)
    }

    fn count(&self) -> usize {
        self.trees().len()
    }
}

//! Experiment protocols. Each protocol reads a [`Params`] block, runs its
//! replicates with seeds derived from `params.seed`, and returns a tidy
//! [`Table`].

mod contraction_lab;
mod intervals;
mod krr;
mod limiting;
mod mse;

use anyhow::{bail, Result};
use boulevard::data::{generate, Dataset, ErrorLaw, GeneratorSpec, TargetFunction};
use boulevard::seed;
use serde::{Deserialize, Serialize};

use crate::points::{self, Setting};
use crate::recipe::{Method, Recipe};
use crate::record::Table;

pub use contraction_lab::{
    contraction_lab, default_path_norms, escape_grid, EscapeCase, ESCAPE_HORIZON, ESCAPE_RADIUS,
    ESCAPE_T0, NOISE_SCALES,
};
pub use intervals::{interval_run, reproduction_intervals, IntervalRun};
pub use krr::{krr_compare, krr_run, KrrRun};
pub use limiting::{limiting_dist, replicated_predictions, sd, variance_scaling};
pub use mse::{curves, lambda_sweep, mse_curves, noiseless_mse, Curves};

pub const NAMES: [&str; 6] = [
    "mse-curves",
    "krr-compare",
    "limiting-dist",
    "reproduction-intervals",
    "variance-scaling",
    "contraction-lab",
];

/// Parameters shared by all protocols. Fields a protocol does not use are
/// ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub seed: u64,
    pub full: bool,
    pub n: usize,
    pub n_test: usize,
    pub trees: usize,
    pub lambda: f64,
    pub theta: f64,
    pub leaf_size: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub replicates: usize,
    pub function: String,
    /// Error law labels, as accepted by [`ErrorLaw::parse`].
    pub errors: Vec<String>,
    pub methods: Vec<String>,
    pub lambdas: Vec<f64>,
    /// Spacing of iterations reported in curves.
    pub stride: usize,
}

/// Depth cap used by every protocol; the leaf-size floor is what limits tree
/// size in practice.
pub const DEFAULT_DEPTH: usize = 30;

fn from_setting(s: Setting, seed: u64, full: bool) -> Params {
    Params {
        seed,
        full,
        n: s.n,
        n_test: 1000,
        trees: s.trees,
        lambda: s.lambda,
        theta: s.theta,
        leaf_size: s.leaf_size,
        depth: DEFAULT_DEPTH,
        learning_rate: 0.1,
        replicates: 1,
        function: "mean5".into(),
        errors: vec!["uniform(1)".into()],
        methods: vec!["rblv".into()],
        lambdas: vec![s.lambda],
        stride: 10,
    }
}

/// Default parameters of protocol `name`, at desk scale or (with `full`) at
/// full size.
pub fn defaults(name: &str, seed: u64, full: bool) -> Result<Params> {
    let table = |label| points::setting(label).expect("label in table");
    let p = match name {
        "mse-curves" => {
            let mut p = from_setting(table("mse"), seed, full);
            p.function = "f1".into();
            p.methods = Method::ALL.iter().map(|m| m.name().to_string()).collect();
            p.lambdas = vec![0.2, 0.5, 0.8];
            if !full {
                p.n = 2000;
                p.trees = 300;
            }
            p
        }
        "krr-compare" => Params {
            n: 200,
            trees: 100,
            theta: 0.8,
            lambda: 0.8,
            leaf_size: 5,
            replicates: 20,
            ..from_setting(table("limiting"), seed, full)
        },
        "limiting-dist" => {
            let mut p = from_setting(table("limiting"), seed, full);
            p.errors = ["normal(1)", "uniform(1)", "rademacher", "mixed"]
                .map(String::from)
                .to_vec();
            p.replicates = if full { 1000 } else { 200 };
            if !full {
                p.trees = 500;
            }
            p
        }
        "reproduction-intervals" => {
            let mut p = from_setting(table("ri-small"), seed, full);
            p.errors = if full {
                vec!["uniform(1)".into(), "uniform(2)".into()]
            } else {
                vec!["uniform(1)".into()]
            };
            p.replicates = if full { 100 } else { 50 };
            if !full {
                p.trees = 500;
            }
            p
        }
        "variance-scaling" => {
            let mut p = from_setting(table("variance"), seed, full);
            p.errors = ["none", "uniform(1)", "uniform(2)", "uniform(4)"]
                .map(String::from)
                .to_vec();
            p.replicates = if full { 1000 } else { 200 };
            if !full {
                // Same scale as the limiting-distribution desk run.
                p.n = 1000;
                p.trees = 500;
                p.leaf_size = 10;
                p.errors.truncate(3);
            }
            p
        }
        "contraction-lab" => Params {
            replicates: 100,
            ..from_setting(table("limiting"), seed, full)
        },
        other => bail!(
            "unknown experiment '{other}' (expected one of {})",
            NAMES.join(", ")
        ),
    };
    Ok(p)
}

impl Params {
    pub fn recipe(&self, method: Method) -> Recipe {
        Recipe {
            method,
            lambda: self.lambda,
            theta: self.theta,
            trees: self.trees,
            leaf_size: self.leaf_size,
            depth: self.depth,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }

    pub fn target(&self) -> Result<TargetFunction> {
        match TargetFunction::from_name(&self.function) {
            Some(f) => Ok(f),
            None => bail!(
                "unknown function '{}' (expected f1, f2 or mean5)",
                self.function
            ),
        }
    }

    pub fn error_laws(&self) -> Result<Vec<ErrorLaw>> {
        self.errors
            .iter()
            .map(|e| match ErrorLaw::parse(e) {
                Some(law) => Ok(law),
                None => bail!("unknown error law '{e}'"),
            })
            .collect()
    }

    pub fn method_list(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| Method::parse(m)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for &l in self.lambdas.iter().chain(std::iter::once(&self.lambda)) {
            if !(l > 0.0 && l < 1.0) {
                bail!("lambda {l} outside (0, 1)");
            }
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            bail!("theta {} outside (0, 1]", self.theta);
        }
        if self.trees == 0 || self.n == 0 || self.replicates == 0 || self.stride == 0 {
            bail!("n, trees, replicates and stride must be positive");
        }
        self.target()?;
        self.error_laws()?;
        self.method_list()?;
        Ok(())
    }
}

/// Seed streams within a replicate.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    TrainData = 0,
    TestData = 1,
    Model = 2,
}

pub fn stream_seed(master: u64, replicate: usize, stream: Stream) -> u64 {
    seed::derive(master, &[replicate as u64, stream as u64])
}

/// Simulated sample for `replicate`. Covariates and the underlying uniform
/// draws depend only on the seed, so laws that differ only in scale share
/// their random numbers.
pub fn sample(
    params: &Params,
    law: ErrorLaw,
    n: usize,
    replicate: usize,
    stream: Stream,
) -> Result<Dataset> {
    let f = params.target()?;
    Ok(generate(&GeneratorSpec::new(
        f,
        n,
        law,
        stream_seed(params.seed, replicate, stream),
    ))?)
}

/// Iterations reported in curves: every `stride`-th plus the last.
pub fn reported(b: usize, total: usize, stride: usize) -> bool {
    b.is_multiple_of(stride) || b == total || b == 1
}

/// Run protocol `name`.
pub fn run_experiment(name: &str, params: &Params) -> Result<(Table, Vec<String>)> {
    params.validate()?;
    match name {
        "mse-curves" => Ok((mse_curves(params)?, vec![])),
        "krr-compare" => Ok((krr_compare(params)?, vec![])),
        "limiting-dist" => limiting_dist(params),
        "reproduction-intervals" => Ok((reproduction_intervals(params)?, vec![])),
        "variance-scaling" => Ok((variance_scaling(params)?, vec![])),
        "contraction-lab" => Ok((contraction_lab(params)?, vec![])),
        other => bail!(
            "unknown experiment '{other}' (expected one of {})",
            NAMES.join(", ")
        ),
    }
}

use anyhow::Result;
use boulevard::data::{Dataset, ErrorLaw};
use rayon::prelude::*;

use super::{reported, sample, stream_seed, Params, Stream};
use crate::recipe::{Method, Recipe};
use crate::record::Table;

/// Training and test error at the reported iterations of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub iterations: Vec<usize>,
    /// Mean squared error against the observed training responses.
    pub train: Vec<f64>,
    /// Mean squared error against the test targets.
    pub test: Vec<f64>,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64
}

/// Fit `recipe` on `train` and trace errors. Test error is measured against
/// the noiseless signal when the test set has one, else against its
/// responses.
pub fn curves(recipe: &Recipe, train: &Dataset, test: &Dataset, stride: usize) -> Result<Curves> {
    let model = recipe.fit(train.x.view(), &train.y)?;
    let total = model.n_trees();
    let target = test.signal.as_ref().unwrap_or(&test.y);
    let mut out = Curves {
        iterations: Vec::new(),
        train: Vec::new(),
        test: Vec::new(),
    };
    model.for_each_stage(train.x.view(), &mut |b, p| {
        if reported(b, total, stride) {
            out.iterations.push(b);
            out.train.push(mse(p, &train.y));
        }
    })?;
    model.for_each_stage(test.x.view(), &mut |b, p| {
        if reported(b, total, stride) {
            out.test.push(mse(p, target));
        }
    })?;
    Ok(out)
}

/// Final-iteration test error against the noiseless signal.
pub fn noiseless_mse(recipe: &Recipe, train: &Dataset, test: &Dataset) -> Result<f64> {
    let model = recipe.fit(train.x.view(), &train.y)?;
    let signal = test
        .signal
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("test set has no signal"))?;
    Ok(mse(&model.predict_rows(test.x.view())?, signal))
}

fn push_curves(table: &mut Table, replicate: usize, label: &str, c: &Curves) {
    for (i, &b) in c.iterations.iter().enumerate() {
        table.push(Some(replicate), label, b, "train_mse", c.train[i]);
        table.push(Some(replicate), label, b, "test_mse", c.test[i]);
    }
}

fn replicate_data(params: &Params, replicate: usize) -> Result<(Dataset, Dataset)> {
    let law = params
        .error_laws()?
        .first()
        .copied()
        .unwrap_or(ErrorLaw::None);
    let train = sample(params, law, params.n, replicate, Stream::TrainData)?;
    let test = sample(
        params,
        ErrorLaw::None,
        params.n_test,
        replicate,
        Stream::TestData,
    )?;
    Ok((train, test))
}

fn run(params: &Params, name: &str, jobs: Vec<(String, Recipe)>) -> Result<Table> {
    let per_rep: Vec<Result<Table>> = (0..params.replicates)
        .into_par_iter()
        .map(|rep| {
            let (train, test) = replicate_data(params, rep)?;
            let mut t = Table::new(name);
            let model_seed = stream_seed(params.seed, rep, Stream::Model);
            for (label, recipe) in &jobs {
                let c = curves(&recipe.with_seed(model_seed), &train, &test, params.stride)?;
                push_curves(&mut t, rep, label, &c);
            }
            Ok(t)
        })
        .collect();
    let mut table = Table::new(name);
    for t in per_rep {
        table.extend(t?);
    }
    Ok(table)
}

/// Train and noiseless test error curves of every method in
/// `params.methods`, on data from `params.function` with the first error law.
pub fn mse_curves(params: &Params) -> Result<Table> {
    let jobs = params
        .method_list()?
        .into_iter()
        .map(|m| (m.name().to_string(), params.recipe(m)))
        .collect();
    run(params, "mse-curves", jobs)
}

/// Both Boulevard variants at every `params.lambdas` value. With several
/// values the method label carries the shrinkage, as in `rblv:0.5`.
pub fn lambda_sweep(params: &Params) -> Result<Table> {
    let mut jobs = Vec::new();
    for &lambda in &params.lambdas {
        if !(lambda > 0.0 && lambda < 1.0) {
            anyhow::bail!("lambda {lambda} outside (0, 1)");
        }
        for m in [Method::Blv, Method::Rblv] {
            let label = if params.lambdas.len() == 1 {
                m.name().to_string()
            } else {
                format!("{}:{lambda}", m.name())
            };
            let mut recipe = params.recipe(m);
            recipe.lambda = lambda;
            jobs.push((label, recipe));
        }
    }
    run(params, "lambda-sweep", jobs)
}

//! K-fold cross-validation of a recipe.

use anyhow::{bail, Result};
use boulevard::data::{kfold_indices, Dataset, MinMaxScaling};
use rayon::prelude::*;

use crate::experiments::{curves, Curves};
use crate::recipe::Recipe;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Test-fold indices, one sorted list per fold.
    pub folds: Vec<Vec<usize>>,
    pub curves: Vec<Curves>,
    pub mean: Curves,
}

/// Train and test curves for each of `k` shuffled folds. With `normalize`,
/// covariates are min-max scaled using the training part of each fold.
pub fn kfold_cv(
    data: &Dataset,
    k: usize,
    recipe: &Recipe,
    seed: u64,
    stride: usize,
    normalize: bool,
) -> Result<CvResult> {
    let folds = kfold_indices(data.len(), k, seed)?;
    let fold_curves = folds
        .par_iter()
        .map(|test_idx| {
            let mut in_test = vec![false; data.len()];
            for &i in test_idx {
                in_test[i] = true;
            }
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
            let (mut train, mut test) = (data.subset(&train_idx), data.subset(test_idx));
            if normalize {
                let scaling = MinMaxScaling::fit(&train.x);
                scaling.apply(&mut train.x)?;
                scaling.apply(&mut test.x)?;
                train.scaling = Some(scaling.clone());
                test.scaling = Some(scaling);
            }
            curves(recipe, &train, &test, stride)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_curve(&fold_curves)?;
    Ok(CvResult {
        folds,
        curves: fold_curves,
        mean,
    })
}

/// Pointwise average of curves reported at the same iterations.
pub fn mean_curve(curves: &[Curves]) -> Result<Curves> {
    let Some(first) = curves.first() else {
        bail!("no curves to average");
    };
    if curves.iter().any(|c| c.iterations != first.iterations) {
        bail!("curves are reported at different iterations");
    }
    let n = curves.len() as f64;
    let avg = |pick: fn(&Curves) -> &Vec<f64>| -> Vec<f64> {
        (0..first.iterations.len())
            .map(|i| curves.iter().map(|c| pick(c)[i]).sum::<f64>() / n)
            .collect()
    };
    Ok(Curves {
        iterations: first.iterations.clone(),
        train: avg(|c| &c.train),
        test: avg(|c| &c.test),
    })
}

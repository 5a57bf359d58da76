use anyhow::Result;
use boulevard::boosting::{convergence_trace, BoulevardModel, Ensemble};
use boulevard::data::ErrorLaw;
use boulevard::kernel::{kernel_from_trees, KrrSolver};
use nalgebra::DVector;
use ndarray::Array2;
use rayon::prelude::*;

use super::{reported, sample, stream_seed, Params, Stream};
use crate::points::{as_vectors, KRR_POINTS};
use crate::recipe::{Method, Model};
use crate::record::Table;

/// One Boulevard fit compared with the ridge regression built from its own
/// trees.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrRun {
    pub truth: Vec<f64>,
    /// Raw (unrescaled) Boulevard predictions at the query points.
    pub boulevard: Vec<f64>,
    pub krr: Vec<f64>,
    /// Root sum of squares of the Monte Carlo standard errors of the two
    /// predictions.
    pub combined_se: Vec<f64>,
    /// Sup-norm distance of the training fit from the fixed point, per iteration.
    pub fixed_point_distance: Vec<f64>,
    /// Reported iterations and the raw predictions at each query point.
    pub interim: Vec<(usize, Vec<f64>)>,
}

fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

pub fn krr_run(params: &Params, replicate: usize) -> Result<KrrRun> {
    let law = params
        .error_laws()?
        .first()
        .copied()
        .unwrap_or(ErrorLaw::None);
    let data = sample(params, law, params.n, replicate, Stream::TrainData)?;
    let recipe =
        params
            .recipe(Method::Rblv)
            .with_seed(stream_seed(params.seed, replicate, Stream::Model));
    let model: BoulevardModel = match recipe.fit(data.x.view(), &data.y)? {
        Model::Boulevard(m) => m,
        Model::Baseline(_) => unreachable!("rblv recipe fits Boulevard"),
    };
    let queries = as_vectors(&KRR_POINTS);
    let f = params.target()?;

    // The kernel is estimated from the fitted trees themselves.
    let kernel = kernel_from_trees(data.x.view(), model.trees(), &queries)?;
    let solver = KrrSolver::new(kernel.matrix(), params.lambda)?;
    let y = DVector::from_vec(data.y.clone());
    let weights = solver.solve(&y)?;
    let fixed = solver.fixed_point(&y)?;
    let b = model.trees().len() as f64;

    let mut run = KrrRun {
        truth: Vec::new(),
        boulevard: Vec::new(),
        krr: Vec::new(),
        combined_se: Vec::new(),
        fixed_point_distance: convergence_trace(
            &model,
            data.x.view(),
            Some(fixed.y_star.as_slice()),
        )?,
        interim: Vec::new(),
    };
    for (q, k_q) in queries.iter().zip(kernel.query_weights()) {
        run.truth.push(f.eval(q));
        run.boulevard.push(model.predict(q, false)?);
        run.krr.push(k_q.dot(&weights));
        let per_tree = model.tree_outputs(q)?;
        let per_tree_krr: Vec<f64> = model
            .trees()
            .iter()
            .map(|t| t.structure_vector(q).map(|s| s.dot(weights.as_slice())))
            .collect::<boulevard::Result<_>>()?;
        let se_blv = params.lambda * sd(&per_tree) / b.sqrt();
        let se_krr = sd(&per_tree_krr) / b.sqrt();
        run.combined_se.push(se_blv.hypot(se_krr));
    }
    let qx = Array2::from_shape_vec((queries.len(), 5), queries.concat())?;
    let total = model.trees().len();
    model.raw().for_each_stage(qx.view(), |b, p| {
        if reported(b, total, params.stride) {
            run.interim.push((b, p.to_vec()));
        }
    })?;
    Ok(run)
}

/// Paired Boulevard and ridge-regression predictions at the four query
/// points over `params.replicates` fresh samples, plus the iteration paths of
/// the first replicate.
pub fn krr_compare(params: &Params) -> Result<Table> {
    let runs: Vec<Result<KrrRun>> = (0..params.replicates)
        .into_par_iter()
        .map(|r| krr_run(params, r))
        .collect();
    let name = "krr-compare";
    let mut t = Table::new(name);
    for (rep, run) in runs.into_iter().enumerate() {
        let run = run?;
        for p in 0..run.truth.len() {
            t.push(Some(rep), "boulevard", p, "prediction", run.boulevard[p]);
            t.push(Some(rep), "krr", p, "prediction", run.krr[p]);
            t.push(Some(rep), "boulevard", p, "combined_se", run.combined_se[p]);
            t.push(Some(rep), "signal", p, "truth", run.truth[p]);
        }
        let total = run.fixed_point_distance.len();
        for (i, &d) in run.fixed_point_distance.iter().enumerate() {
            if reported(i + 1, total, params.stride) {
                t.push(Some(rep), "boulevard", i + 1, "fixed_point_sup_distance", d);
            }
        }
        if rep == 0 {
            for (b, preds) in &run.interim {
                for (p, v) in preds.iter().enumerate() {
                    t.push(
                        Some(rep),
                        &format!("boulevard:point{p}"),
                        *b,
                        "interim_prediction",
                        *v,
                    );
                }
            }
        }
    }
    Ok(t)
}

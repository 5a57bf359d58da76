use anyhow::Result;
use boulevard::boosting::{BoulevardModel, Ensemble};
use boulevard::data::ErrorLaw;
use boulevard::inference::{reproduction_interval, ReproductionInterval};
use ndarray::Array2;
use rayon::prelude::*;

use super::{sample, stream_seed, Params, Stream};
use crate::points::INFERENCE_POINTS;
use crate::recipe::{Method, Model};
use crate::record::Table;

pub const LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRun {
    pub intervals: Vec<ReproductionInterval>,
    /// Rescaled predictions of each refit at the ten points.
    pub refits: Vec<Vec<f64>>,
    /// Fraction of refits inside each interval.
    pub coverage: Vec<f64>,
    pub truth: Vec<f64>,
}

/// Intervals from the fit on replicate 0, checked against
/// `params.replicates` refits on independent samples (replicates 1, 2, ...).
pub fn interval_run(params: &Params, law: ErrorLaw) -> Result<IntervalRun> {
    let queries = Array2::from_shape_vec((INFERENCE_POINTS.len(), 5), INFERENCE_POINTS.concat())?;
    let fit = |rep: usize| -> Result<(BoulevardModel, boulevard::data::Dataset)> {
        let data = sample(params, law, params.n, rep, Stream::TrainData)?;
        let recipe =
            params
                .recipe(Method::Rblv)
                .with_seed(stream_seed(params.seed, rep, Stream::Model));
        match recipe.fit(data.x.view(), &data.y)? {
            Model::Boulevard(m) => Ok((m, data)),
            Model::Baseline(_) => unreachable!("rblv recipe fits Boulevard"),
        }
    };
    let (model, data) = fit(0)?;
    let intervals = INFERENCE_POINTS
        .iter()
        .map(|q| reproduction_interval(&model, data.x.view(), &data.y, q, LEVEL))
        .collect::<boulevard::Result<Vec<_>>>()?;
    let refits = (1..=params.replicates)
        .into_par_iter()
        .map(|rep| Ok(fit(rep)?.0.predict_rows(queries.view())?))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let coverage = intervals
        .iter()
        .enumerate()
        .map(|(p, iv)| {
            refits.iter().filter(|r| iv.contains(r[p])).count() as f64 / refits.len() as f64
        })
        .collect();
    let f = params.target()?;
    Ok(IntervalRun {
        intervals,
        refits,
        coverage,
        truth: INFERENCE_POINTS.iter().map(|q| f.eval(q)).collect(),
    })
}

pub fn reproduction_intervals(params: &Params) -> Result<Table> {
    let mut t = Table::new("reproduction-intervals");
    for (law, label) in params.error_laws()?.into_iter().zip(&params.errors) {
        let run = interval_run(params, law)?;
        for (p, iv) in run.intervals.iter().enumerate() {
            t.push(Some(0), label, p, "center", iv.center);
            t.push(Some(0), label, p, "half_width", iv.half_width);
            t.push(Some(0), label, p, "sigma_hat", iv.sigma_hat);
            t.push(
                Some(0),
                label,
                p,
                "degenerate",
                f64::from(u8::from(iv.degenerate)),
            );
            t.push(None, label, p, "coverage", run.coverage[p]);
            t.push(None, label, p, "truth", run.truth[p]);
        }
        for (i, r) in run.refits.iter().enumerate() {
            for (p, v) in r.iter().enumerate() {
                t.push(Some(i + 1), label, p, "prediction", *v);
            }
        }
    }
    Ok(t)
}

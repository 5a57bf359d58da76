use anyhow::Result;
use boulevard::data::ErrorLaw;
use boulevard::inference::ks_normality;
use ndarray::Array2;
use rayon::prelude::*;

use super::{sample, stream_seed, Params, Stream};
use crate::points::INFERENCE_POINTS;
use crate::recipe::Method;
use crate::record::Table;

/// Sample standard deviation.
pub fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn query_matrix() -> Array2<f64> {
    Array2::from_shape_vec((INFERENCE_POINTS.len(), 5), INFERENCE_POINTS.concat())
        .expect("5 columns")
}

/// Rescaled randomized-Boulevard predictions at the ten inference points,
/// one row per replicate, each replicate on a fresh sample.
pub fn replicated_predictions(
    params: &Params,
    law: ErrorLaw,
    replicates: usize,
) -> Result<Vec<Vec<f64>>> {
    let queries = query_matrix();
    (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let data = sample(params, law, params.n, rep, Stream::TrainData)?;
            let recipe =
                params
                    .recipe(Method::Rblv)
                    .with_seed(stream_seed(params.seed, rep, Stream::Model));
            recipe
                .fit(data.x.view(), &data.y)?
                .predict_rows(queries.view())
        })
        .collect()
}

fn column(rows: &[Vec<f64>], p: usize) -> Vec<f64> {
    rows.iter().map(|r| r[p]).collect()
}

/// Replicated predictions for every error law with a normality test per
/// point. A law without noise is reported but not tested.
pub fn limiting_dist(params: &Params) -> Result<(Table, Vec<String>)> {
    let mut t = Table::new("limiting-dist");
    let mut notes = Vec::new();
    for (law, label) in params.error_laws()?.into_iter().zip(&params.errors) {
        let rows = replicated_predictions(params, law, params.replicates)?;
        for (rep, r) in rows.iter().enumerate() {
            for (p, v) in r.iter().enumerate() {
                t.push(Some(rep), label, p, "prediction", *v);
            }
        }
        for p in 0..INFERENCE_POINTS.len() {
            let col = column(&rows, p);
            t.push(
                None,
                label,
                p,
                "mean",
                col.iter().sum::<f64>() / col.len() as f64,
            );
            t.push(None, label, p, "sd", sd(&col));
            if law == ErrorLaw::None {
                continue;
            }
            match ks_normality(&col) {
                Ok(ks) => {
                    t.push(None, label, p, "ks_statistic", ks.statistic);
                    t.push(None, label, p, "ks_p_value", ks.p_value);
                }
                Err(e) => notes.push(format!("{label} point {p}: normality test skipped ({e})")),
            }
        }
        if law == ErrorLaw::None {
            notes.push(format!(
                "{label}: no response noise, so predictions vary only through the sample and the trees; normality test skipped"
            ));
            for p in 0..INFERENCE_POINTS.len() {
                t.push(None, label, p, "ks_skipped", 1.0);
            }
        }
    }
    Ok((t, notes))
}

/// Per-point prediction sd under each error law, and the ratio between
/// consecutive laws.
pub fn variance_scaling(params: &Params) -> Result<Table> {
    let mut t = Table::new("variance-scaling");
    let mut previous: Option<(String, Vec<f64>)> = None;
    for (law, label) in params.error_laws()?.into_iter().zip(&params.errors) {
        let rows = replicated_predictions(params, law, params.replicates)?;
        let sds: Vec<f64> = (0..INFERENCE_POINTS.len())
            .map(|p| sd(&column(&rows, p)))
            .collect();
        for (p, s) in sds.iter().enumerate() {
            t.push(None, label, p, "sd", *s);
        }
        if let Some((prev_label, prev)) = &previous {
            for p in 0..sds.len() {
                t.push(
                    None,
                    &format!("{label}/{prev_label}"),
                    p,
                    "sd_ratio",
                    sds[p] / prev[p],
                );
            }
        }
        if law != ErrorLaw::None {
            previous = Some((label.clone(), sds));
        }
    }
    Ok(t)
}

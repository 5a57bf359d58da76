//! Normality checks for replicated predictions and reproduction intervals
//! for a single fit.

use ndarray::ArrayView2;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::boosting::{BoulevardModel, Ensemble};
use crate::error::{Error, Result};

/// Smallest value returned by [`noise_variance_estimate`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Ensemble average of the structure vectors at a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalInfluence {
    pub k_hat: Vec<f64>,
    pub norm2: f64,
}

pub fn empirical_influence(model: &BoulevardModel, x: &[f64]) -> Result<EmpiricalInfluence> {
    let trees = model.trees();
    let mut k_hat = vec![0.0; model.n_train()];
    let scale = 1.0 / trees.len() as f64;
    for tree in trees {
        for &(j, w) in tree.structure_vector(x)?.entries() {
            k_hat[j] += scale * w;
        }
    }
    let norm2 = k_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(EmpiricalInfluence { k_hat, norm2 })
}

/// Mean squared training residual of the rescaled model, floored at
/// [`VARIANCE_FLOOR`].
pub fn noise_variance_estimate(
    model: &BoulevardModel,
    x: ArrayView2<f64>,
    y: &[f64],
) -> Result<f64> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let fitted = model.predict_rows(x)?;
    let mse = fitted
        .iter()
        .zip(y)
        .map(|(f, v)| (v - f).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    Ok(mse.max(VARIANCE_FLOOR))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproductionInterval {
    /// Rescaled prediction at the query.
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    pub sigma_hat: f64,
    /// Set when the interval has no usable width: no training mass at the
    /// query, or a residual variance at the floor.
    pub degenerate: bool,
}

impl ReproductionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lower()..=self.upper()).contains(&v)
    }
}

/// `z_{(1+level)/2} * sqrt(2) * ((1+lambda)/lambda) * lambda * k_norm * sigma_hat`.
///
/// The raw-scale sd is bounded by `lambda * k_norm * sigma_hat`; it is moved
/// to the rescaled scale and doubled in variance because the interval is for
/// an independent refit.
pub fn interval_half_width(lambda: f64, k_norm: f64, sigma_hat: f64, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level {level} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
    let sd_raw = lambda * k_norm * sigma_hat;
    Ok(z * std::f64::consts::SQRT_2 * (1.0 + lambda) / lambda * sd_raw)
}

/// Interval around the rescaled prediction at `query` for where a refit on an
/// independent sample would land. `x` and `y` are the training data.
pub fn reproduction_interval(
    model: &BoulevardModel,
    x: ArrayView2<f64>,
    y: &[f64],
    query: &[f64],
    level: f64,
) -> Result<ReproductionInterval> {
    let variance = noise_variance_estimate(model, x, y)?;
    let influence = empirical_influence(model, query)?;
    let sigma_hat = variance.sqrt();
    let half_width = interval_half_width(model.lambda(), influence.norm2, sigma_hat, level)?;
    let degenerate = influence.norm2 == 0.0 || variance <= VARIANCE_FLOOR;
    if degenerate {
        log::warn!("degenerate reproduction interval at {query:?}");
    }
    Ok(ReproductionInterval {
        center: model.predict(query, true)?,
        half_width,
        level,
        sigma_hat,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Minimum sample size accepted by [`ks_normality`].
pub const KS_MIN_SAMPLES: usize = 20;

/// One-sample Kolmogorov-Smirnov test against a normal law with the sample
/// mean and sd, with the asymptotic Kolmogorov p-value.
pub fn ks_normality(samples: &[f64]) -> Result<KsResult> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::Config(format!(
            "need at least {KS_MIN_SAMPLES} samples, got {n}"
        )));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(sd > 0.0) || sd <= 1e-12 * mean.abs() {
        return Err(Error::Degenerate("samples are constant".into()));
    }
    let law = Normal::new(mean, sd).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = law.cdf(v);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_sf(nf.sqrt() * statistic),
    })
}

/// `P(K > t)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // Theta-function form converges fast for small t.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / t
            * (1..=20)
                .map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp())
                .sum::<f64>();
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let sum: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * t * t).exp()
        })
        .sum();
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::boosting::{boulevard_fit, BoulevardConfig};
    use crate::seed;
    use crate::trees::{assign_leaf_values, StructureConstraints, TreeStructure};

    fn grid(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 3) % n) as f64 / n as f64)
    }

    fn single_leaf_model(n: usize, y: &[f64]) -> BoulevardModel {
        let cfg =
            BoulevardConfig::new(0.5, 1.0, 4).with_constraints(StructureConstraints::new(n, 4));
        boulevard_fit(grid(n).view(), y, &cfg).unwrap()
    }

    #[test]
    fn uniform_influence_for_single_leaves() {
        let n = 16;
        let model = single_leaf_model(n, &vec![1.0; n]);
        let inf = empirical_influence(&model, &[0.3, 0.8]).unwrap();
        assert!(inf
            .k_hat
            .iter()
            .all(|&v| (v - 1.0 / n as f64).abs() < 1e-15));
        assert!((inf.norm2 - 1.0 / (n as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn influence_averages_tree_vectors() {
        let x = Array2::from_shape_vec((4, 1), vec![0.1, 0.2, 0.6, 0.9]).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let cfg =
            BoulevardConfig::new(0.5, 1.0, 2).with_constraints(StructureConstraints::new(4, 1));
        let mut model = boulevard_fit(x.view(), &y, &cfg).unwrap();
        let halves = TreeStructure::single_leaf(1).split(0, 0, 0.5).unwrap();
        let w0 = crate::Subsample::from_indices(4, vec![0, 1, 2]).unwrap();
        let w1 = crate::Subsample::from_indices(4, vec![1, 3]).unwrap();
        model.trees[0] = assign_leaf_values(halves.clone(), &y, x.view(), w0).unwrap();
        model.trees[1] = assign_leaf_values(halves, &y, x.view(), w1).unwrap();
        // Query in the left half: tree 0 weights {0,1} by 1/2, tree 1 weights {1} by 1.
        let inf = empirical_influence(&model, &[0.3]).unwrap();
        assert_eq!(inf.k_hat, vec![0.25, 0.75, 0.0, 0.0]);
        // Right half: tree 0 weights {2}, tree 1 weights {3}.
        let inf = empirical_influence(&model, &[0.7]).unwrap();
        assert_eq!(inf.k_hat, vec![0.0, 0.0, 0.5, 0.5]);
        let inf = empirical_influence(&model, &[0.55]).unwrap();
        assert!(inf.k_hat.iter().sum::<f64>() <= 1.0 + 1e-15);
    }

    #[test]
    fn empty_region_has_zero_influence() {
        let x = Array2::from_shape_vec((4, 1), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let cfg =
            BoulevardConfig::new(0.5, 1.0, 3).with_constraints(StructureConstraints::new(4, 1));
        let mut model = boulevard_fit(x.view(), &y, &cfg).unwrap();
        let halves = TreeStructure::single_leaf(1).split(0, 0, 0.5).unwrap();
        for t in model.trees.iter_mut() {
            *t = assign_leaf_values(halves.clone(), &y, x.view(), crate::Subsample::full(4))
                .unwrap();
        }
        let inf = empirical_influence(&model, &[0.8]).unwrap();
        assert_eq!(inf.norm2, 0.0);
        let interval = reproduction_interval(&model, x.view(), &y, &[0.8], 0.95).unwrap();
        assert!(interval.degenerate);
        assert_eq!(interval.half_width, 0.0);
    }

    #[test]
    fn influence_stays_in_containing_leaves() {
        let mut rng = seed::rng(3);
        let n = 60;
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let cfg =
            BoulevardConfig::new(0.5, 0.7, 10).with_constraints(StructureConstraints::new(3, 4));
        let model = boulevard_fit(x.view(), &y, &cfg).unwrap();
        let q: Vec<f64> = x.row(5).to_vec();
        let inf = empirical_influence(&model, &q).unwrap();
        for (j, &v) in inf.k_hat.iter().enumerate() {
            let shares_leaf = model.trees().iter().any(|t| {
                let s = t.structure();
                s.leaf_of(&q).unwrap() == s.leaf_of(x.row(j).as_slice().unwrap()).unwrap()
            });
            if !shares_leaf {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn half_width_matches_hand_computation() {
        let hw = interval_half_width(0.5, 0.1, 1.0, 0.95).unwrap();
        assert!((hw - 1.959964 * std::f64::consts::SQRT_2 * 3.0 * 0.05).abs() < 1e-5);
        assert!((hw - 0.4158).abs() < 1e-4);
        assert!(interval_half_width(0.5, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn half_width_is_monotone() {
        let base = interval_half_width(0.7, 0.2, 0.5, 0.9).unwrap();
        assert!(interval_half_width(0.7, 0.21, 0.5, 0.9).unwrap() > base);
        assert!(interval_half_width(0.7, 0.2, 0.51, 0.9).unwrap() > base);
        assert!(interval_half_width(0.7, 0.2, 0.5, 0.95).unwrap() > base);
    }

    #[test]
    fn exact_fit_hits_variance_floor() {
        let n = 10;
        let model = single_leaf_model(n, &vec![0.0; n]);
        let v = noise_variance_estimate(&model, grid(n).view(), &vec![0.0; n]).unwrap();
        assert_eq!(v, VARIANCE_FLOOR);
        let interval =
            reproduction_interval(&model, grid(n).view(), &vec![0.0; n], &[0.5, 0.5], 0.95)
                .unwrap();
        assert!(interval.degenerate);
        assert!(interval.half_width < 1e-5);
    }

    fn noise_only(n: usize, amplitude: f64, seed_value: u64) -> f64 {
        let mut rng = seed::rng(seed_value);
        let y: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-amplitude..amplitude))
            .collect();
        let model = single_leaf_model(n, &y);
        noise_variance_estimate(&model, grid(n).view(), &y).unwrap()
    }

    #[test]
    fn pure_noise_variance() {
        let v = noise_only(2000, 1.0, 5);
        assert!((v - 1.0 / 3.0).abs() < 0.15 / 3.0, "v = {v}");
        let ratio = noise_only(2000, 2.0, 6) / noise_only(2000, 1.0, 7);
        assert!((3.0..=5.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn ks_accepts_normal_draws() {
        let mut rng = seed::rng(2024);
        let draws: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = ks_normality(&draws).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn ks_rejects_uniform_draws() {
        let draws = |n: usize, s: u64| {
            let mut rng = seed::rng(s);
            (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>()
        };
        // The population distance is about 0.057, so p falls near 3e-3 at
        // n = 1000 and below 1e-3 by n = 2000.
        assert!(ks_normality(&draws(1000, 9)).unwrap().p_value < 0.01);
        assert!(ks_normality(&draws(2000, 9)).unwrap().p_value < 0.001);
    }

    #[test]
    fn ks_on_normal_quantiles_is_small() {
        let n = 100;
        let law = Normal::standard();
        let q: Vec<f64> = (1..=n)
            .map(|i| law.inverse_cdf(i as f64 / (n + 1) as f64))
            .collect();
        let r = ks_normality(&q).unwrap();
        assert!(r.statistic <= 0.05, "{r:?}");
    }

    #[test]
    fn ks_rejects_bad_input() {
        assert!(matches!(ks_normality(&[1.0; 19]), Err(Error::Config(_))));
        assert!(matches!(
            ks_normality(&[2.5; 40]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Reference values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 1e-3);
        // Both series agree where they meet.
        let c = -std::f64::consts::PI.powi(2) / 8.0;
        let theta = 1.0
            - (2.0 * std::f64::consts::PI).sqrt()
                * (1..=20)
                    .map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp())
                    .sum::<f64>();
        assert!((theta - kolmogorov_sf(1.0)).abs() < 1e-12);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }
}

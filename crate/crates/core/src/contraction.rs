//! Simulation of stochastic contraction processes
//! `Z_t = lambda_t * Z_{t-1} + eps_t`, with `eps_t` uniform on a ball whose
//! radius shrinks over time.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `(t - 1 + lambda) / t`, the coefficient of the averaged boosting update.
    Averaged {
        lambda: f64,
    },
    Constant(f64),
}

impl LambdaRule {
    pub fn at(self, t: u64) -> f64 {
        match self {
            LambdaRule::Averaged { lambda } => (t as f64 - 1.0 + lambda) / t as f64,
            LambdaRule::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseRule {
    /// Radius `c / t`.
    Harmonic {
        c: f64,
    },
    Constant(f64),
}

impl NoiseRule {
    pub fn radius(self, t: u64) -> f64 {
        match self {
            NoiseRule::Harmonic { c } => c / t as f64,
            NoiseRule::Constant(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSpec {
    pub lambda: LambdaRule,
    pub noise: NoiseRule,
    pub horizon: u64,
    pub z0: Vec<f64>,
}

impl Default for ContractionSpec {
    /// `lambda_t = (t - 0.5) / t`, radius `1 / t`, two dimensions, `T = 10^5`,
    /// started at a unit vector.
    fn default() -> Self {
        ContractionSpec {
            lambda: LambdaRule::Averaged { lambda: 0.5 },
            noise: NoiseRule::Harmonic { c: 1.0 },
            horizon: 100_000,
            z0: vec![1.0, 0.0],
        }
    }
}

impl ContractionSpec {
    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.z0.is_empty() {
            return Err(Error::Config("z0 must have at least one coordinate".into()));
        }
        match self.lambda {
            LambdaRule::Averaged { lambda } if !(lambda > 0.0 && lambda <= 1.0) => {
                return Err(Error::Config(format!("lambda {lambda} outside (0, 1]")));
            }
            LambdaRule::Constant(c) if !(c > 0.0 && c <= 1.0) => {
                return Err(Error::Config(format!(
                    "constant coefficient {c} outside (0, 1]"
                )));
            }
            _ => {}
        }
        let scale = match self.noise {
            NoiseRule::Harmonic { c } => c,
            NoiseRule::Constant(r) => r,
        };
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise scale {scale} must be nonnegative"
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// `E|eps_t|^2` for the uniform law on the ball of radius `r` in `d`
    /// dimensions: `d / (d + 2) * r^2`.
    pub fn noise_second_moment(&self, t: u64) -> f64 {
        let d = self.dim() as f64;
        d / (d + 2.0) * self.noise.radius(t).powi(2)
    }

    /// `sum_{t0 < t <= horizon} E|eps_t|^2`.
    pub fn tail_second_moments(&self, t0: u64) -> f64 {
        (t0 + 1..=self.horizon)
            .map(|t| self.noise_second_moment(t))
            .sum()
    }

    /// Largest noise radius after `t0`.
    pub fn sup_future_noise(&self, t0: u64) -> f64 {
        match self.noise {
            NoiseRule::Harmonic { c } => c / (t0 + 1) as f64,
            NoiseRule::Constant(r) => r,
        }
    }
}

/// Uniform draw from the ball of radius `r`.
pub fn uniform_ball<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R, out: &mut [f64]) {
    if r == 0.0 {
        out.fill(0.0);
        return;
    }
    let mut norm = 0.0;
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
        norm += *v * *v;
    }
    let norm = norm.sqrt();
    let radius = r * rng.random::<f64>().powf(1.0 / dim as f64);
    for v in out.iter_mut() {
        *v *= radius / norm;
    }
}

/// Run the process from `z` at time `start` to the horizon, calling
/// `visit(t, z_t)` after every step.
pub fn run_path(
    spec: &ContractionSpec,
    start: u64,
    z: &mut [f64],
    rng: &mut SeededRng,
    mut visit: impl FnMut(u64, &[f64]) -> bool,
) {
    let dim = z.len();
    let mut eps = vec![0.0; dim];
    for t in start + 1..=spec.horizon {
        let lambda = spec.lambda.at(t);
        uniform_ball(dim, spec.noise.radius(t), rng, &mut eps);
        for (zi, e) in z.iter_mut().zip(&eps) {
            *zi = lambda * *zi + e;
        }
        if !visit(t, z) {
            break;
        }
    }
}

/// The full path `Z_0, Z_1, ..., Z_T`.
pub fn simulate_contraction(spec: &ContractionSpec, rng: &mut SeededRng) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut z = spec.z0.clone();
    let mut path = Vec::with_capacity(spec.horizon as usize + 1);
    path.push(z.clone());
    run_path(spec, 0, &mut z, rng, |_, zt| {
        path.push(zt.to_vec());
        true
    });
    Ok(path)
}

pub fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Lower bound on the probability that the path after `T` stays within
/// `|Z_T| + delta`:
/// `1 - 4 sqrt(d) * tail / min(delta^2, beta^2)` with
/// `beta = |Z_T| + delta - sqrt(d) * sup_noise`, clamped to `[0, 1]`.
pub fn kolmogorov_bound(
    z_norm: f64,
    delta: f64,
    tail_second_moments: f64,
    sup_future_noise: f64,
    dim: usize,
) -> Result<f64> {
    let root_d = (dim as f64).sqrt();
    let beta = z_norm + delta - root_d * sup_future_noise;
    if !(beta > 0.0) {
        return Err(Error::Config(format!(
            "bound inapplicable: beta = {beta} is not positive"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta {delta} must be positive")));
    }
    let denom = (delta * delta).min(beta * beta);
    Ok((1.0 - 4.0 * root_d * tail_second_moments / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeReport {
    pub t0: u64,
    pub radius: f64,
    pub trials: usize,
    /// Fraction of paths that never left the ball of radius `2 * radius`.
    pub stay_fraction: f64,
    /// `None` when the bound does not apply to this configuration.
    pub bound: Option<f64>,
}

impl EscapeReport {
    pub fn standard_error(&self) -> f64 {
        (self.stay_fraction * (1.0 - self.stay_fraction) / self.trials as f64).sqrt()
    }

    /// Whether the observed fraction is at least the bound minus `k`
    /// standard errors. An inapplicable bound is treated as 0.
    pub fn consistent(&self, k: f64) -> bool {
        self.stay_fraction >= self.bound.unwrap_or(0.0) - k * self.standard_error()
    }
}

/// Start `trials` paths at `radius * z0 / |z0|` at time `t0` and count the
/// ones that stay inside the ball of radius `2 * radius` up to the horizon.
pub fn escape_experiment(
    spec: &ContractionSpec,
    radius: f64,
    t0: u64,
    trials: usize,
    seed_value: u64,
) -> Result<EscapeReport> {
    spec.validate()?;
    if !(radius > 0.0) || trials == 0 {
        return Err(Error::Config(
            "radius must be positive and trials at least 1".into(),
        ));
    }
    let z0_norm = norm(&spec.z0);
    if z0_norm == 0.0 {
        return Err(Error::Config(
            "z0 must be nonzero to set a start direction".into(),
        ));
    }
    let start: Vec<f64> = spec.z0.iter().map(|v| radius * v / z0_norm).collect();
    let stayed: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed::derived_rng(seed_value, &[t0, trial as u64]);
            let mut z = start.clone();
            let mut inside = true;
            run_path(spec, t0, &mut z, &mut rng, |_, zt| {
                inside = norm(zt) <= 2.0 * radius;
                inside
            });
            usize::from(inside)
        })
        .sum();
    let bound = kolmogorov_bound(
        radius,
        radius,
        spec.tail_second_moments(t0),
        spec.sup_future_noise(t0),
        spec.dim(),
    )
    .ok();
    Ok(EscapeReport {
        t0,
        radius,
        trials,
        stay_fraction: stayed as f64 / trials as f64,
        bound,
    })
}

use anyhow::Result;
use boulevard::contraction::{
    escape_experiment, norm, run_path, ContractionSpec, EscapeReport, NoiseRule,
};
use boulevard::seed;
use rayon::prelude::*;

use super::Params;
use crate::record::Table;

/// Horizon of the escape runs; the tail noise beyond it is negligible next
/// to the ball radius.
pub const ESCAPE_HORIZON: u64 = 20_000;
pub const ESCAPE_RADIUS: f64 = 0.1;
pub const ESCAPE_T0: [u64; 4] = [10, 100, 1_000, 10_000];
pub const NOISE_SCALES: [f64; 3] = [0.25, 1.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeCase {
    pub noise: f64,
    pub report: EscapeReport,
}

/// `(|Z_{T/10}|, |Z_T|)` for `paths` default-spec paths.
pub fn default_path_norms(
    spec: &ContractionSpec,
    paths: usize,
    seed_value: u64,
) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let checkpoint = spec.horizon / 10;
    Ok((0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed::derived_rng(seed_value, &[p as u64]);
            let mut z = spec.z0.clone();
            let mut early = if checkpoint == 0 { norm(&z) } else { f64::NAN };
            run_path(spec, 0, &mut z, &mut rng, |t, zt| {
                if t == checkpoint {
                    early = norm(zt);
                }
                true
            });
            (early, norm(&z))
        })
        .collect())
}

/// Escape runs over every `(t0, noise scale)` pair.
pub fn escape_grid(
    t0s: &[u64],
    noises: &[f64],
    trials: usize,
    seed_value: u64,
) -> Result<Vec<EscapeCase>> {
    let mut cases = Vec::new();
    for &c in noises {
        let spec = ContractionSpec {
            noise: NoiseRule::Harmonic { c },
            horizon: ESCAPE_HORIZON,
            ..ContractionSpec::default()
        };
        for &t0 in t0s {
            let seed_value = seed::derive(seed_value, &[c.to_bits(), t0]);
            let report = escape_experiment(&spec, ESCAPE_RADIUS, t0, trials, seed_value)?;
            cases.push(EscapeCase { noise: c, report });
        }
    }
    Ok(cases)
}

/// Escape grid with `4 * replicates` trials per cell, and `replicates`
/// default paths at the full horizon.
pub fn contraction_lab(params: &Params) -> Result<Table> {
    let mut t = Table::new("contraction-lab");
    let cases = escape_grid(
        &ESCAPE_T0,
        &NOISE_SCALES,
        4 * params.replicates,
        seed::derive(params.seed, &[0]),
    )?;
    for case in &cases {
        let method = format!("c={}", case.noise);
        let index = case.report.t0 as usize;
        t.push(
            None,
            &method,
            index,
            "stay_fraction",
            case.report.stay_fraction,
        );
        t.push(
            None,
            &method,
            index,
            "binomial_se",
            case.report.standard_error(),
        );
        t.push(
            None,
            &method,
            index,
            "bound",
            case.report.bound.unwrap_or(0.0),
        );
        t.push(
            None,
            &method,
            index,
            "bound_applies",
            f64::from(u8::from(case.report.bound.is_some())),
        );
    }
    let spec = ContractionSpec::default();
    let norms = default_path_norms(&spec, params.replicates, seed::derive(params.seed, &[1]))?;
    for (p, (early, last)) in norms.iter().enumerate() {
        t.push(
            Some(p),
            "default",
            (spec.horizon / 10) as usize,
            "norm",
            *early,
        );
        t.push(Some(p), "default", spec.horizon as usize, "norm", *last);
    }
    Ok(t)
}

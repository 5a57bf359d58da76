//! Simulated regression data, CSV input and output, and fold assignment.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetFunction {
    /// `x1 + 3 x2 + x3 x4`
    F1,
    /// `x1 + 3 x2 + (1 - x3)^2 + x4 x5 + (1 - x6)^6 + x7`
    F2,
    /// `x1 + 3 x2 + x3^2 + 2 x4 x5`
    Mean5,
}

impl TargetFunction {
    pub fn arity(self) -> usize {
        match self {
            TargetFunction::F1 => 4,
            TargetFunction::F2 => 7,
            TargetFunction::Mean5 => 5,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TargetFunction::F1 => x[0] + 3.0 * x[1] + x[2] * x[3],
            TargetFunction::F2 => {
                x[0] + 3.0 * x[1] + (1.0 - x[2]).powi(2) + x[3] * x[4] + (1.0 - x[5]).powi(6) + x[6]
            }
            TargetFunction::Mean5 => x[0] + 3.0 * x[1] + x[2] * x[2] + 2.0 * x[3] * x[4],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetFunction::F1 => "f1",
            TargetFunction::F2 => "f2",
            TargetFunction::Mean5 => "mean5",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "f1" => Some(TargetFunction::F1),
            "f2" => Some(TargetFunction::F2),
            "mean5" => Some(TargetFunction::Mean5),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorLaw {
    None,
    Normal {
        sd: f64,
    },
    /// Uniform on `[-a, a]`.
    Uniform {
        a: f64,
    },
    /// `-1` or `1` with equal probability.
    Rademacher,
    /// `-1` with probability 1/2, otherwise uniform on `[0, 2]`.
    Mixed,
}

impl ErrorLaw {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::None => 0.0,
            ErrorLaw::Normal { sd } => Normal::new(0.0, sd).expect("validated sd").sample(rng),
            ErrorLaw::Uniform { a } => rng.random_range(-a..=a),
            ErrorLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ErrorLaw::Mixed => {
                if rng.random::<bool>() {
                    -1.0
                } else {
                    rng.random_range(0.0..=2.0)
                }
            }
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            ErrorLaw::None => 0.0,
            ErrorLaw::Normal { sd } => sd * sd,
            ErrorLaw::Uniform { a } => a * a / 3.0,
            ErrorLaw::Rademacher => 1.0,
            // E[e^2] = 0.5 * 1 + 0.5 * 4/3, mean 0.
            ErrorLaw::Mixed => 7.0 / 6.0,
        }
    }

    pub fn label(self) -> String {
        match self {
            ErrorLaw::None => "none".into(),
            ErrorLaw::Normal { sd } => format!("normal({sd})"),
            ErrorLaw::Uniform { a } => format!("uniform({a})"),
            ErrorLaw::Rademacher => "rademacher".into(),
            ErrorLaw::Mixed => "mixed".into(),
        }
    }

    /// Parses the labels produced by [`ErrorLaw::label`].
    pub fn parse(label: &str) -> Option<Self> {
        let arg = |prefix: &str| {
            label
                .strip_prefix(prefix)
                .and_then(|s| s.strip_prefix('('))
                .and_then(|s| s.strip_suffix(')'))
                .and_then(|s| s.parse::<f64>().ok())
        };
        match label {
            "none" => Some(ErrorLaw::None),
            "rademacher" => Some(ErrorLaw::Rademacher),
            "mixed" => Some(ErrorLaw::Mixed),
            _ => arg("normal")
                .map(|sd| ErrorLaw::Normal { sd })
                .or_else(|| arg("uniform").map(|a| ErrorLaw::Uniform { a })),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            ErrorLaw::Normal { sd } if !(sd > 0.0 && sd.is_finite()) => {
                Err(Error::Config(format!("normal sd {sd} must be positive")))
            }
            ErrorLaw::Uniform { a } if !(a > 0.0 && a.is_finite()) => Err(Error::Config(format!(
                "uniform half-width {a} must be positive"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub function: TargetFunction,
    pub n: usize,
    pub dim: usize,
    pub error: ErrorLaw,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(function: TargetFunction, n: usize, error: ErrorLaw, seed: u64) -> Self {
        GeneratorSpec {
            function,
            n,
            dim: function.arity(),
            error,
            seed,
        }
    }
}

/// Covariates, responses and, for simulated data, the noiseless signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub signal: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaling: Option<MinMaxScaling>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(ndarray::Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            signal: self
                .signal
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            scaling: self.scaling.clone(),
        }
    }
}

fn default_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("x{j}")).collect()
}

/// Covariates i.i.d. uniform on `[0,1]^dim`; extra coordinates beyond the
/// function's arity are noise features.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    let arity = spec.function.arity();
    if spec.dim < arity {
        return Err(Error::Config(format!(
            "{} needs at least {arity} covariates, got {}",
            spec.function.name(),
            spec.dim
        )));
    }
    spec.error.validate()?;
    let mut rng = seed::rng(spec.seed);
    let x = Array2::from_shape_fn((spec.n, spec.dim), |_| rng.random::<f64>());
    let signal: Vec<f64> = x
        .outer_iter()
        .map(|row| spec.function.eval(row.as_slice().expect("standard layout")))
        .collect();
    let y = signal
        .iter()
        .map(|s| s + spec.error.sample(&mut rng))
        .collect();
    Ok(Dataset {
        x,
        y,
        signal: Some(signal),
        feature_names: default_names(spec.dim),
        target_name: "y".into(),
        scaling: None,
    })
}

/// Per-column affine map onto `[0, 1]` fitted on training covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaling {
    pub fn fit(x: &Array2<f64>) -> Self {
        let (mut min, mut max) = (
            vec![f64::INFINITY; x.ncols()],
            vec![f64::NEG_INFINITY; x.ncols()],
        );
        for row in x.outer_iter() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        MinMaxScaling { min, max }
    }

    /// Scale `x` in place; values outside the fitted range are clamped and
    /// constant columns map to 0.
    pub fn apply(&self, x: &mut Array2<f64>) -> Result<()> {
        if x.ncols() != self.min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.min.len(),
                found: x.ncols(),
            });
        }
        for mut row in x.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 {
                    ((*v - self.min[j]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(())
    }
}

/// Name of the optional column holding the noiseless signal.
pub const SIGNAL_COLUMN: &str = "signal";

/// Read a numeric CSV with a header row. `target` names the response
/// column (or gives its 0-based index). A column named `signal` is read as
/// the noiseless signal rather than a covariate.
pub fn load_csv(path: &Path, target: &str, normalize: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .or_else(|| target.parse::<usize>().ok().filter(|&i| i < headers.len()))
        .ok_or_else(|| Error::Config(format!("no column '{target}' in header")))?;
    let signal_col = headers
        .iter()
        .position(|h| h == SIGNAL_COLUMN)
        .filter(|&c| c != target_col);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != target_col && Some(c) != signal_col)
        .collect();

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut signal = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        let line = row_index + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let field = |c: usize| -> Result<f64> {
            let raw = record[c].trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column '{}': '{raw}' is not a finite number", headers[c]),
                })
        };
        for &c in &feature_cols {
            values.push(field(c)?);
        }
        y.push(field(target_col)?);
        if let Some(c) = signal_col {
            signal.push(field(c)?);
        }
    }
    if y.is_empty() {
        return Err(Error::Degenerate(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    let mut x =
        Array2::from_shape_vec((y.len(), feature_cols.len()), values).expect("row lengths checked");
    let scaling = if normalize {
        let s = MinMaxScaling::fit(&x);
        s.apply(&mut x)?;
        Some(s)
    } else {
        None
    };
    Ok(Dataset {
        x,
        y,
        signal: signal_col.map(|_| signal),
        feature_names: feature_cols.iter().map(|&c| headers[c].clone()).collect(),
        target_name: headers[target_col].clone(),
        scaling,
    })
}

/// Write covariates, the response and (if present) the signal, with floats
/// in shortest round-trip form.
pub fn save_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(&data.target_name);
    if data.signal.is_some() {
        header.push(SIGNAL_COLUMN);
    }
    writer.write_record(&header)?;
    for (i, row) in data.x.outer_iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(f64::to_string).collect();
        record.push(data.y[i].to_string());
        if let Some(s) = &data.signal {
            record.push(s[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shuffled assignment of `0..n` to `k` test folds of sizes differing by at
/// most one. Each fold is returned sorted.
pub fn kfold_indices(n: usize, k: usize, seed_value: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds for {n} points")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use boulevard::boosting::{read_model, write_model, Ensemble};
use boulevard::data::{
    generate, load_csv, save_csv, ErrorLaw, GeneratorSpec, MinMaxScaling, TargetFunction,
};
use boulevard::kernel::{estimate_kernel_mc, verify_kernel_properties, RandomizedSampler};
use boulevard::{KrrSolver, Subsample};
use boulevard_cli::cv::kfold_cv;
use boulevard_cli::experiments::{self, lambda_sweep, Params, DEFAULT_DEPTH};
use boulevard_cli::recipe::{Method, Model, Recipe};
use boulevard_cli::record::{Manifest, Table};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use ndarray::Array2;

#[derive(Parser)]
#[command(
    name = "boulevard",
    version,
    about = "Boulevard boosting, baselines and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV.
    Generate {
        #[arg(long, default_value = "mean5")]
        function: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Number of covariates; defaults to the function's arity.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value = "uniform(1)")]
        error: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on a CSV file, or cross-validate it with --folds.
    Fit {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Response column, if the file has one; it is not used as a covariate.
        #[arg(long)]
        target: Option<String>,
        /// Scaling written by `fit --normalize`.
        #[arg(long)]
        scaling: Option<PathBuf>,
        /// Report Boulevard predictions without the (1 + lambda) / lambda rescale.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo estimate of the randomized-tree kernel and its fixed point.
    Kernel {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        replications: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named experiment, or rerun one from its manifest.
    Experiment {
        /// One of mse-curves, krr-compare, limiting-dist,
        /// reproduction-intervals, variance-scaling, contraction-lab.
        name: Option<String>,
        #[arg(long, conflicts_with = "name")]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare greedy and randomized Boulevard across shrinkage values.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        lambdas: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    data: PathBuf,
    /// Response column name or 0-based index.
    #[arg(long, default_value = "y")]
    target: String,
    /// Min-max scale covariates to [0, 1].
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "rblv")]
    mode: String,
    #[arg(long, default_value_t = 0.8)]
    lambda: f64,
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[arg(long, default_value_t = 500)]
    trees: usize,
    #[arg(long, default_value_t = 10)]
    leaf_size: usize,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn recipe(&self) -> Result<Recipe> {
        Ok(Recipe {
            method: Method::parse(&self.mode)?,
            lambda: self.lambda,
            theta: self.theta,
            trees: self.trees,
            leaf_size: self.leaf_size,
            depth: self.depth,
            learning_rate: self.learning_rate,
            seed: self.seed,
        })
    }
}

/// Changes to an experiment's default parameters.
#[derive(Args)]
struct Overrides {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the full reference sizes instead of desk scale.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    leaf_size: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated error laws, e.g. `uniform(1),rademacher`.
    #[arg(long, value_delimiter = ',')]
    errors: Option<Vec<String>>,
    /// Comma-separated methods for mse-curves.
    #[arg(long = "mode", value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

impl Overrides {
    fn params(&self, name: &str) -> Result<Params> {
        let mut p = experiments::defaults(name, self.seed, self.full)?;
        if let Some(v) = self.lambda {
            p.lambda = v;
            p.lambdas = vec![v];
        }
        p.theta = self.theta.unwrap_or(p.theta);
        p.trees = self.trees.unwrap_or(p.trees);
        p.leaf_size = self.leaf_size.unwrap_or(p.leaf_size);
        p.depth = self.depth.unwrap_or(p.depth);
        p.n = self.n.unwrap_or(p.n);
        p.replicates = self.replicates.unwrap_or(p.replicates);
        if let Some(e) = &self.errors {
            p.errors = e.clone();
        }
        if let Some(m) = &self.methods {
            p.methods = m.clone();
        }
        Ok(p)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate {
            function,
            n,
            dim,
            error,
            seed,
            out,
        } => {
            let Some(f) = TargetFunction::from_name(&function) else {
                bail!("unknown function '{function}' (expected f1, f2 or mean5)");
            };
            let Some(law) = ErrorLaw::parse(&error) else {
                bail!("unknown error law '{error}'");
            };
            let mut spec = GeneratorSpec::new(f, n, law, seed);
            if let Some(d) = dim {
                spec.dim = d;
            }
            save_csv(&out, &generate(&spec)?)?;
            log::info!("wrote {n} rows to {}", out.display());
        }
        Command::Fit {
            input,
            model,
            folds,
            stride,
            out,
        } => fit(&input, &model, folds, stride, &out)?,
        Command::Predict {
            model,
            data,
            target,
            scaling,
            raw,
            out,
        } => predict(
            &model,
            &data,
            target.as_deref(),
            scaling.as_deref(),
            raw,
            &out,
        )?,
        Command::Kernel {
            input,
            model,
            replications,
            out,
        } => kernel(&input, &model, replications, &out)?,
        Command::Experiment {
            name,
            manifest,
            overrides,
            out,
        } => {
            let params = match (&name, &manifest) {
                (_, Some(path)) => Manifest::read(path)?.params,
                (Some(name), None) => overrides.params(name)?,
                (None, None) => bail!("give an experiment name or --manifest"),
            };
            let name = match manifest {
                Some(path) => Manifest::read(&path)?.experiment,
                None => name.expect("checked above"),
            };
            let start = Instant::now();
            let (table, notes) = experiments::run_experiment(&name, &params)?;
            finish(&out, &name, params, &table, notes, start)?;
        }
        Command::Sweep {
            lambdas,
            overrides,
            out,
        } => {
            let mut params = overrides.params("mse-curves")?;
            params.lambdas = lambdas;
            params.methods = vec!["blv".into(), "rblv".into()];
            params.validate()?;
            let start = Instant::now();
            let table = lambda_sweep(&params)?;
            finish(&out, "lambda-sweep", params, &table, vec![], start)?;
        }
    }
    Ok(())
}

fn finish(
    out: &Path,
    name: &str,
    params: Params,
    table: &Table,
    notes: Vec<String>,
    start: Instant,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let file = format!("{name}.csv");
    table.write_csv(&out.join(&file))?;
    for note in &notes {
        log::warn!("{note}");
    }
    let manifest = Manifest {
        experiment: name.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        params,
        outputs: vec![file],
        rows: table.rows.len(),
        wall_seconds: start.elapsed().as_secs_f64(),
        notes,
    };
    let path = manifest.write(out)?;
    log::info!("{} rows; manifest at {}", table.rows.len(), path.display());
    Ok(())
}

fn fit(
    input: &Input,
    args: &ModelArgs,
    folds: Option<usize>,
    stride: usize,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let recipe = args.recipe()?;
    if let Some(k) = folds {
        // Scaling is refit on each training fold.
        let data = load_csv(&input.data, &input.target, false)?;
        let cv = kfold_cv(&data, k, &recipe, args.seed, stride, input.normalize)?;
        let mut table = Table::new("cv");
        for (fold, c) in cv.curves.iter().enumerate() {
            for (i, &b) in c.iterations.iter().enumerate() {
                table.push(Some(fold), recipe.method.name(), b, "train_mse", c.train[i]);
                table.push(Some(fold), recipe.method.name(), b, "test_mse", c.test[i]);
            }
        }
        for (i, &b) in cv.mean.iterations.iter().enumerate() {
            table.push(None, recipe.method.name(), b, "train_mse", cv.mean.train[i]);
            table.push(None, recipe.method.name(), b, "test_mse", cv.mean.test[i]);
        }
        table.write_csv(&out.join("cv.csv"))?;
        if let (Some(tr), Some(te)) = (cv.mean.train.last(), cv.mean.test.last()) {
            log::info!("{k}-fold mean train mse {tr:.6}, test mse {te:.6}");
        }
        return Ok(());
    }
    let data = load_csv(&input.data, &input.target, input.normalize)?;
    let model = recipe.fit(data.x.view(), &data.y)?;
    if let Some(s) = &data.scaling {
        let json = serde_json::json!({ "min": s.min, "max": s.max });
        fs::write(
            out.join("scaling.json"),
            serde_json::to_string_pretty(&json)? + "\n",
        )?;
    }
    let mut table = Table::new("fit");
    let total = model.n_trees();
    model.for_each_stage(data.x.view(), &mut |b, p| {
        if experiments::reported(b, total, stride) {
            let mse = p
                .iter()
                .zip(&data.y)
                .map(|(f, y)| (f - y).powi(2))
                .sum::<f64>()
                / p.len() as f64;
            table.push(None, recipe.method.name(), b, "train_mse", mse);
        }
    })?;
    table.write_csv(&out.join("fit.csv"))?;
    let mut w = BufWriter::new(File::create(out.join("model.txt"))?);
    write_model(&model.into_saved(), &mut w)?;
    log::info!("model written to {}", out.join("model.txt").display());
    Ok(())
}

fn read_scaling(path: &Path) -> Result<MinMaxScaling> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let column = |key: &str| -> Result<Vec<f64>> {
        v[key]
            .as_array()
            .with_context(|| format!("scaling file lacks '{key}'"))?
            .iter()
            .map(|x| x.as_f64().context("non-numeric scaling entry"))
            .collect()
    };
    Ok(MinMaxScaling {
        min: column("min")?,
        max: column("max")?,
    })
}

/// Numeric covariates of a CSV with a header, skipping `target` and the
/// signal column.
fn read_covariates(path: &Path, target: Option<&str>) -> Result<Array2<f64>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&j| {
            Some(headers[j].as_str()) != target && headers[j] != boulevard::data::SIGNAL_COLUMN
        })
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for &j in &keep {
            let cell = record.get(j).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .with_context(|| format!("line {}: '{cell}' is not a number", line + 2))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, keep.len()), values)?)
}

fn predict(
    model_path: &Path,
    data: &Path,
    target: Option<&str>,
    scaling: Option<&Path>,
    raw: bool,
    out: &Path,
) -> Result<()> {
    let file =
        File::open(model_path).with_context(|| format!("opening {}", model_path.display()))?;
    let model = Model::from_saved(read_model(BufReader::new(file))?);
    let mut x = read_covariates(data, target)?;
    if let Some(path) = scaling {
        read_scaling(path)?.apply(&mut x)?;
    }
    let predictions = match (&model, raw) {
        (Model::Boulevard(m), true) => m.raw().predict_rows(x.view())?,
        _ => model.predict_rows(x.view())?,
    };
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["row", "prediction"])?;
    for (i, p) in predictions.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    log::info!(
        "{} predictions written to {}",
        predictions.len(),
        out.display()
    );
    Ok(())
}

fn kernel(input: &Input, args: &ModelArgs, replications: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let recipe = args.recipe()?.with_method(Method::Rblv);
    let data = load_csv(&input.data, &input.target, input.normalize)?;
    let sampler = RandomizedSampler {
        constraints: recipe.constraints(),
        subsample_size: Subsample::size_for(data.len(), recipe.theta),
    };
    let estimate = estimate_kernel_mc(data.x.view(), &sampler, replications, args.seed, &[])?;
    let report = verify_kernel_properties(estimate.matrix(), 1e-10);
    // Monte Carlo estimates meet the norm bound only up to sampling noise.
    log::info!(
        "kernel {n}x{n}: min entry {:.3e}, min eigenvalue {:.3e}, max column sum {:.4}, spectral norm {:.4}",
        report.min_entry,
        report.min_eigenvalue,
        report.max_column_sum,
        report.spectral_norm,
        n = estimate.dim()
    );
    let k = estimate.matrix();
    let mut w = csv::Writer::from_path(out.join("kernel.csv"))?;
    w.write_record((0..k.ncols()).map(|j| format!("k{j}")))?;
    for i in 0..k.nrows() {
        w.write_record(k.row(i).iter().map(f64::to_string))?;
    }
    w.flush()?;
    let y = DVector::from_column_slice(&data.y);
    let fixed = KrrSolver::new(k, recipe.lambda)?.fixed_point(&y)?;
    let mut w = csv::Writer::from_path(out.join("fixed_point.csv"))?;
    w.write_record(["row", "y", "y_star", "rescaled"])?;
    let rescale = (1.0 + recipe.lambda) / recipe.lambda;
    for (i, (yi, si)) in data.y.iter().zip(fixed.y_star.iter()).enumerate() {
        w.write_record([
            i.to_string(),
            yi.to_string(),
            si.to_string(),
            (rescale * si).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

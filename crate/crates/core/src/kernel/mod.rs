//! The random forest kernel `E_{q,w}[S_n]` and the ridge fixed point that
//! Boulevard converges to.
//!
//! Row `i` of a structure matrix is the structure vector of training row `i`.
//! Averaging structure matrices over structures `q` and subsamples `w`
//! gives a symmetric, nonnegative, positive semidefinite matrix with all
//! norms at most one. [`estimate_kernel_mc`] averages random draws,
//! [`estimate_kernel_exhaustive`] enumerates every subsample of a given size
//! for a finite list of structures.

mod solve;

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{self, SeededRng};
use crate::trees::{
    self, grow_randomized, FittedTree, LeafId, StructureConstraints, Subsample, TreeStructure,
};

pub use solve::{
    fixed_point, krr_predict, missing_leaf_probability, FixedPoint, KrrSolver, MAX_SOLVE_DIM,
};

/// Largest number of subsamples [`estimate_kernel_exhaustive`] will visit
/// for a single structure.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

const CHUNK: usize = 64;

/// Stacked structure vectors of the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix(DMatrix<f64>);

impl StructureMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn structure_matrix(
    structure: &TreeStructure,
    x: ArrayView2<f64>,
    subsample: &Subsample,
) -> Result<StructureMatrix> {
    trees::check_sample(x, structure.dim())?;
    if subsample.population() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: subsample.population(),
        });
    }
    let n = x.nrows();
    let row_leaves = structure.row_leaves(x);
    let mut m = DMatrix::zeros(n, n);
    accumulate(&mut m, &row_leaves, structure.leaf_count(), subsample, 1.0);
    Ok(StructureMatrix(m))
}

/// `m += scale * S` for the structure matrix `S` of one draw.
fn accumulate(
    m: &mut DMatrix<f64>,
    row_leaves: &[LeafId],
    leaves: usize,
    subsample: &Subsample,
    scale: f64,
) {
    let (rows, members) = group_by_leaf(row_leaves, leaves, subsample);
    for (rows, members) in rows.iter().zip(&members) {
        if members.is_empty() {
            continue;
        }
        let w = scale / members.len() as f64;
        for &j in members {
            for &i in rows {
                m[(i, j)] += w;
            }
        }
    }
}

fn group_by_leaf(
    row_leaves: &[LeafId],
    leaves: usize,
    subsample: &Subsample,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut rows = vec![Vec::new(); leaves];
    for (i, &leaf) in row_leaves.iter().enumerate() {
        rows[leaf].push(i);
    }
    let mut members = vec![Vec::new(); leaves];
    for &i in subsample.indices() {
        members[row_leaves[i]].push(i);
    }
    (rows, members)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    MonteCarlo,
    Exhaustive,
}

#[derive(Debug, Clone)]
pub struct KernelEstimate {
    matrix: DMatrix<f64>,
    replications: usize,
    mode: KernelMode,
    asymmetry: f64,
    query_weights: Vec<DVector<f64>>,
}

impl KernelEstimate {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn replications(&self) -> usize {
        self.replications
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    /// Largest `|K - K^T|` entry before symmetrization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// Expected structure vectors of the query points, in query order.
    pub fn query_weights(&self) -> &[DVector<f64>] {
        &self.query_weights
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn monte_carlo(sum: DMatrix<f64>, queries: Vec<DVector<f64>>, replications: usize) -> Self {
        let scale = 1.0 / replications as f64;
        let raw = sum * scale;
        let asymmetry = max_asymmetry(&raw);
        let matrix = (&raw + raw.transpose()) * 0.5;
        KernelEstimate {
            matrix,
            replications,
            mode: KernelMode::MonteCarlo,
            asymmetry,
            query_weights: queries.into_iter().map(|q| q * scale).collect(),
        }
    }
}

/// Kernel and query sums over one chunk of draws.
type Partial = (DMatrix<f64>, Vec<DVector<f64>>);

/// One random `(structure, subsample)` pair, with the leaf of each training row.
#[derive(Debug, Clone)]
pub struct Draw {
    pub structure: TreeStructure,
    pub row_leaves: Vec<LeafId>,
    pub subsample: Subsample,
}

/// Source of random structures and subsamples for kernel estimation.
pub trait StructureSampler: Sync {
    fn sample(&self, x: ArrayView2<f64>, rng: &mut SeededRng) -> Result<Draw>;
}

/// Completely randomized structures with a uniform subsample, the sampler
/// behind randomized Boulevard.
#[derive(Debug, Clone)]
pub struct RandomizedSampler {
    pub constraints: StructureConstraints,
    pub subsample_size: usize,
}

impl StructureSampler for RandomizedSampler {
    fn sample(&self, x: ArrayView2<f64>, rng: &mut SeededRng) -> Result<Draw> {
        // Same draw order as the boosting loop: subsample, then structure.
        let subsample = Subsample::draw(x.nrows(), self.subsample_size, rng);
        let (structure, row_leaves) = grow_randomized(x, &self.constraints, rng)?;
        Ok(Draw {
            structure,
            row_leaves,
            subsample,
        })
    }
}

/// Finitely many structures with given probabilities and a uniform subsample.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    structures: Vec<(TreeStructure, f64)>,
    subsample_size: usize,
}

impl MixtureSampler {
    pub fn new(structures: Vec<(TreeStructure, f64)>, subsample_size: usize) -> Result<Self> {
        check_probabilities(&structures)?;
        Ok(MixtureSampler {
            structures,
            subsample_size,
        })
    }

    pub fn fixed(structure: TreeStructure, subsample_size: usize) -> Self {
        MixtureSampler {
            structures: vec![(structure, 1.0)],
            subsample_size,
        }
    }
}

impl StructureSampler for MixtureSampler {
    fn sample(&self, x: ArrayView2<f64>, rng: &mut SeededRng) -> Result<Draw> {
        use rand::Rng;
        let subsample = Subsample::draw(x.nrows(), self.subsample_size, rng);
        let mut u: f64 = rng.random();
        let mut pick = self.structures.len() - 1;
        for (i, (_, p)) in self.structures.iter().enumerate() {
            if u < *p {
                pick = i;
                break;
            }
            u -= p;
        }
        let structure = self.structures[pick].0.clone();
        let row_leaves = structure.row_leaves(x);
        Ok(Draw {
            structure,
            row_leaves,
            subsample,
        })
    }
}

fn check_probabilities(structures: &[(TreeStructure, f64)]) -> Result<()> {
    if structures.is_empty() {
        return Err(Error::Config("structure list is empty".into()));
    }
    let total: f64 = structures.iter().map(|(_, p)| p).sum();
    if structures.iter().any(|(_, p)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "structure probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of `E[S_n]` from `replications` independent draws,
/// symmetrized as `(K + K^T) / 2`. Expected structure vectors of `queries`
/// are accumulated from the same draws.
///
/// Draws are grouped in fixed chunks with their own derived streams and the
/// chunk sums are added in chunk order, so the result does not depend on the
/// thread count.
pub fn estimate_kernel_mc<S: StructureSampler + ?Sized>(
    x: ArrayView2<f64>,
    sampler: &S,
    replications: usize,
    seed_value: u64,
    queries: &[Vec<f64>],
) -> Result<KernelEstimate> {
    trees::check_sample(x, x.ncols())?;
    for q in queries {
        if q.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                found: q.len(),
            });
        }
        trees::check_unit(q)?;
    }
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let n = x.nrows();
    let chunks = replications.div_ceil(CHUNK);
    let wave = rayon::current_num_threads().max(1);
    let mut sum = DMatrix::zeros(n, n);
    let mut query_sums = vec![DVector::zeros(n); queries.len()];

    for first in (0..chunks).step_by(wave) {
        let last = (first + wave).min(chunks);
        let partials: Vec<Result<Partial>> = (first..last)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = seed::derived_rng(seed_value, &[chunk as u64]);
                let mut local = DMatrix::zeros(n, n);
                let mut local_queries = vec![DVector::zeros(n); queries.len()];
                let reps = CHUNK.min(replications - chunk * CHUNK);
                for _ in 0..reps {
                    let draw = sampler.sample(x, &mut rng)?;
                    let leaves = draw.structure.leaf_count();
                    accumulate(&mut local, &draw.row_leaves, leaves, &draw.subsample, 1.0);
                    if !queries.is_empty() {
                        let (_, members) = group_by_leaf(&draw.row_leaves, leaves, &draw.subsample);
                        for (q, acc) in queries.iter().zip(local_queries.iter_mut()) {
                            let group = &members[draw.structure.leaf_of(q)?];
                            if !group.is_empty() {
                                let w = 1.0 / group.len() as f64;
                                for &j in group {
                                    acc[j] += w;
                                }
                            }
                        }
                    }
                }
                Ok((local, local_queries))
            })
            .collect();
        for partial in partials {
            let (local, local_queries) = partial?;
            sum += local;
            for (acc, q) in query_sums.iter_mut().zip(local_queries) {
                *acc += q;
            }
        }
    }
    Ok(KernelEstimate::monte_carlo(sum, query_sums, replications))
}

/// Kernel estimate from the trees of a fitted ensemble, reusing their
/// structures and subsamples as the Monte Carlo draws. `x` must be the
/// training sample.
pub fn kernel_from_trees(
    x: ArrayView2<f64>,
    trees: &[FittedTree],
    queries: &[Vec<f64>],
) -> Result<KernelEstimate> {
    if trees.is_empty() {
        return Err(Error::Config("no trees to estimate a kernel from".into()));
    }
    let n = x.nrows();
    let mut sum = DMatrix::zeros(n, n);
    let mut query_sums = vec![DVector::zeros(n); queries.len()];
    for tree in trees {
        trees::check_sample(x, tree.structure().dim())?;
        if tree.subsample().population() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: tree.subsample().population(),
            });
        }
        let row_leaves = tree.structure().row_leaves(x);
        accumulate(
            &mut sum,
            &row_leaves,
            tree.structure().leaf_count(),
            tree.subsample(),
            1.0,
        );
        for (q, acc) in queries.iter().zip(query_sums.iter_mut()) {
            for &(j, w) in tree.structure_vector(q)?.entries() {
                acc[j] += w;
            }
        }
    }
    Ok(KernelEstimate::monte_carlo(sum, query_sums, trees.len()))
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact `E_{q,w}[S_n]` over the listed structures and all subsamples of
/// size `subsample_size`.
pub fn estimate_kernel_exhaustive(
    x: ArrayView2<f64>,
    structures: &[(TreeStructure, f64)],
    subsample_size: usize,
) -> Result<KernelEstimate> {
    check_probabilities(structures)?;
    let n = x.nrows();
    if subsample_size == 0 || subsample_size > n {
        return Err(Error::Config(format!(
            "subsample size {subsample_size} outside 1..={n}"
        )));
    }
    let count = binomial(n, subsample_size);
    if count > ENUMERATION_BUDGET {
        return Err(Error::Budget {
            required: count,
            limit: ENUMERATION_BUDGET,
        });
    }
    for (structure, _) in structures {
        trees::check_sample(x, structure.dim())?;
    }
    let mut total = DMatrix::zeros(n, n);
    for (structure, p) in structures {
        let row_leaves = structure.row_leaves(x);
        let mut sum = DMatrix::zeros(n, n);
        for w in Combinations::new(n, subsample_size) {
            let w = Subsample::from_indices(n, w)?;
            accumulate(&mut sum, &row_leaves, structure.leaf_count(), &w, 1.0);
        }
        total += sum * (p / count as f64);
    }
    let asymmetry = max_asymmetry(&total);
    Ok(KernelEstimate {
        matrix: total,
        replications: count as usize,
        mode: KernelMode::Exhaustive,
        asymmetry,
        query_weights: Vec::new(),
    })
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in (i + 1)..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Numerical summary of the kernel properties: symmetry, nonnegativity,
/// positive semidefiniteness and the 1-, infinity- and spectral norms.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub tolerance: f64,
    pub max_asymmetry: f64,
    pub min_entry: f64,
    pub min_eigenvalue: f64,
    pub max_column_sum: f64,
    pub max_row_sum: f64,
    pub spectral_norm: f64,
}

impl PropertyReport {
    pub fn symmetric(&self) -> bool {
        self.max_asymmetry <= self.tolerance
    }

    pub fn nonnegative(&self) -> bool {
        self.min_entry >= -self.tolerance
    }

    pub fn positive_semidefinite(&self) -> bool {
        self.min_eigenvalue >= -self.tolerance
    }

    pub fn norms_bounded(&self) -> bool {
        let cap = 1.0 + self.tolerance;
        self.max_column_sum <= cap && self.max_row_sum <= cap && self.spectral_norm <= cap
    }

    pub fn all_pass(&self) -> bool {
        self.symmetric()
            && self.nonnegative()
            && self.positive_semidefinite()
            && self.norms_bounded()
    }
}

pub fn verify_kernel_properties(k: &DMatrix<f64>, tolerance: f64) -> PropertyReport {
    let n = k.nrows();
    let sym = (k + k.transpose()) * 0.5;
    let min_eigenvalue = if n == 0 {
        0.0
    } else {
        sym.symmetric_eigenvalues().min()
    };
    let spectral_norm = if n == 0 {
        0.0
    } else {
        k.singular_values().max()
    };
    let max_column_sum = k
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let max_row_sum = k
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    PropertyReport {
        tolerance,
        max_asymmetry: max_asymmetry(k),
        min_entry: k.iter().copied().fold(f64::INFINITY, f64::min),
        min_eigenvalue,
        max_column_sum,
        max_row_sum,
        spectral_norm,
    }
}

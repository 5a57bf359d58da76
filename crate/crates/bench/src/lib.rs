//! Shared fixtures for the benchmarks.

use boulevard::data::{generate, Dataset, ErrorLaw, GeneratorSpec, TargetFunction};
use boulevard::{BoulevardConfig, StructureConstraints, StructureMode};
use ndarray::ArrayView2;

/// Simulated training sample with uniform noise.
pub fn sample(n: usize, seed: u64) -> Dataset {
    generate(&GeneratorSpec::new(
        TargetFunction::Mean5,
        n,
        ErrorLaw::Uniform { a: 1.0 },
        seed,
    ))
    .expect("valid generator spec")
}

pub fn view(data: &Dataset) -> ArrayView2<'_, f64> {
    data.x.view()
}

/// Constraints with the given leaf floor and a generous depth cap.
pub fn constraints(leaf_size: usize) -> StructureConstraints {
    StructureConstraints::new(leaf_size, 30)
}

pub fn config(mode: StructureMode, trees: usize, leaf_size: usize) -> BoulevardConfig {
    BoulevardConfig::new(0.8, 0.8, trees)
        .with_mode(mode)
        .with_constraints(constraints(leaf_size))
        .with_seed(1)
}

//! Tree structures over the unit cube, kept separate from the values placed
//! in their leaves.
//!
//! A [`TreeStructure`] is only a partition of `[0,1]^d` into axis-aligned
//! cells. Leaf values are attached afterwards by [`assign_leaf_values`] using
//! a [`Subsample`], so that the partition and the values can come from
//! different data (or, for randomized builds, the partition never sees the
//! responses at all).

mod greedy;
mod randomized;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

pub use greedy::build_greedy_structure;
pub use randomized::build_randomized_structure;

pub(crate) use greedy::grow_greedy;
pub(crate) use randomized::grow_randomized;

pub type LeafId = usize;

/// Maximum number of rejected threshold draws before a randomized node is
/// declared a leaf.
pub const MAX_SPLIT_ATTEMPTS: usize = 32;

/// Axis-aligned hyper-rectangle `[lower, upper)`; a face at 1 is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Cell {
    pub fn unit(dim: usize) -> Self {
        Cell {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (j, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(Error::Config(format!(
                    "cell side {j} is [{lo}, {hi}), which is empty or leaves the unit cube"
                )));
            }
        }
        Ok(Cell { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Euclidean length of the diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &v)| {
            let hi = self.upper[j];
            v >= self.lower[j] && (v < hi || (hi == 1.0 && v == 1.0))
        })
    }

    fn split(&self, feature: usize, threshold: f64) -> (Cell, Cell) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[feature] = threshold;
        right.lower[feature] = threshold;
        (left, right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(LeafId),
}

/// Limits applied while growing a structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureConstraints {
    /// Stop splitting a cell once its diameter is at most this value.
    /// `None` disables the diameter stop.
    pub max_leaf_diameter: Option<f64>,
    /// Minimum number of sample points on each side of a split.
    pub min_leaf_samples: usize,
    pub max_depth: usize,
}

impl Default for StructureConstraints {
    fn default() -> Self {
        StructureConstraints {
            max_leaf_diameter: None,
            min_leaf_samples: 5,
            max_depth: 8,
        }
    }
}

impl StructureConstraints {
    pub fn new(min_leaf_samples: usize, max_depth: usize) -> Self {
        StructureConstraints {
            max_leaf_diameter: None,
            min_leaf_samples,
            max_depth,
        }
    }

    pub fn with_max_leaf_diameter(mut self, diameter: f64) -> Self {
        self.max_leaf_diameter = Some(diameter);
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.min_leaf_samples == 0 {
            return Err(Error::Config("min_leaf_samples must be at least 1".into()));
        }
        if let Some(diam) = self.max_leaf_diameter {
            let cap = (dim as f64).sqrt();
            if !(diam > 0.0 && diam <= cap) {
                return Err(Error::Config(format!(
                    "max_leaf_diameter {diam} outside (0, {cap}]"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn stops_at(&self, cell: &Cell, depth: usize) -> bool {
        depth >= self.max_depth
            || self
                .max_leaf_diameter
                .is_some_and(|cap| cell.diameter() <= cap)
    }
}

/// A partition of `[0,1]^d` produced by recursive axis-aligned splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStructure {
    dim: usize,
    nodes: Vec<Node>,
    cells: Vec<Cell>,
}

impl TreeStructure {
    pub fn single_leaf(dim: usize) -> Self {
        TreeStructure {
            dim,
            nodes: vec![Node::Leaf(0)],
            cells: vec![Cell::unit(dim)],
        }
    }

    /// Reassemble a structure from its parts, checking that the nodes form a
    /// tree whose leaves are exactly `cells`.
    pub fn from_parts(dim: usize, nodes: Vec<Node>, cells: Vec<Cell>) -> Result<Self> {
        let structure = TreeStructure { dim, nodes, cells };
        structure.check()?;
        Ok(structure)
    }

    /// Split `leaf` at `threshold` along `feature`. The left half keeps the
    /// leaf id; the right half gets the next free id.
    pub fn split(mut self, leaf: LeafId, feature: usize, threshold: f64) -> Result<Self> {
        if feature >= self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: feature + 1,
            });
        }
        let cell = self
            .cells
            .get(leaf)
            .ok_or_else(|| Error::Config(format!("no leaf {leaf}")))?
            .clone();
        if !(threshold > cell.lower[feature] && threshold < cell.upper[feature]) {
            return Err(Error::Config(format!(
                "threshold {threshold} does not cut leaf {leaf} along feature {feature}"
            )));
        }
        let node = self
            .nodes
            .iter()
            .position(|n| *n == Node::Leaf(leaf))
            .expect("every cell has a leaf node");
        let (left_cell, right_cell) = cell.split(feature, threshold);
        let right_leaf = self.cells.len();
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf(leaf));
        self.nodes.push(Node::Leaf(right_leaf));
        self.nodes[node] = Node::Split {
            feature,
            threshold,
            left,
            right: left + 1,
        };
        self.cells[leaf] = left_cell;
        self.cells.push(right_cell);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_count(&self) -> usize {
        self.cells.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, leaf: LeafId) -> &Cell {
        &self.cells[leaf]
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// The leaf whose cell contains `x`.
    pub fn leaf_of(&self, x: &[f64]) -> Result<LeafId> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        check_unit(x)?;
        Ok(self.descend(|j| x[j]))
    }

    pub(crate) fn leaf_of_row(&self, row: ArrayView1<f64>) -> LeafId {
        self.descend(|j| row[j])
    }

    #[inline]
    fn descend(&self, coord: impl Fn(usize) -> f64) -> LeafId {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(leaf) => return leaf,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if coord(feature) < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    /// Leaf of every row of `x`. Rows are assumed validated.
    pub(crate) fn row_leaves(&self, x: ArrayView2<f64>) -> Vec<LeafId> {
        x.outer_iter().map(|row| self.leaf_of_row(row)).collect()
    }

    /// Per-leaf constraint summary for a structure grown on `x`.
    pub fn constraint_report(
        &self,
        x: ArrayView2<f64>,
        constraints: &StructureConstraints,
    ) -> ConstraintReport {
        let mut counts = vec![0usize; self.leaf_count()];
        for leaf in self.row_leaves(x) {
            counts[leaf] += 1;
        }
        let max_diameter = self.cells.iter().map(Cell::diameter).fold(0.0, f64::max);
        let diameter_violations = constraints.max_leaf_diameter.map_or(0, |cap| {
            self.cells.iter().filter(|c| c.diameter() > cap).count()
        });
        ConstraintReport {
            min_leaf_count: counts.iter().copied().min().unwrap_or(0),
            max_leaf_diameter: max_diameter,
            diameter_violations,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("malformed tree structure: {msg}")));
        if self.nodes.is_empty() {
            return bad("no nodes");
        }
        let mut seen_nodes = vec![false; self.nodes.len()];
        let mut seen_leaves = vec![false; self.cells.len()];
        let mut stack = vec![(0usize, Cell::unit(self.dim))];
        while let Some((at, cell)) = stack.pop() {
            if at >= self.nodes.len() || std::mem::replace(&mut seen_nodes[at], true) {
                return bad("node referenced twice or out of range");
            }
            match self.nodes[at] {
                Node::Leaf(leaf) => {
                    if leaf >= self.cells.len() || std::mem::replace(&mut seen_leaves[leaf], true) {
                        return bad("leaf id repeated or out of range");
                    }
                    if self.cells[leaf] != cell {
                        return bad("leaf cell disagrees with its splits");
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= self.dim
                        || !(threshold > cell.lower[feature] && threshold < cell.upper[feature])
                    {
                        return bad("split outside its cell");
                    }
                    let (l, r) = cell.split(feature, threshold);
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        if seen_nodes.iter().all(|&s| s) && seen_leaves.iter().all(|&s| s) {
            Ok(())
        } else {
            bad("unreachable nodes or leaves")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub min_leaf_count: usize,
    pub max_leaf_diameter: f64,
    pub diameter_violations: usize,
}

/// Sorted, duplicate-free index set drawn from `0..population`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsample {
    population: usize,
    indices: Vec<usize>,
}

impl Subsample {
    pub fn full(population: usize) -> Self {
        Subsample {
            population,
            indices: (0..population).collect(),
        }
    }

    pub fn from_indices(population: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&i) = indices.iter().find(|&&i| i >= population) {
            return Err(Error::Config(format!(
                "subsample index {i} out of range for population {population}"
            )));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("subsample contains duplicate indices".into()));
        }
        Ok(Subsample {
            population,
            indices,
        })
    }

    /// Uniformly random subset of the given size.
    pub fn draw<R: Rng + ?Sized>(population: usize, size: usize, rng: &mut R) -> Self {
        assert!(size <= population, "subsample larger than population");
        if size == population {
            return Subsample::full(population);
        }
        let mut indices = index::sample(rng, population, size).into_vec();
        indices.sort_unstable();
        Subsample {
            population,
            indices,
        }
    }

    /// `round(theta * n)`.
    pub fn size_for(population: usize, theta: f64) -> usize {
        ((theta * population as f64).round() as usize).min(population)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.indices.len() as f64 / self.population as f64
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Sparse weight vector over sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureVector {
    len: usize,
    entries: Vec<(usize, f64)>,
}

impl StructureVector {
    pub fn zeros(len: usize) -> Self {
        StructureVector {
            len,
            entries: Vec::new(),
        }
    }

    fn uniform_over(len: usize, members: &[usize]) -> Self {
        if members.is_empty() {
            return Self::zeros(len);
        }
        let w = 1.0 / members.len() as f64;
        StructureVector {
            len,
            entries: members.iter().map(|&i| (i, w)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nonzero `(index, weight)` pairs in increasing index order.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * values[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.len];
        for &(i, w) in &self.entries {
            dense[i] = w;
        }
        dense
    }
}

/// A structure with honest leaf values computed from one subsample.
///
/// Subsample members are stored grouped by leaf so structure vectors can be
/// read off without revisiting the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    structure: TreeStructure,
    subsample: Subsample,
    leaf_values: Vec<f64>,
    member_offsets: Vec<usize>,
    members: Vec<usize>,
}

impl FittedTree {
    /// `row_leaves[i]` must be the leaf of training row `i`.
    pub(crate) fn from_row_leaves(
        structure: TreeStructure,
        row_leaves: &[LeafId],
        z: &[f64],
        subsample: Subsample,
    ) -> Self {
        let leaves = structure.leaf_count();
        let mut counts = vec![0usize; leaves];
        for &i in subsample.indices() {
            counts[row_leaves[i]] += 1;
        }
        let mut member_offsets = Vec::with_capacity(leaves + 1);
        let mut acc = 0;
        member_offsets.push(0);
        for c in &counts {
            acc += c;
            member_offsets.push(acc);
        }
        let mut cursor = member_offsets[..leaves].to_vec();
        let mut members = vec![0usize; acc];
        for &i in subsample.indices() {
            let leaf = row_leaves[i];
            members[cursor[leaf]] = i;
            cursor[leaf] += 1;
        }
        let leaf_values = (0..leaves)
            .map(|leaf| {
                let group = &members[member_offsets[leaf]..member_offsets[leaf + 1]];
                if group.is_empty() {
                    0.0
                } else {
                    group.iter().map(|&i| z[i]).sum::<f64>() / group.len() as f64
                }
            })
            .collect();
        FittedTree {
            structure,
            subsample,
            leaf_values,
            member_offsets,
            members,
        }
    }

    /// Rebuild from stored parts. `members[leaf]` lists the subsample
    /// indices falling in each leaf.
    pub fn from_parts(
        structure: TreeStructure,
        population: usize,
        leaf_values: Vec<f64>,
        members: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let leaves = structure.leaf_count();
        if leaf_values.len() != leaves || members.len() != leaves {
            return Err(Error::DimensionMismatch {
                expected: leaves,
                found: leaf_values.len().min(members.len()),
            });
        }
        let subsample = Subsample::from_indices(population, members.concat())?;
        let mut member_offsets = vec![0];
        let mut flat = Vec::with_capacity(subsample.len());
        for group in members {
            flat.extend(group);
            member_offsets.push(flat.len());
        }
        Ok(FittedTree {
            structure,
            subsample,
            leaf_values,
            member_offsets,
            members: flat,
        })
    }

    pub fn structure(&self) -> &TreeStructure {
        &self.structure
    }

    pub fn subsample(&self) -> &Subsample {
        &self.subsample
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn leaf_value(&self, leaf: LeafId) -> f64 {
        self.leaf_values[leaf]
    }

    /// Subsample members falling in `leaf`, increasing.
    pub fn leaf_members(&self, leaf: LeafId) -> &[usize] {
        &self.members[self.member_offsets[leaf]..self.member_offsets[leaf + 1]]
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.leaf_values[self.structure.leaf_of(x)?])
    }

    pub(crate) fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.leaf_values[self.structure.leaf_of_row(row)]
    }

    pub fn structure_vector(&self, x: &[f64]) -> Result<StructureVector> {
        let leaf = self.structure.leaf_of(x)?;
        Ok(self.structure_vector_of_leaf(leaf))
    }

    pub(crate) fn structure_vector_of_leaf(&self, leaf: LeafId) -> StructureVector {
        StructureVector::uniform_over(self.subsample.population(), self.leaf_members(leaf))
    }
}

/// Honest leaf values: the mean of `z` over subsample members of each leaf,
/// or 0 for a leaf that no member reaches.
pub fn assign_leaf_values(
    structure: TreeStructure,
    z: &[f64],
    x: ArrayView2<f64>,
    subsample: Subsample,
) -> Result<FittedTree> {
    check_sample(x, structure.dim())?;
    if z.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: z.len(),
        });
    }
    check_population(&subsample, x.nrows())?;
    let row_leaves = structure.row_leaves(x);
    Ok(FittedTree::from_row_leaves(
        structure,
        &row_leaves,
        z,
        subsample,
    ))
}

/// Weights `I(x_k in A) I(k in w) / #{i in w : x_i in A}` for the leaf `A`
/// containing `x`, computed directly from the sample.
pub fn structure_vector(
    structure: &TreeStructure,
    x_sample: ArrayView2<f64>,
    subsample: &Subsample,
    x: &[f64],
) -> Result<StructureVector> {
    check_sample(x_sample, structure.dim())?;
    check_population(subsample, x_sample.nrows())?;
    let leaf = structure.leaf_of(x)?;
    let members: Vec<usize> = subsample
        .indices()
        .iter()
        .copied()
        .filter(|&i| structure.leaf_of_row(x_sample.row(i)) == leaf)
        .collect();
    Ok(StructureVector::uniform_over(x_sample.nrows(), &members))
}

pub fn predict_tree(tree: &FittedTree, x: &[f64]) -> Result<f64> {
    tree.predict(x)
}

pub(crate) fn check_unit(x: &[f64]) -> Result<()> {
    for (coordinate, &value) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain { coordinate, value });
        }
    }
    Ok(())
}

pub(crate) fn check_sample(x: ArrayView2<f64>, dim: usize) -> Result<()> {
    if x.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.ncols(),
        });
    }
    for row in x.outer_iter() {
        for (coordinate, &value) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Domain { coordinate, value });
            }
        }
    }
    Ok(())
}

fn check_population(subsample: &Subsample, n: usize) -> Result<()> {
    if subsample.population() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: subsample.population(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests;

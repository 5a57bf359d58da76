use ndarray::ArrayView2;
use rand::Rng;

use super::{
    check_sample, Cell, LeafId, Node, StructureConstraints, TreeStructure, MAX_SPLIT_ATTEMPTS,
};
use crate::error::{Error, Result};

/// Completely randomized structure: each split picks a feature uniformly and
/// a threshold uniformly within the current cell, redrawing up to
/// [`MAX_SPLIT_ATTEMPTS`] times until both children keep at least
/// `min_leaf_samples` rows of `x`.
///
/// Only `x` and `rng` are read, so the result is independent of any response.
pub fn build_randomized_structure<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    constraints: &StructureConstraints,
    rng: &mut R,
) -> Result<TreeStructure> {
    check_sample(x, x.ncols())?;
    Ok(grow_randomized(x, constraints, rng)?.0)
}

/// As [`build_randomized_structure`], also returning the leaf of every row.
/// Rows are not range-checked.
pub(crate) fn grow_randomized<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    constraints: &StructureConstraints,
    rng: &mut R,
) -> Result<(TreeStructure, Vec<LeafId>)> {
    let (n, dim) = x.dim();
    constraints.validate(dim)?;
    if dim == 0 {
        return Err(Error::Config("sample has no features".into()));
    }
    let k = constraints.min_leaf_samples;
    if n < k {
        return Err(Error::Config(format!(
            "min_leaf_samples {k} exceeds sample size {n}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut row_leaves = vec![0; n];
    let mut nodes = vec![Node::Leaf(0)];
    let mut cells = Vec::new();
    // (node, start, end, cell, depth) over `order[start..end]`
    let mut stack = vec![(0usize, 0usize, n, Cell::unit(dim), 0usize)];

    while let Some((node, start, end, cell, depth)) = stack.pop() {
        let count = end - start;
        let split = if count < 2 * k || constraints.stops_at(&cell, depth) {
            None
        } else {
            draw_split(x, &order[start..end], &cell, k, rng)
        };

        match split {
            Some((feature, threshold)) => {
                let rows = &mut order[start..end];
                let mid = start + partition(rows, |i| x[[i, feature]] < threshold);
                let (left_cell, right_cell) = cell.split(feature, threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf(usize::MAX));
                nodes.push(Node::Leaf(usize::MAX));
                nodes[node] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right: left + 1,
                };
                stack.push((left + 1, mid, end, right_cell, depth + 1));
                stack.push((left, start, mid, left_cell, depth + 1));
            }
            None => {
                let leaf = cells.len();
                nodes[node] = Node::Leaf(leaf);
                cells.push(cell);
                for &i in &order[start..end] {
                    row_leaves[i] = leaf;
                }
            }
        }
    }

    Ok((TreeStructure { dim, nodes, cells }, row_leaves))
}

fn draw_split<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    rows: &[usize],
    cell: &Cell,
    k: usize,
    rng: &mut R,
) -> Option<(usize, f64)> {
    let dim = cell.dim();
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        let feature = rng.random_range(0..dim);
        let (lo, hi) = (cell.lower()[feature], cell.upper()[feature]);
        let threshold = rng.random_range(lo..hi);
        if threshold <= lo {
            continue;
        }
        let left = rows
            .iter()
            .filter(|&&i| x[[i, feature]] < threshold)
            .count();
        if left >= k && rows.len() - left >= k {
            return Some((feature, threshold));
        }
    }
    None
}

/// In-place partition; returns the number of rows
/// satisfying `goes_left`, which are moved to the front.
fn partition(rows: &mut [usize], goes_left: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for j in 0..rows.len() {
        if goes_left(rows[j]) {
            rows.swap(mid, j);
            mid += 1;
        }
    }
    mid
}

use ndarray::ArrayView2;

use super::{check_sample, Cell, LeafId, Node, StructureConstraints, Subsample, TreeStructure};
use crate::error::{Error, Result};

/// CART-style structure grown on the subsample members only.
///
/// Each split minimizes the summed within-child squared error of `z` over
/// axis-aligned cuts placed halfway between consecutive distinct values, with
/// at least `min_leaf_samples` members on each side. Ties go to the lowest
/// feature index, then the lowest threshold.
pub fn build_greedy_structure(
    x: ArrayView2<f64>,
    z: &[f64],
    constraints: &StructureConstraints,
    subsample: &Subsample,
) -> Result<TreeStructure> {
    check_sample(x, x.ncols())?;
    Ok(grow_greedy(x, z, constraints, subsample)?.0)
}

pub(crate) fn grow_greedy(
    x: ArrayView2<f64>,
    z: &[f64],
    constraints: &StructureConstraints,
    subsample: &Subsample,
) -> Result<(TreeStructure, Vec<LeafId>)> {
    let (n, dim) = x.dim();
    constraints.validate(dim)?;
    if z.len() != n || subsample.population() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if z.len() != n {
                z.len()
            } else {
                subsample.population()
            },
        });
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let k = constraints.min_leaf_samples;
    if subsample.len() < k {
        return Err(Error::Config(format!(
            "min_leaf_samples {k} exceeds subsample size {}",
            subsample.len()
        )));
    }

    let mut nodes = vec![Node::Leaf(0)];
    let mut cells = Vec::new();
    let mut scratch = Vec::with_capacity(subsample.len());
    let mut stack = vec![(
        0usize,
        subsample.indices().to_vec(),
        Cell::unit(dim),
        0usize,
    )];

    while let Some((node, members, cell, depth)) = stack.pop() {
        let split = if members.len() < 2 * k || constraints.stops_at(&cell, depth) {
            None
        } else {
            best_split(x, z, &members, k, &mut scratch)
        };
        match split {
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| x[[i, feature]] < threshold);
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
                stack.push((left + 1, right_rows, right_cell, depth + 1));
                stack.push((left, left_rows, left_cell, depth + 1));
            }
            None => {
                nodes[node] = Node::Leaf(cells.len());
                cells.push(cell);
            }
        }
    }

    let structure = TreeStructure { dim, nodes, cells };
    let row_leaves = structure.row_leaves(x);
    Ok((structure, row_leaves))
}

/// Best `(feature, threshold)` for the node holding `members`, or `None` when
/// no legal cut lowers the impurity.
fn best_split(
    x: ArrayView2<f64>,
    z: &[f64],
    members: &[usize],
    k: usize,
    scratch: &mut Vec<usize>,
) -> Option<(usize, f64)> {
    let m = members.len();
    let total: f64 = members.iter().map(|&i| z[i]).sum();
    let total_sq: f64 = members.iter().map(|&i| z[i] * z[i]).sum();
    let parent = total_sq - total * total / m as f64;
    let scale = total_sq.max(1e-300);
    if parent <= 1e-12 * scale {
        return None;
    }

    let mut best: Option<(f64, usize, f64)> = None;
    for feature in 0..x.ncols() {
        scratch.clear();
        scratch.extend_from_slice(members);
        scratch
            .sort_unstable_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]).then(a.cmp(&b)));

        let mut left_sum = 0.0;
        for p in 1..m {
            left_sum += z[scratch[p - 1]];
            if p < k || m - p < k {
                continue;
            }
            let below = x[[scratch[p - 1], feature]];
            let above = x[[scratch[p], feature]];
            if below >= above {
                continue;
            }
            let right_sum = total - left_sum;
            let impurity =
                total_sq - left_sum * left_sum / p as f64 - right_sum * right_sum / (m - p) as f64;
            let threshold = 0.5 * (below + above);
            if threshold <= below {
                continue;
            }
            let improves = match best {
                None => true,
                Some((b, _, _)) => impurity < b - 1e-12 * scale,
            };
            if improves {
                best = Some((impurity, feature, threshold));
            }
        }
    }

    match best {
        Some((impurity, feature, threshold)) if impurity < parent - 1e-12 * scale => {
            Some((feature, threshold))
        }
        _ => None,
    }
}

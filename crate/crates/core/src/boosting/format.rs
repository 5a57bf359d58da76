//! Line-oriented text format for fitted models.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a saved
//! model reloads bit for bit.

use std::fmt::Display;
use std::io::{BufRead, Write};

use super::{
    BaselineKind, BaselineModel, BoulevardConfig, BoulevardModel, Combiner, SnapshotState,
    StructureMode, TraceEntry,
};
use crate::error::{Error, Result};
use crate::trees::{Cell, FittedTree, Node, StructureConstraints, TreeStructure};

const MAGIC: &str = "boulevard-model 1";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Boulevard(BoulevardModel),
    Baseline(BaselineModel),
}

impl SavedModel {
    pub fn trees(&self) -> &[FittedTree] {
        match self {
            SavedModel::Boulevard(m) => &m.trees,
            SavedModel::Baseline(m) => &m.trees,
        }
    }
}

fn joined<T: Display>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn optional<T: Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn write_model<W: Write>(model: &SavedModel, out: &mut W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    match model {
        SavedModel::Boulevard(m) => {
            let c = &m.config;
            writeln!(out, "kind boulevard")?;
            writeln!(
                out,
                "config {} {} {} {} {} {} {} {} {}",
                c.lambda,
                c.theta,
                c.n_trees,
                optional(c.truncation),
                c.mode.name(),
                optional(c.constraints.max_leaf_diameter),
                c.constraints.min_leaf_samples,
                c.constraints.max_depth,
                c.seed
            )?;
            writeln!(out, "truncation {}", m.truncation)?;
            match &m.snapshot {
                None => writeln!(out, "snapshot none")?,
                Some(s) => {
                    writeln!(out, "snapshot {} {}", s.loss_threshold, optional(s.b_star))?;
                    if let Some(z) = &s.frozen_residuals {
                        writeln!(out, "frozen {}", joined(z))?;
                    }
                }
            }
            writeln!(out, "fitted {}", joined(&m.fitted))?;
            for t in &m.trace {
                writeln!(out, "trace {} {} {}", t.loss, t.step_norm, t.clipped)?;
            }
        }
        SavedModel::Baseline(m) => {
            writeln!(out, "kind {}", m.kind.name())?;
            match m.combiner {
                Combiner::Additive { rate } => writeln!(out, "combiner additive {rate}")?,
                Combiner::Average => writeln!(out, "combiner average")?,
                Combiner::Boulevard { lambda } => writeln!(out, "combiner boulevard {lambda}")?,
            }
        }
    }
    let trees = model.trees();
    writeln!(out, "trees {}", trees.len())?;
    for tree in trees {
        let s = tree.structure();
        writeln!(
            out,
            "tree {} {} {} {}",
            s.dim(),
            s.nodes().len(),
            s.leaf_count(),
            tree.subsample().population()
        )?;
        for node in s.nodes() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(out, "split {feature} {threshold} {left} {right}")?,
                Node::Leaf(id) => writeln!(out, "leaf {id}")?,
            }
        }
        for (leaf, cell) in s.cells().iter().enumerate() {
            writeln!(
                out,
                "cell {} {}",
                joined(cell.lower()),
                joined(cell.upper())
            )?;
            let members = tree.leaf_members(leaf);
            if members.is_empty() {
                writeln!(out, "value {}", tree.leaf_value(leaf))?;
            } else {
                writeln!(out, "value {} {}", tree.leaf_value(leaf), joined(members))?;
            }
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
    current: String,
}

impl<R: BufRead> Lines<R> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn advance(&mut self) -> Result<()> {
        self.line += 1;
        self.current = match self.inner.next() {
            Some(l) => l?,
            None => return Err(self.error("unexpected end of input")),
        };
        Ok(())
    }

    fn peek_keyword(&self) -> &str {
        self.current.split_whitespace().next().unwrap_or("")
    }

    /// Fields after `keyword` on the current line, then move on.
    fn take(&mut self, keyword: &str) -> Result<Vec<String>> {
        let mut parts = self.current.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.error(format!("expected '{keyword}'")));
        }
        let fields = parts.map(str::to_string).collect();
        self.advance()?;
        Ok(fields)
    }

    fn parse<T: std::str::FromStr>(&self, field: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.error(format!("cannot parse '{field}'")))
    }

    fn parse_opt<T: std::str::FromStr>(&self, field: &str) -> Result<Option<T>> {
        if field == "none" {
            Ok(None)
        } else {
            self.parse(field).map(Some)
        }
    }

    fn parse_all<T: std::str::FromStr>(&self, fields: &[String]) -> Result<Vec<T>> {
        fields.iter().map(|f| self.parse(f)).collect()
    }

    fn arity(&self, fields: &[String], n: usize) -> Result<()> {
        if fields.len() != n {
            return Err(self.error(format!("expected {n} fields, found {}", fields.len())));
        }
        Ok(())
    }
}

pub fn read_model<R: BufRead>(input: R) -> Result<SavedModel> {
    let mut r = Lines {
        inner: input.lines(),
        line: 0,
        current: String::new(),
    };
    r.advance()?;
    if r.current.trim() != MAGIC {
        return Err(r.error("not a boulevard model file"));
    }
    r.advance()?;
    let kind = r.take("kind")?;
    r.arity(&kind, 1)?;

    let header = match kind[0].as_str() {
        "boulevard" => Header::Boulevard(read_boulevard_header(&mut r)?),
        name => {
            let kind = BaselineKind::from_name(name)
                .ok_or_else(|| r.error(format!("unknown kind '{name}'")))?;
            let f = r.take("combiner")?;
            let combiner = match f.first().map(String::as_str) {
                Some("additive") if f.len() == 2 => Combiner::Additive {
                    rate: r.parse(&f[1])?,
                },
                Some("boulevard") if f.len() == 2 => Combiner::Boulevard {
                    lambda: r.parse(&f[1])?,
                },
                Some("average") if f.len() == 1 => Combiner::Average,
                _ => return Err(r.error("bad combiner")),
            };
            Header::Baseline(kind, combiner)
        }
    };

    let count = r.take("trees")?;
    r.arity(&count, 1)?;
    let count: usize = r.parse(&count[0])?;
    let mut trees = Vec::with_capacity(count);
    for _ in 0..count {
        trees.push(read_tree(&mut r)?);
    }
    if r.peek_keyword() != "end" {
        return Err(r.error("expected 'end'"));
    }

    Ok(match header {
        Header::Boulevard(mut m) => {
            if trees.len() != m.trace.len() {
                return Err(r.error("tree count does not match trace length"));
            }
            m.trees = trees;
            SavedModel::Boulevard(m)
        }
        Header::Baseline(kind, combiner) => SavedModel::Baseline(BaselineModel {
            kind,
            combiner,
            trees,
        }),
    })
}

enum Header {
    Boulevard(BoulevardModel),
    Baseline(BaselineKind, Combiner),
}

fn read_boulevard_header<R: BufRead>(r: &mut Lines<R>) -> Result<BoulevardModel> {
    let f = r.take("config")?;
    r.arity(&f, 9)?;
    let mode = StructureMode::from_name(&f[4])
        .ok_or_else(|| r.error(format!("unknown mode '{}'", f[4])))?;
    let config = BoulevardConfig {
        lambda: r.parse(&f[0])?,
        theta: r.parse(&f[1])?,
        n_trees: r.parse(&f[2])?,
        truncation: r.parse_opt(&f[3])?,
        mode,
        constraints: StructureConstraints {
            max_leaf_diameter: r.parse_opt(&f[5])?,
            min_leaf_samples: r.parse(&f[6])?,
            max_depth: r.parse(&f[7])?,
        },
        seed: r.parse(&f[8])?,
    };
    let t = r.take("truncation")?;
    r.arity(&t, 1)?;
    let truncation = r.parse(&t[0])?;

    let s = r.take("snapshot")?;
    let snapshot = match s.as_slice() {
        [none] if none == "none" => None,
        [threshold, b_star] => {
            let b_star = r.parse_opt(b_star)?;
            let frozen_residuals = if r.peek_keyword() == "frozen" {
                let z = r.take("frozen")?;
                Some(r.parse_all(&z)?)
            } else {
                None
            };
            Some(SnapshotState {
                loss_threshold: r.parse(threshold)?,
                b_star,
                frozen_residuals,
            })
        }
        _ => return Err(r.error("bad snapshot record")),
    };

    let fitted = r.take("fitted")?;
    let fitted = r.parse_all(&fitted)?;
    let mut trace = Vec::new();
    while r.peek_keyword() == "trace" {
        let t = r.take("trace")?;
        r.arity(&t, 3)?;
        trace.push(TraceEntry {
            loss: r.parse(&t[0])?,
            step_norm: r.parse(&t[1])?,
            clipped: r.parse(&t[2])?,
        });
    }
    Ok(BoulevardModel {
        config,
        truncation,
        trees: Vec::new(),
        trace,
        fitted,
        snapshot,
    })
}

fn read_tree<R: BufRead>(r: &mut Lines<R>) -> Result<FittedTree> {
    let h = r.take("tree")?;
    r.arity(&h, 4)?;
    let dim: usize = r.parse(&h[0])?;
    let node_count: usize = r.parse(&h[1])?;
    let leaf_count: usize = r.parse(&h[2])?;
    let population: usize = r.parse(&h[3])?;

    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let node = match r.peek_keyword() {
            "split" => {
                let f = r.take("split")?;
                r.arity(&f, 4)?;
                Node::Split {
                    feature: r.parse(&f[0])?,
                    threshold: r.parse(&f[1])?,
                    left: r.parse(&f[2])?,
                    right: r.parse(&f[3])?,
                }
            }
            _ => {
                let f = r.take("leaf")?;
                r.arity(&f, 1)?;
                Node::Leaf(r.parse(&f[0])?)
            }
        };
        nodes.push(node);
    }

    let mut cells = Vec::with_capacity(leaf_count);
    let mut values = Vec::with_capacity(leaf_count);
    let mut members = Vec::with_capacity(leaf_count);
    for _ in 0..leaf_count {
        let c = r.take("cell")?;
        r.arity(&c, 2 * dim)?;
        let bounds: Vec<f64> = r.parse_all(&c)?;
        let line = r.line;
        cells.push(
            Cell::new(bounds[..dim].to_vec(), bounds[dim..].to_vec()).map_err(|e| {
                Error::Parse {
                    line: line - 1,
                    message: e.to_string(),
                }
            })?,
        );
        let v = r.take("value")?;
        if v.is_empty() {
            return Err(r.error("missing leaf value"));
        }
        values.push(r.parse::<f64>(&v[0])?);
        members.push(r.parse_all::<usize>(&v[1..])?);
    }
    let line = r.line;
    let wrap = |e: Error| Error::Parse {
        line,
        message: e.to_string(),
    };
    let structure = TreeStructure::from_parts(dim, nodes, cells).map_err(wrap)?;
    FittedTree::from_parts(structure, population, values, members).map_err(wrap)
}

//! Pointer-linked input structures: sequences, trees and DAGs.

mod gen;
mod io;

pub use gen::{grid, perfect, random_full_binary, random_tree, sequence, skewed, forest, GenParams};
pub use io::{parse_structure, serialize_structure, parse_paren};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Sequence,
    Tree,
    Dag,
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StructureKind::Sequence => "sequence",
            StructureKind::Tree => "tree",
            StructureKind::Dag => "dag",
        })
    }
}

impl std::str::FromStr for StructureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequence" => Ok(StructureKind::Sequence),
            "tree" => Ok(StructureKind::Tree),
            "dag" => Ok(StructureKind::Dag),
            _ => Err(format!("unknown structure kind `{s}` (expected sequence|tree|dag)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureDecl {
    pub kind: StructureKind,
    pub max_children: usize,
}

/// Nodes are indexed `0..len()` in file order; `labels` keeps the
/// provisional identifiers from the input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataStructure {
    pub labels: Vec<String>,
    pub payload: Vec<i64>,
    pub children: Vec<Vec<usize>>,
}

impl DataStructure {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_leaf(&self, n: usize) -> bool {
        self.children[n].is_empty()
    }

    pub fn parent_counts(&self) -> Vec<usize> {
        let mut p = vec![0; self.len()];
        for cs in &self.children {
            for &c in cs {
                p[c] += 1;
            }
        }
        p
    }

    /// Nodes without a parent, in input order.
    pub fn roots(&self) -> Vec<usize> {
        self.parent_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn max_fanout(&self) -> usize {
        self.children.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Every internal node has exactly `k` children.
    pub fn is_full(&self, k: usize) -> bool {
        self.children.iter().all(|c| c.is_empty() || c.len() == k)
    }

    /// Kahn order that emits all leaves first, then every node after all of
    /// its children. `None` if the structure has a cycle.
    pub fn topo_order_leaves_first(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (p, cs) in self.children.iter().enumerate() {
            for &c in cs {
                parents[c].push(p);
            }
        }
        let mut pending: Vec<usize> = self.children.iter().map(Vec::len).collect();
        let mut order: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut head = 0;
        while head < order.len() {
            let c = order[head];
            head += 1;
            for &p in &parents[c] {
                pending[p] -= 1;
                if pending[p] == 0 {
                    order.push(p);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Length of the longest path from `n` down to a leaf, in edges.
    pub fn heights(&self) -> Option<Vec<usize>> {
        let order = self.topo_order_leaves_first()?;
        let mut h = vec![0; self.len()];
        for &n in &order {
            h[n] = self.children[n].iter().map(|&c| h[c] + 1).max().unwrap_or(0);
        }
        Some(h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    SequenceArity { max_children: usize },
    FanOut { node: String, count: usize, max_children: usize },
    DuplicateChild { node: String, child: String },
    Cycle { node: String },
    MultipleParents { node: String, count: usize },
    NotAChain { roots: usize },
    Unreachable { node: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Empty => write!(f, "structure has no nodes"),
            Violation::SequenceArity { max_children } => {
                write!(f, "sequence declared with max_children={max_children} (must be 1)")
            }
            Violation::FanOut { node, count, max_children } => {
                write!(f, "node `{node}` has {count} children, max_children={max_children}")
            }
            Violation::DuplicateChild { node, child } => write!(f, "node `{node}` lists child `{child}` twice"),
            Violation::Cycle { node } => write!(f, "cycle through node `{node}`"),
            Violation::MultipleParents { node, count } => {
                write!(f, "node `{node}` has {count} parents in a tree-shaped structure")
            }
            Violation::NotAChain { roots } => write!(f, "sequence is not a single chain ({roots} roots)"),
            Violation::Unreachable { node } => write!(f, "node `{node}` is not reachable from any root"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> crate::Result<()> {
        use crate::Error;
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(Violation::Cycle { node }) => Err(Error::Cycle(node)),
            Some(v) => Err(Error::KindViolation(v.to_string())),
        }
    }
}

pub fn validate(decl: &StructureDecl, ds: &DataStructure) -> ValidationReport {
    let mut v = Vec::new();
    let n = ds.len();
    if n == 0 {
        v.push(Violation::Empty);
    }
    if decl.kind == StructureKind::Sequence && decl.max_children != 1 {
        v.push(Violation::SequenceArity {
            max_children: decl.max_children,
        });
    }
    for (i, cs) in ds.children.iter().enumerate() {
        if cs.len() > decl.max_children {
            v.push(Violation::FanOut {
                node: ds.labels[i].clone(),
                count: cs.len(),
                max_children: decl.max_children,
            });
        }
        for (k, c) in cs.iter().enumerate() {
            if cs[..k].contains(c) {
                v.push(Violation::DuplicateChild {
                    node: ds.labels[i].clone(),
                    child: ds.labels[*c].clone(),
                });
            }
        }
    }

    // Iterative three-colour DFS; a grey target closes a cycle.
    let mut colour = vec![0u8; n];
    let mut on_cycle = vec![false; n];
    for s in 0..n {
        if colour[s] != 0 {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        colour[s] = 1;
        while let Some(&mut (u, ref mut k)) = stack.last_mut() {
            if *k < ds.children[u].len() {
                let c = ds.children[u][*k];
                *k += 1;
                match colour[c] {
                    0 => {
                        colour[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => on_cycle[c] = true,
                    _ => {}
                }
            } else {
                colour[u] = 2;
                stack.pop();
            }
        }
    }
    for (i, &c) in on_cycle.iter().enumerate() {
        if c {
            v.push(Violation::Cycle {
                node: ds.labels[i].clone(),
            });
        }
    }

    let parents = ds.parent_counts();
    if matches!(decl.kind, StructureKind::Tree | StructureKind::Sequence) {
        for (i, &p) in parents.iter().enumerate() {
            if p > 1 {
                v.push(Violation::MultipleParents {
                    node: ds.labels[i].clone(),
                    count: p,
                });
            }
        }
    }
    let roots = ds.roots();
    if decl.kind == StructureKind::Sequence && n > 0 && roots.len() != 1 {
        v.push(Violation::NotAChain { roots: roots.len() });
    }

    let mut seen = vec![false; n];
    let mut stack = roots.clone();
    while let Some(u) = stack.pop() {
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        stack.extend(ds.children[u].iter().copied());
    }
    for (i, &s) in seen.iter().enumerate() {
        if !s {
            v.push(Violation::Unreachable {
                node: ds.labels[i].clone(),
            });
        }
    }
    ValidationReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(children: Vec<Vec<usize>>) -> DataStructure {
        let n = children.len();
        DataStructure {
            labels: (0..n).map(|i| format!("v{i}")).collect(),
            payload: vec![0; n],
            children,
        }
    }

    const BIN: StructureDecl = StructureDecl {
        kind: StructureKind::Tree,
        max_children: 2,
    };

    #[test]
    fn valid_binary_tree() {
        assert!(validate(&BIN, &ds(vec![vec![1, 2], vec![], vec![]])).is_valid());
    }

    #[test]
    fn fanout_violation_names_node() {
        let r = validate(&BIN, &ds(vec![vec![1, 2, 3], vec![], vec![], vec![]]));
        assert_eq!(
            r.violations,
            vec![Violation::FanOut {
                node: "v0".into(),
                count: 3,
                max_children: 2
            }]
        );
    }

    #[test]
    fn self_loop_is_cycle() {
        let r = validate(&BIN, &ds(vec![vec![0]]));
        assert!(r.violations.contains(&Violation::Cycle { node: "v0".into() }));
        assert!(matches!(r.into_result(), Err(crate::Error::Cycle(_))));
    }

    #[test]
    fn shared_child_in_tree() {
        let r = validate(&BIN, &ds(vec![vec![2], vec![2], vec![]]));
        assert!(matches!(r.violations[0], Violation::MultipleParents { .. }));
        let dag = StructureDecl {
            kind: StructureKind::Dag,
            max_children: 2,
        };
        assert!(validate(&dag, &ds(vec![vec![2], vec![2], vec![]])).is_valid());
    }

    #[test]
    fn leaves_first_order() {
        let d = ds(vec![vec![1, 2], vec![3], vec![], vec![]]);
        let o = d.topo_order_leaves_first().unwrap();
        assert_eq!(&o[..2], &[2, 3]);
        assert_eq!(d.heights().unwrap(), vec![2, 1, 0, 0]);
    }
}

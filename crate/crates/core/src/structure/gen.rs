//! Deterministic structure generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataStructure, StructureDecl, StructureKind};

/// Payloads are drawn uniformly from `0..vocab` with a generator seeded by
/// `seed`.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub vocab: i64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { vocab: 16, seed: 0 }
    }
}

impl GenParams {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn finish(children: Vec<Vec<usize>>, prefix: &str, p: GenParams, rng: &mut ChaCha8Rng) -> DataStructure {
    let n = children.len();
    DataStructure {
        labels: (0..n).map(|i| format!("{prefix}{i}")).collect(),
        payload: (0..n).map(|_| rng.gen_range(0..p.vocab.max(1))).collect(),
        children,
    }
}

const fn tree(max_children: usize) -> StructureDecl {
    StructureDecl {
        kind: StructureKind::Tree,
        max_children,
    }
}

/// Perfect binary tree with `levels` levels of nodes (`2^levels - 1` nodes,
/// `2^(levels-1)` leaves), numbered breadth first.
pub fn perfect(levels: u32, p: GenParams) -> (StructureDecl, DataStructure) {
    assert!(levels >= 1, "perfect tree needs at least one level");
    let n = (1usize << levels) - 1;
    let children = (0..n)
        .map(|i| if 2 * i + 2 < n { vec![2 * i + 1, 2 * i + 2] } else { vec![] })
        .collect();
    (tree(2), finish(children, "n", p, &mut p.rng()))
}

/// Random full binary tree with an odd node count in `1..=max_nodes`.
pub fn random_full_binary(max_nodes: usize, p: GenParams) -> (StructureDecl, DataStructure) {
    let mut rng = p.rng();
    let max_leaves = max_nodes.div_ceil(2).max(1);
    let leaves = rng.gen_range(1..=max_leaves);
    // Subtrees as child lists in build order; merge random neighbours.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); leaves];
    let mut forest: Vec<usize> = (0..leaves).collect();
    while forest.len() > 1 {
        let k = rng.gen_range(0..forest.len() - 1);
        let id = children.len();
        children.push(vec![forest[k], forest[k + 1]]);
        forest.splice(k..=k + 1, [id]);
    }
    let (children, _) = renumber_preorder(&children, forest[0]);
    (tree(2), finish(children, "t", p, &mut rng))
}

/// Random tree with `1..=max_nodes` nodes and fan-out at most `max_arity`.
pub fn random_tree(max_nodes: usize, max_arity: usize, p: GenParams) -> (StructureDecl, DataStructure) {
    let mut rng = p.rng();
    let n = rng.gen_range(1..=max_nodes.max(1));
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| children[u].len() < max_arity).collect();
        let u = open[rng.gen_range(0..open.len())];
        children[u].push(v);
    }
    (tree(max_arity.max(1)), finish(children, "a", p, &mut rng))
}

/// `rows x cols` grid: cell (i, j) depends on (i-1, j) and (i, j-1).
pub fn grid(rows: usize, cols: usize, p: GenParams) -> (StructureDecl, DataStructure) {
    let id = |i: usize, j: usize| i * cols + j;
    let mut children = vec![Vec::new(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            if i > 0 {
                children[id(i, j)].push(id(i - 1, j));
            }
            if j > 0 {
                children[id(i, j)].push(id(i, j - 1));
            }
        }
    }
    let mut rng = p.rng();
    let mut ds = finish(children, "", p, &mut rng);
    ds.labels = (0..rows * cols).map(|k| format!("g{}_{}", k / cols, k % cols)).collect();
    (
        StructureDecl {
            kind: StructureKind::Dag,
            max_children: 2,
        },
        ds,
    )
}

/// Chain of `len` nodes; element `t` depends on element `t - 1`.
pub fn sequence(len: usize, p: GenParams) -> (StructureDecl, DataStructure) {
    let children = (0..len).map(|t| if t > 0 { vec![t - 1] } else { vec![] }).collect();
    (
        StructureDecl {
            kind: StructureKind::Sequence,
            max_children: 1,
        },
        finish(children, "s", p, &mut p.rng()),
    )
}

/// 63-node tree whose widest wavefront has 4 nodes: a root over two nodes
/// over four chains of 15 nodes each.
pub fn skewed(p: GenParams) -> (StructureDecl, DataStructure) {
    let mut children: Vec<Vec<usize>> = vec![vec![1, 2], vec![3, 18], vec![33, 48]];
    children.resize(63, Vec::new());
    for head in [3, 18, 33, 48] {
        for k in head..head + 14 {
            children[k] = vec![k + 1];
        }
    }
    (tree(2), finish(children, "k", p, &mut p.rng()))
}

/// Disjoint union, structures keep their order; labels get a `{i}.` prefix.
pub fn forest(parts: &[(StructureDecl, DataStructure)]) -> (StructureDecl, DataStructure) {
    let kind = if parts.iter().any(|(d, _)| d.kind == StructureKind::Dag) {
        StructureKind::Dag
    } else {
        StructureKind::Tree
    };
    let max_children = parts.iter().map(|(d, _)| d.max_children).max().unwrap_or(1);
    let mut out = DataStructure::default();
    for (i, (_, ds)) in parts.iter().enumerate() {
        let base = out.len();
        out.labels.extend(ds.labels.iter().map(|l| format!("{i}.{l}")));
        out.payload.extend_from_slice(&ds.payload);
        out.children
            .extend(ds.children.iter().map(|cs| cs.iter().map(|c| c + base).collect::<Vec<_>>()));
    }
    (StructureDecl { kind, max_children }, out)
}

fn renumber_preorder(children: &[Vec<usize>], root: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut new_id = vec![usize::MAX; children.len()];
    let mut order = Vec::new();
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        new_id[u] = order.len();
        order.push(u);
        stack.extend(children[u].iter().rev().copied());
    }
    let out = order
        .iter()
        .map(|&u| children[u].iter().map(|&c| new_id[c]).collect())
        .collect();
    (out, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::validate;

    #[test]
    fn perfect_sizes() {
        let (d, s) = perfect(8, GenParams::default());
        assert_eq!(s.len(), 255);
        assert_eq!((0..s.len()).filter(|&i| s.is_leaf(i)).count(), 128);
        assert!(validate(&d, &s).is_valid());
    }

    #[test]
    fn grid_shape() {
        let (d, s) = grid(10, 10, GenParams::default());
        assert_eq!(s.len(), 100);
        assert!(validate(&d, &s).is_valid());
        assert_eq!(s.roots(), vec![99]);
        assert_eq!(*s.heights().unwrap().iter().max().unwrap() + 1, 19);
    }

    #[test]
    fn sequence_chain() {
        let (d, s) = sequence(100, GenParams::default());
        assert_eq!(s.len(), 100);
        assert!(validate(&d, &s).is_valid());
        assert_eq!(s.roots(), vec![99]);
    }

    #[test]
    fn skewed_shape() {
        let (d, s) = skewed(GenParams::default());
        assert_eq!(s.len(), 63);
        assert!(validate(&d, &s).is_valid());
        let h = s.heights().unwrap();
        let widest = (0..=16).map(|k| h.iter().filter(|&&x| x == k).count()).max().unwrap();
        assert_eq!(widest, 4);
    }

    #[test]
    fn random_generators_are_valid_and_deterministic() {
        for seed in 0..50 {
            let p = GenParams { vocab: 16, seed };
            let (d, s) = random_full_binary(63, p);
            assert!(validate(&d, &s).is_valid() && s.is_full(2) && s.len() <= 63);
            assert_eq!(s, random_full_binary(63, p).1);
            let (d, s) = random_tree(63, 3, p);
            assert!(validate(&d, &s).is_valid() && s.max_fanout() <= 3);
        }
    }
}

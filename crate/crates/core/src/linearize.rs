//! Host-side layout of a linked structure as node arrays.
//!
//! Node ids: internal batches in descending execution order (so the root
//! batch has the lowest ids), then leaves. Every batch is a consecutive id
//! range and every parent precedes its children.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ra::RaSchedule;
use crate::structure::{DataStructure, StructureDecl};

/// What the lowered program expects from the linearizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct LinearizerPlan {
    pub batched: bool,
    pub specialized: bool,
    pub unroll_depth: usize,
    pub needs_roots: bool,
}

impl LinearizerPlan {
    pub fn from_schedule(s: &RaSchedule) -> Self {
        LinearizerPlan {
            batched: s.dynamic_batch,
            specialized: s.specialized(),
            unroll_depth: s.unroll_depth,
            needs_roots: s.refactors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Linearization {
    pub plan: LinearizerPlan,
    pub max_children: usize,
    /// Structure index -> node id.
    pub id_of: Vec<usize>,
    /// Node id -> structure index.
    pub node_of: Vec<usize>,
    pub labels: Vec<String>,
    pub first_leaf_id: usize,
    /// `children[k][id]`: id of child `k`, or -1.
    pub children: Vec<Vec<i64>>,
    /// Ids of the leaves executed as iterations (all leaves unless unrolled).
    pub leaf_batch: Vec<usize>,
    /// Internal iterations grouped into wavefronts, in execution order.
    pub internal_batches: Vec<Vec<usize>>,
    /// Internal batch ranges in id order (root batch first).
    pub batch_begin: Vec<usize>,
    pub batch_length: Vec<usize>,
    /// Sequential children-before-parents order of the executed nodes.
    pub order: Vec<usize>,
    pub roots: Vec<usize>,
    /// Node ids whose results are computed inline by an unrolled ancestor.
    pub inline: Vec<usize>,
    /// Per-id payload value.
    pub payload: Vec<i64>,
}

pub fn linearize(decl: &StructureDecl, ds: &DataStructure, s: &RaSchedule) -> Result<Linearization> {
    linearize_plan(decl, ds, LinearizerPlan::from_schedule(s))
}

pub fn linearize_plan(decl: &StructureDecl, ds: &DataStructure, plan: LinearizerPlan) -> Result<Linearization> {
    let n = ds.len();
    if n == 0 {
        return Err(Error::Input("empty structure".into()));
    }
    let heights = ds.heights().ok_or_else(|| Error::Cycle(cycle_witness(ds)))?;
    let roots = ds.roots();

    // first-visit (pre-order) rank and post-order, roots in input order
    let mut rank = vec![usize::MAX; n];
    let mut post = Vec::with_capacity(n);
    let mut next = 0;
    for &r in &roots {
        if rank[r] != usize::MAX {
            continue;
        }
        let mut stack = vec![(r, 0usize)];
        rank[r] = next;
        next += 1;
        while let Some(&mut (u, ref mut k)) = stack.last_mut() {
            if *k < ds.children[u].len() {
                let c = ds.children[u][*k];
                *k += 1;
                if rank[c] == usize::MAX {
                    rank[c] = next;
                    next += 1;
                    stack.push((c, 0));
                }
            } else {
                post.push(u);
                stack.pop();
            }
        }
    }

    let d = plan.unroll_depth;
    let mut step = vec![true; n];
    let mut level = heights.clone();
    if d > 0 {
        let mut depth = vec![usize::MAX; n];
        for &r in &roots {
            depth[r] = 0;
        }
        for &u in post.iter().rev() {
            for &c in &ds.children[u] {
                depth[c] = depth[c].min(depth[u] + 1);
            }
        }
        for u in 0..n {
            step[u] = depth[u] % (d + 1) == 0;
        }
        // level = 1 + max level of the next step roots below, leaves 0
        for &u in &post {
            if !step[u] {
                continue;
            }
            if ds.is_leaf(u) {
                level[u] = 0;
                continue;
            }
            let mut frontier = ds.children[u].clone();
            for _ in 1..=d {
                frontier = frontier.iter().flat_map(|&c| ds.children[c].iter().copied()).collect();
            }
            level[u] = 1 + frontier.iter().map(|&c| level[c]).max().unwrap_or(0);
        }
    }

    let by_rank = |mut v: Vec<usize>| {
        v.sort_by_key(|&u| rank[u]);
        v
    };
    let internal_steps = by_rank((0..n).filter(|&u| step[u] && !ds.is_leaf(u)).collect());
    let inline_internal = by_rank((0..n).filter(|&u| !step[u] && !ds.is_leaf(u)).collect());
    let step_leaves = by_rank((0..n).filter(|&u| step[u] && ds.is_leaf(u)).collect());
    let inline_leaves = by_rank((0..n).filter(|&u| !step[u] && ds.is_leaf(u)).collect());

    let max_level = internal_steps.iter().map(|&u| level[u]).max().unwrap_or(0);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); max_level + 1];
    for &u in &internal_steps {
        groups[level[u]].push(u);
    }
    groups.retain(|g| !g.is_empty());

    let mut node_of: Vec<usize> = Vec::with_capacity(n);
    for g in groups.iter().rev() {
        node_of.extend(g);
    }
    node_of.extend(&inline_internal);
    let first_leaf_id = node_of.len();
    node_of.extend(&step_leaves);
    node_of.extend(&inline_leaves);
    let mut id_of = vec![0; n];
    for (i, &u) in node_of.iter().enumerate() {
        id_of[u] = i;
    }

    let ids = |v: &[usize]| v.iter().map(|&u| id_of[u]).collect::<Vec<_>>();
    let leaf_batch = ids(&step_leaves);
    let mut internal_batches: Vec<Vec<usize>> = if plan.batched {
        groups.iter().map(|g| ids(g)).collect()
    } else {
        Vec::new()
    };
    let order: Vec<usize> = post.iter().filter(|&&u| step[u]).map(|&u| id_of[u]).collect();
    if !plan.batched {
        internal_batches = order.iter().filter(|&&i| i < first_leaf_id).map(|&i| vec![i]).collect();
    }
    // id order: the root batch is batch 0
    let mut ranges: Vec<(usize, usize)> = internal_batches
        .iter()
        .map(|b| (b.iter().copied().min().unwrap_or(0), b.len()))
        .collect();
    ranges.sort_unstable();
    let batch_begin = ranges.iter().map(|r| r.0).collect();
    let batch_length = ranges.iter().map(|r| r.1).collect();

    let k = decl.max_children.max(ds.max_fanout());
    let mut children = vec![vec![-1i64; n]; k];
    for u in 0..n {
        for (j, &c) in ds.children[u].iter().enumerate() {
            children[j][id_of[u]] = id_of[c] as i64;
        }
    }
    let payload = node_of
        .iter()
        .map(|&u| ds.payload.get(u).copied().unwrap_or(0))
        .collect();
    let inline = ids(&inline_internal).into_iter().chain(ids(&inline_leaves)).collect();
    let roots = ids(&roots);
    Ok(Linearization {
        plan,
        max_children: k,
        id_of,
        labels: node_of.iter().map(|&u| ds.labels[u].clone()).collect(),
        node_of,
        first_leaf_id,
        children,
        leaf_batch,
        internal_batches,
        batch_begin,
        batch_length,
        order,
        roots,
        inline,
        payload,
    })
}

fn cycle_witness(ds: &DataStructure) -> String {
    let order = ds.topo_order_leaves_first().unwrap_or_default();
    let mut seen = vec![false; ds.len()];
    for u in order {
        seen[u] = true;
    }
    let u = seen.iter().position(|s| !s).unwrap_or(0);
    ds.labels.get(u).cloned().unwrap_or_default()
}

/// Name of the array holding child `k` for a structure of arity `max`.
pub fn child_array_name(k: usize, max: usize) -> String {
    match (max, k) {
        (2, 0) => "left".into(),
        (2, 1) => "right".into(),
        _ => format!("child{k}"),
    }
}

impl Linearization {
    pub fn len(&self) -> usize {
        self.node_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_of.is_empty()
    }

    /// A single comparison against `first_leaf_id`.
    pub fn leaf_check(&self, id: usize) -> Result<bool> {
        if id >= self.len() {
            return Err(Error::Index(id));
        }
        Ok(id >= self.first_leaf_id)
    }

    /// The internal batch holding `id`, by binary search over `batch_begin`.
    pub fn batch_of(&self, id: usize) -> Result<usize> {
        if id >= self.len() {
            return Err(Error::Index(id));
        }
        if id >= self.first_leaf_id {
            return Err(Error::NotInternal(id));
        }
        let i = self.batch_begin.partition_point(|&b| b <= id);
        if i == 0 || id >= self.batch_begin[i - 1] + self.batch_length[i - 1] {
            return Err(Error::NotInternal(id));
        }
        Ok(i - 1)
    }

    /// Integer parameters available to lowered programs.
    pub fn params(&self) -> BTreeMap<String, i64> {
        let mut p = BTreeMap::new();
        let max = |v: &[Vec<usize>]| v.iter().map(Vec::len).max().unwrap_or(0) as i64;
        let all = self.all_batches();
        let internal_order: Vec<usize> = self.internal_order();
        p.insert("N".into(), self.len() as i64);
        p.insert("first_leaf_id".into(), self.first_leaf_id as i64);
        p.insert("leaf_batch_size".into(), self.leaf_batch.len() as i64);
        p.insert("num_internal_batches".into(), self.internal_batches.len() as i64);
        p.insert("max_internal_batch_size".into(), max(&self.internal_batches));
        p.insert("num_batches".into(), all.len() as i64);
        p.insert("max_batch_size".into(), max(&all));
        p.insert("num_nodes".into(), self.order.len() as i64);
        p.insert("num_internal_nodes".into(), internal_order.len() as i64);
        p.insert("num_roots".into(), self.roots.len() as i64);
        p
    }

    /// Leaf batch followed by the internal batches, for unspecialized nests.
    pub fn all_batches(&self) -> Vec<Vec<usize>> {
        let mut v = Vec::new();
        if !self.leaf_batch.is_empty() {
            v.push(self.leaf_batch.clone());
        }
        v.extend(self.internal_batches.iter().cloned());
        v
    }

    pub fn internal_order(&self) -> Vec<usize> {
        self.order.iter().copied().filter(|&i| i < self.first_leaf_id).collect()
    }

    /// Integer arrays available to lowered programs, flattened row-major;
    /// batch tables are padded with -1.
    pub fn arrays(&self) -> BTreeMap<String, Vec<i64>> {
        let v = |x: &[usize]| x.iter().map(|&i| i as i64).collect::<Vec<i64>>();
        let table = |b: &[Vec<usize>]| {
            let w = b.iter().map(Vec::len).max().unwrap_or(0);
            let mut t = Vec::with_capacity(b.len() * w);
            for row in b {
                t.extend(row.iter().map(|&i| i as i64));
                t.extend(std::iter::repeat_n(-1, w - row.len()));
            }
            t
        };
        let all = self.all_batches();
        let mut a = BTreeMap::new();
        a.insert("leaf_batch".into(), v(&self.leaf_batch));
        a.insert("batch_sizes".into(), self.internal_batches.iter().map(|b| b.len() as i64).collect());
        a.insert("internal_batches".into(), table(&self.internal_batches));
        a.insert("all_batch_sizes".into(), all.iter().map(|b| b.len() as i64).collect());
        a.insert("all_batches".into(), table(&all));
        a.insert("order".into(), v(&self.order));
        a.insert("internal_order".into(), v(&self.internal_order()));
        a.insert("roots".into(), v(&self.roots));
        a.insert("batch_begin".into(), v(&self.batch_begin));
        a.insert("batch_length".into(), v(&self.batch_length));
        for (k, c) in self.children.iter().enumerate() {
            a.insert(child_array_name(k, self.max_children), c.clone());
        }
        a
    }

    /// Text dump: numbering, batches and child arrays.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "nodes {}", self.len());
        let _ = writeln!(s, "first_leaf_id {}", self.first_leaf_id);
        let _ = writeln!(s, "numbering");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "  {i} {l}");
        }
        let _ = writeln!(s, "leaf_batch {}", join(&self.leaf_batch));
        let _ = writeln!(s, "internal_batches {}", self.internal_batches.len());
        for (i, b) in self.internal_batches.iter().enumerate() {
            let _ = writeln!(s, "  {i}: {}", join(b));
        }
        let _ = writeln!(s, "batch_begin {}", join(&self.batch_begin));
        let _ = writeln!(s, "batch_length {}", join(&self.batch_length));
        let _ = writeln!(s, "order {}", join(&self.order));
        let _ = writeln!(s, "roots {}", join(&self.roots));
        if !self.inline.is_empty() {
            let _ = writeln!(s, "inline {}", join(&self.inline));
        }
        for (k, c) in self.children.iter().enumerate() {
            let cs: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{} {}", child_array_name(k, self.max_children), cs.join(" "));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{grid, parse_paren, perfect, GenParams};

    fn batched() -> LinearizerPlan {
        LinearizerPlan {
            batched: true,
            specialized: true,
            ..Default::default()
        }
    }

    #[test]
    fn three_node_tree() {
        let (decl, ds) = parse_paren("(r (l1) (l2))").unwrap();
        let lin = linearize_plan(&decl, &ds, batched()).unwrap();
        assert_eq!(lin.labels, ["r", "l1", "l2"]);
        assert_eq!(lin.leaf_batch, [1, 2]);
        assert_eq!(lin.internal_batches, [vec![0]]);
        assert_eq!(lin.batch_begin, [0]);
        assert_eq!(lin.batch_length, [1]);
        assert!(lin.leaf_check(2).unwrap());
        assert!(!lin.leaf_check(0).unwrap());
        assert_eq!(lin.batch_of(0).unwrap(), 0);
        assert_eq!(lin.children[0], [1, -1, -1]);
    }

    #[test]
    fn seven_node_perfect_tree() {
        let (decl, ds) = perfect(3, GenParams::default());
        let lin = linearize_plan(&decl, &ds, batched()).unwrap();
        assert_eq!(lin.first_leaf_id, 3);
        assert_eq!(lin.batch_of(2).unwrap(), 1);
        assert!(matches!(lin.batch_of(5), Err(Error::NotInternal(5))));
        let sizes: Vec<usize> = lin.internal_batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, [2, 1]);
    }

    #[test]
    fn single_node() {
        let (decl, ds) = parse_paren("(a)").unwrap();
        let lin = linearize_plan(&decl, &ds, batched()).unwrap();
        assert_eq!(lin.first_leaf_id, 0);
        assert!(lin.leaf_check(0).unwrap());
        assert!(matches!(lin.leaf_check(1), Err(Error::Index(1))));
    }

    #[test]
    fn grid_wavefronts() {
        let (decl, ds) = grid(10, 10, GenParams::default());
        let lin = linearize_plan(&decl, &ds, batched()).unwrap();
        assert_eq!(lin.leaf_batch.len(), 1);
        assert_eq!(lin.internal_batches.len(), 18);
    }

    #[test]
    fn unrolled_batches_hold_step_roots() {
        let (decl, ds) = perfect(4, GenParams::default());
        let plan = LinearizerPlan {
            unroll_depth: 1,
            ..batched()
        };
        let lin = linearize_plan(&decl, &ds, plan).unwrap();
        // depths 0 and 2 are step roots; depth-3 leaves are inline
        assert_eq!(lin.leaf_batch.len(), 0);
        let sizes: Vec<usize> = lin.internal_batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, [4, 1]);
        assert_eq!(lin.inline.len(), 10);
        assert_eq!(lin.first_leaf_id, 7);
    }

    #[test]
    fn sequential_order_is_post_order() {
        let (decl, ds) = parse_paren("(a (b (c) (d)) (e))").unwrap();
        let lin = linearize_plan(&decl, &ds, LinearizerPlan::default()).unwrap();
        let labels: Vec<&str> = lin.order.iter().map(|&i| lin.labels[i].as_str()).collect();
        assert_eq!(labels, ["c", "d", "b", "e", "a"]);
        assert!(lin.internal_batches.iter().all(|b| b.len() == 1));
    }
}

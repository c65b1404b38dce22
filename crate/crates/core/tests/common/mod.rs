#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recurtc::linearize::{linearize_plan, Linearization, LinearizerPlan};
use recurtc::structure::{forest, grid, perfect, random_full_binary, random_tree, sequence, GenParams};
use recurtc::{DataStructure, StructureDecl};

/// One of the generator families, sized and seeded from `seed`.
pub fn fuzz_structure(seed: u64) -> (StructureDecl, DataStructure) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = GenParams { vocab: 16, seed };
    match rng.gen_range(0..6) {
        0 => perfect(rng.gen_range(1..=6), p),
        1 => random_full_binary(rng.gen_range(1..=63), p),
        2 => random_tree(rng.gen_range(1..=63), rng.gen_range(1..=4), p),
        3 => grid(rng.gen_range(1..=10), rng.gen_range(1..=10), p),
        4 => sequence(rng.gen_range(1..=100), p),
        _ => {
            let q = GenParams { vocab: 16, seed: seed ^ 0x5bd1 };
            forest(&[random_tree(rng.gen_range(1..=20), 2, p), random_full_binary(rng.gen_range(1..=21), q)])
        }
    }
}

/// Height of every node: 0 at leaves, else one more than the tallest child.
pub fn heights(ds: &DataStructure) -> Vec<usize> {
    fn h(n: usize, ds: &DataStructure, memo: &mut [Option<usize>]) -> usize {
        if let Some(v) = memo[n] {
            return v;
        }
        let v = ds.children[n].iter().map(|&c| h(c, ds, memo) + 1).max().unwrap_or(0);
        memo[n] = Some(v);
        v
    }
    let mut memo = vec![None; ds.len()];
    (0..ds.len()).map(|n| h(n, ds, &mut memo)).collect()
}

/// Every numbering and batching invariant of a plain (not unrolled)
/// linearization, checked against the structure directly.
pub fn check_linearization(ds: &DataStructure, lin: &Linearization) -> Result<(), String> {
    let n = ds.len();
    if lin.len() != n || lin.id_of.len() != n {
        return Err(format!("{} ids for {n} nodes", lin.len()));
    }
    for s in 0..n {
        if lin.node_of[lin.id_of[s]] != s {
            return Err(format!("numbering is not a bijection at {s}"));
        }
    }
    let id = |s: usize| lin.id_of[s];
    // leaves exactly at and above first_leaf_id
    for s in 0..n {
        let leaf = ds.children[s].is_empty();
        if leaf != (id(s) >= lin.first_leaf_id) {
            return Err(format!("node {s} (id {}) on the wrong side of first_leaf_id", id(s)));
        }
        if lin.leaf_check(id(s)).map_err(|e| e.to_string())? != leaf {
            return Err(format!("leaf_check disagrees at id {}", id(s)));
        }
    }
    // parents lower than children; child arrays match
    for s in 0..n {
        for (k, &c) in ds.children[s].iter().enumerate() {
            if id(s) >= id(c) {
                return Err(format!("parent id {} not below child id {}", id(s), id(c)));
            }
            if lin.children[k][id(s)] != id(c) as i64 {
                return Err(format!("child {k} of id {} is {}", id(s), lin.children[k][id(s)]));
            }
        }
        for k in ds.children[s].len()..lin.children.len() {
            if lin.children[k][id(s)] != -1 {
                return Err(format!("missing child {k} of id {} not -1", id(s)));
            }
        }
    }
    // batches: consecutive ids, range predicate, wavefront order
    let ht = heights(ds);
    let internal = (0..n).filter(|&s| !ds.children[s].is_empty()).count();
    let max_h = ht.iter().copied().max().unwrap_or(0);
    if lin.plan.batched && lin.internal_batches.len() != max_h {
        return Err(format!("{} internal batches for height {max_h}", lin.internal_batches.len()));
    }
    let mut batch_at = vec![usize::MAX; n];
    let mut covered = 0;
    for (b, batch) in lin.internal_batches.iter().enumerate() {
        let mut ids = batch.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(format!("batch {b} ids not consecutive"));
        }
        for &i in batch {
            if i >= lin.first_leaf_id {
                return Err(format!("leaf id {i} in internal batch {b}"));
            }
            batch_at[i] = b;
        }
        covered += batch.len();
        for &i in batch {
            for &c in &ds.children[lin.node_of[i]] {
                let cid = id(c);
                if cid < lin.first_leaf_id && batch_at[cid] >= b {
                    return Err(format!("child id {cid} not before parent id {i}"));
                }
            }
        }
    }
    if covered != internal {
        return Err(format!("{covered} internal iterations for {internal} internal nodes"));
    }
    for i in 0..lin.first_leaf_id {
        let b = lin.batch_of(i).map_err(|e| e.to_string())?;
        let (lo, len) = (lin.batch_begin[b], lin.batch_length[b]);
        if !(lo <= i && i < lo + len) {
            return Err(format!("id {i} outside range of batch {b}"));
        }
        let members = &lin.internal_batches;
        if !members.iter().any(|m| m.contains(&i) && m.len() == len && m.iter().min() == Some(&lo)) {
            return Err(format!("batch range {lo}+{len} is not an executed batch"));
        }
    }
    for i in lin.first_leaf_id..n {
        if lin.batch_of(i).is_ok() {
            return Err(format!("leaf id {i} inside an internal batch range"));
        }
    }
    let mut leaves = lin.leaf_batch.clone();
    leaves.sort_unstable();
    if leaves != (lin.first_leaf_id..n).collect::<Vec<_>>() {
        return Err("leaf batch is not every leaf".into());
    }
    // the sequential order also runs children first
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in lin.order.iter().enumerate() {
        pos[i] = k;
    }
    for s in 0..n {
        for &c in &ds.children[s] {
            if pos[id(c)] >= pos[id(s)] {
                return Err(format!("order runs id {} before child id {}", id(s), id(c)));
            }
        }
    }
    Ok(())
}

pub fn plans() -> [LinearizerPlan; 2] {
    [
        LinearizerPlan {
            batched: true,
            specialized: true,
            ..Default::default()
        },
        LinearizerPlan {
            batched: false,
            specialized: false,
            ..Default::default()
        },
    ]
}

/// Linearize under each plan and check.
pub fn check_structure(decl: &StructureDecl, ds: &DataStructure) -> Result<(), String> {
    for plan in plans() {
        let lin = linearize_plan(decl, ds, plan).map_err(|e| e.to_string())?;
        check_linearization(ds, &lin)?;
    }
    Ok(())
}

//! Barrier placement from lowering dependence facts.

use super::{access_sets, IlirProgram, Loop, Stmt};
use crate::error::Error;

/// A tensor written by nest `producer` and read by nest `consumer`, nests
/// numbered by position among the top-level loops. A nest reading its own
/// output carries the dependence on the loop of dimension `carrying`, or
/// only within one iteration when `carrying` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DependenceFact {
    pub tensor: String,
    pub producer: usize,
    pub consumer: usize,
    pub carrying: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct DependenceFacts {
    pub facts: Vec<DependenceFact>,
}

impl DependenceFacts {
    fn find(&self, tensor: &str, producer: usize, consumer: usize) -> Option<&DependenceFact> {
        self.facts
            .iter()
            .find(|f| f.tensor == tensor && f.producer == producer && f.consumer == consumer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierMode {
    /// One barrier per iteration of each carrying loop plus one between
    /// dependent nests.
    Minimal,
    /// A barrier at the head of every innermost loop reading a dependent
    /// tensor.
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct BarrierPlacement {
    pub mode: BarrierMode,
    /// Barrier statements in the program text.
    pub statements: usize,
    /// Set when a missing fact forced the conservative mode.
    pub fallback: bool,
}

fn strip(s: Vec<Stmt>) -> Vec<Stmt> {
    super::map_stmts(s, &mut |st| match st {
        Stmt::Barrier => Vec::new(),
        other => vec![other],
    })
}

fn barrier_at_dim(l: &mut Loop, dim: &str) -> bool {
    if l.dim == dim {
        l.body.insert(0, Stmt::Barrier);
        return true;
    }
    fn go(s: &mut [Stmt], dim: &str) -> bool {
        for st in s {
            let hit = match st {
                Stmt::Loop(m) => barrier_at_dim(m, dim),
                Stmt::If { then, els, .. } => go(then, dim) || go(els, dim),
                _ => false,
            };
            if hit {
                return true;
            }
        }
        false
    }
    go(&mut l.body, dim)
}

/// Innermost loops whose stores read one of `dep`.
fn conservative(s: &mut [Stmt], dep: &[String]) {
    for st in s {
        match st {
            Stmt::Loop(l) => {
                let inner = l.body.iter().any(|b| contains_loop(b));
                if inner {
                    conservative(&mut l.body, dep);
                } else {
                    let (reads, _) = access_sets(&l.body);
                    if reads.iter().any(|r| dep.contains(r)) {
                        l.body.insert(0, Stmt::Barrier);
                    }
                }
            }
            Stmt::If { then, els, .. } => {
                conservative(then, dep);
                conservative(els, dep);
            }
            _ => {}
        }
    }
}

fn contains_loop(s: &Stmt) -> bool {
    match s {
        Stmt::Loop(_) => true,
        Stmt::If { then, els, .. } => then.iter().chain(els).any(contains_loop),
        _ => false,
    }
}

pub fn place_barriers(p: &IlirProgram, deps: &DependenceFacts, mode: BarrierMode) -> (IlirProgram, BarrierPlacement) {
    let mut q = p.clone();
    q.body = strip(std::mem::take(&mut q.body));
    let nests: Vec<usize> = (0..q.body.len()).filter(|&i| matches!(q.body[i], Stmt::Loop(_))).collect();
    let sets: Vec<(Vec<String>, Vec<String>)> = nests.iter().map(|&i| access_sets(&q.body[i..i + 1])).collect();
    let mut before = vec![false; nests.len()];
    let mut carry: Vec<Option<String>> = vec![None; nests.len()];
    let mut dependent: Vec<String> = Vec::new();
    let mut missing: Option<String> = None;
    for j in 0..nests.len() {
        for t in &sets[j].0 {
            for i in 0..=j {
                if !sets[i].1.contains(t) {
                    continue;
                }
                if !dependent.contains(t) {
                    dependent.push(t.clone());
                }
                match deps.find(t, i, j) {
                    Some(_) if i < j => before[j] = true,
                    Some(f) => match &f.carrying {
                        Some(d) => carry[j] = Some(d.clone()),
                        // iteration-local reuse
                        None => {}
                    },
                    None => missing = missing.or(Some(t.clone())),
                }
            }
        }
    }
    let mut fallback = false;
    let mut mode = mode;
    if mode == BarrierMode::Minimal {
        if let Some(t) = &missing {
            log::warn!("{}; placing barriers conservatively", Error::UnknownDependence(t.clone()));
            fallback = true;
            mode = BarrierMode::Conservative;
        }
    }
    match mode {
        BarrierMode::Minimal => {
            for (j, &i) in nests.iter().enumerate() {
                if let (Some(d), Stmt::Loop(l)) = (&carry[j], &mut q.body[i]) {
                    if !barrier_at_dim(l, d) {
                        log::warn!("carrying loop `{d}` not found; placing barriers conservatively");
                        return place_fallback(p);
                    }
                }
            }
        }
        BarrierMode::Conservative => conservative(&mut q.body, &dependent),
    }
    // between nests, innermost-first indices stay valid
    for (j, &i) in nests.iter().enumerate().rev() {
        if before[j] || (mode == BarrierMode::Conservative && j > 0 && sets[j].0.iter().any(|t| dependent.contains(t))) {
            q.body.insert(i, Stmt::Barrier);
        }
    }
    let statements = q.static_barriers();
    (
        q,
        BarrierPlacement {
            mode,
            statements,
            fallback,
        },
    )
}

fn place_fallback(p: &IlirProgram) -> (IlirProgram, BarrierPlacement) {
    let (q, mut r) = place_barriers(p, &DependenceFacts::default(), BarrierMode::Conservative);
    r.fallback = true;
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilir::parse_program;

    const SRC: &str = "\
# program t
# output h
# param N, leaf_batch_size, num_batches, max_batch_size
# array leaf_batch[d_batch: leaf_batch_size] schedule
# array batch_sizes[d_all_batches: num_batches] count max_batch_size
# array batches[d_all_batches: num_batches, d_batch: max_batch_size] schedule
# array left[d_node: N] child
# input x[d_node: N, d_hidden: 8]
# tensor h[d_node: N, d_hidden: 8] global output
# dimmap d_node -> d_all_batches, d_batch
L1: for n = 0:leaf_batch_size:             # d_batch parallel
      node = leaf_batch[n]
L2:   for i = 0:8:                         # d_hidden
        h[node,i] = x[node,i]

L3: for b = 0:num_batches:                 # d_all_batches
L4:   for n = 0:batch_sizes[b]:            # d_batch parallel
        node = batches[b,n]
L5:     for i = 0:8:                       # d_hidden
          h[node,i] = h[left[node],i]
";

    fn facts() -> DependenceFacts {
        DependenceFacts {
            facts: vec![
                DependenceFact {
                    tensor: "h".into(),
                    producer: 0,
                    consumer: 1,
                    carrying: None,
                },
                DependenceFact {
                    tensor: "h".into(),
                    producer: 1,
                    consumer: 1,
                    carrying: Some("d_all_batches".into()),
                },
            ],
        }
    }

    #[test]
    fn minimal_places_one_per_batch_iteration() {
        let p = parse_program(SRC).unwrap();
        let (q, r) = place_barriers(&p, &facts(), BarrierMode::Minimal);
        assert!(!r.fallback);
        assert_eq!(r.statements, 2);
        let text = crate::ilir::print_program(&q);
        assert!(text.contains("\n    barrier\nL3: for b"), "{text}");
        let l3 = q.find_loop("L3").unwrap();
        assert_eq!(l3.body[0], Stmt::Barrier);
        let l4 = q.find_loop("L4").unwrap();
        assert!(!l4.body.contains(&Stmt::Barrier));
    }

    #[test]
    fn missing_fact_falls_back() {
        let p = parse_program(SRC).unwrap();
        let (q, r) = place_barriers(&p, &DependenceFacts::default(), BarrierMode::Minimal);
        assert!(r.fallback);
        assert_eq!(r.mode, BarrierMode::Conservative);
        assert!(q.find_loop("L5").unwrap().body[0] == Stmt::Barrier);
    }

    #[test]
    fn independent_program_has_none() {
        let src = SRC.split("\nL3:").next().unwrap().to_string() + "\n";
        let p = parse_program(&src).unwrap();
        let (_, r) = place_barriers(&p, &DependenceFacts::default(), BarrierMode::Minimal);
        assert_eq!(r.statements, 0);
        assert!(!r.fallback);
    }
}

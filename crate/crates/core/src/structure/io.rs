//! Structure file formats.
//!
//! JSON:
//!
//! ```text
//! { "kind": "tree" | "dag" | "sequence",
//!   "max_children": k,
//!   "nodes": [ { "id": "r", "payload": 0 }, ... ],
//!   "edges": [ [parent_id, child_position, child_id], ... ] }
//! ```
//!
//! Child positions of each parent must be exactly `0..fanout`.
//!
//! Parenthesized tree shorthand (one or more top-level trees):
//!
//! ```text
//! forest := tree+
//! tree   := "(" label [":" int] tree* ")"
//! label  := identifier | integer
//! ```
//!
//! Payload defaults to 0; `max_children` is the largest fan-out (at least 1).

use serde::{Deserialize, Serialize};

use super::{validate, DataStructure, StructureDecl, StructureKind};
use crate::error::{Error, Loc, Result};
use crate::syntax::{Cursor, Tok};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileNode {
    id: String,
    #[serde(default)]
    payload: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileStructure {
    kind: StructureKind,
    max_children: usize,
    nodes: Vec<FileNode>,
    #[serde(default)]
    edges: Vec<(String, usize, String)>,
}

/// Parse a JSON or parenthesized structure and validate it.
pub fn parse_structure(text: &str) -> Result<(StructureDecl, DataStructure)> {
    let trimmed = text.trim_start();
    let (decl, ds) = if trimmed.starts_with('{') {
        parse_json(text)?
    } else {
        parse_paren(text)?
    };
    validate(&decl, &ds).into_result()?;
    Ok((decl, ds))
}

fn parse_json(text: &str) -> Result<(StructureDecl, DataStructure)> {
    let f: FileStructure = serde_json::from_str(text).map_err(|e| Error::Parse {
        loc: Loc {
            line: e.line(),
            col: e.column(),
        },
        msg: e.to_string(),
    })?;
    let mut ds = DataStructure::default();
    for n in &f.nodes {
        if ds.labels.contains(&n.id) {
            return Err(Error::Invalid(format!("duplicate node id `{}`", n.id)));
        }
        ds.labels.push(n.id.clone());
        ds.payload.push(n.payload);
        ds.children.push(Vec::new());
    }
    let mut slots: Vec<Vec<Option<usize>>> = vec![Vec::new(); ds.len()];
    for (p, k, c) in &f.edges {
        let pi = ds.label_index(p).ok_or_else(|| Error::Unknown(p.clone()))?;
        let ci = ds.label_index(c).ok_or_else(|| Error::Unknown(c.clone()))?;
        let s = &mut slots[pi];
        if s.len() <= *k {
            s.resize(k + 1, None);
        }
        if s[*k].replace(ci).is_some() {
            return Err(Error::Invalid(format!("child position {k} of `{p}` given twice")));
        }
    }
    for (i, s) in slots.into_iter().enumerate() {
        for (k, c) in s.into_iter().enumerate() {
            let c = c.ok_or_else(|| {
                Error::Invalid(format!(
                    "child positions of `{}` are not contiguous (position {k} missing)",
                    ds.labels[i]
                ))
            })?;
            ds.children[i].push(c);
        }
    }
    Ok((
        StructureDecl {
            kind: f.kind,
            max_children: f.max_children,
        },
        ds,
    ))
}

/// Parse the parenthesized shorthand without validating.
pub fn parse_paren(text: &str) -> Result<(StructureDecl, DataStructure)> {
    let mut cur = Cursor::new(text, Loc { line: 1, col: 1 })?;
    let mut ds = DataStructure::default();
    if cur.at_end() {
        return Err(cur.error("expected `(`"));
    }
    while !cur.at_end() {
        paren_tree(&mut cur, &mut ds)?;
    }
    let max_children = ds.max_fanout().max(1);
    Ok((
        StructureDecl {
            kind: StructureKind::Tree,
            max_children,
        },
        ds,
    ))
}

fn paren_tree(cur: &mut Cursor, ds: &mut DataStructure) -> Result<usize> {
    // Explicit stack so deep chains do not recurse.
    let mut stack: Vec<usize> = Vec::new();
    let mut first = None;
    loop {
        let loc = cur.loc();
        cur.expect_sym("(")?;
        let label = match cur.next() {
            Some(Tok::Ident(s)) => s,
            Some(Tok::Int(v)) => v.to_string(),
            _ => return Err(Error::Parse { loc, msg: "expected node label after `(`".into() }),
        };
        if ds.labels.contains(&label) {
            return Err(Error::Parse {
                loc,
                msg: format!("duplicate node label `{label}`"),
            });
        }
        let payload = if cur.eat_sym(":") { cur.expect_int()? } else { 0 };
        let id = ds.len();
        ds.labels.push(label);
        ds.payload.push(payload);
        ds.children.push(Vec::new());
        if let Some(&p) = stack.last() {
            ds.children[p].push(id);
        }
        first.get_or_insert(id);
        stack.push(id);
        while cur.eat_sym(")") {
            stack.pop();
            if stack.is_empty() {
                return Ok(first.unwrap());
            }
        }
        if !cur.is_sym("(") {
            return Err(cur.error(format!("expected `(` or `)`, found {}", cur.describe())));
        }
    }
}

pub fn serialize_structure(decl: &StructureDecl, ds: &DataStructure) -> String {
    let f = FileStructure {
        kind: decl.kind,
        max_children: decl.max_children,
        nodes: ds
            .labels
            .iter()
            .zip(&ds.payload)
            .map(|(id, &payload)| FileNode { id: id.clone(), payload })
            .collect(),
        edges: ds
            .children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| {
                cs.iter()
                    .enumerate()
                    .map(move |(k, &c)| (ds.labels[p].clone(), k, ds.labels[c].clone()))
            })
            .collect(),
    };
    serde_json::to_string_pretty(&f).expect("structure serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paren_three_nodes() {
        let (d, s) = parse_structure("(r:0 (l1:3) (l2:5))").unwrap();
        assert_eq!(d.kind, StructureKind::Tree);
        assert_eq!(s.len(), 3);
        assert_eq!(s.roots(), vec![0]);
        assert_eq!(s.children[0], vec![1, 2]);
        assert_eq!(s.payload, vec![0, 3, 5]);
        assert_eq!(s.labels[2], "l2");
    }

    #[test]
    fn paren_single_node() {
        let (d, s) = parse_structure("(a)").unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.is_leaf(0));
        assert_eq!(d.max_children, 1);
    }

    #[test]
    fn dag_edges_in_tree_file() {
        let text = r#"{"kind":"tree","max_children":2,
            "nodes":[{"id":"a"},{"id":"b"},{"id":"c"}],
            "edges":[["a",0,"c"],["b",0,"c"]]}"#;
        assert!(matches!(parse_structure(text), Err(Error::KindViolation(_))));
        let dag = text.replace("\"tree\"", "\"dag\"");
        assert!(parse_structure(&dag).is_ok());
    }

    #[test]
    fn json_errors_carry_location() {
        let e = parse_structure("{\"kind\": \"tree\",\n \"max_children\": }").unwrap_err();
        assert!(matches!(e, Error::Parse { loc: Loc { line: 2, .. }, .. }), "{e}");
        let e = parse_structure("(a (b)").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn non_contiguous_positions() {
        let text = r#"{"kind":"tree","max_children":2,
            "nodes":[{"id":"a"},{"id":"b"}], "edges":[["a",1,"b"]]}"#;
        assert!(matches!(parse_structure(text), Err(Error::Invalid(_))));
    }

    #[test]
    fn cycle_rejected() {
        let text = r#"{"kind":"dag","max_children":2,
            "nodes":[{"id":"a"},{"id":"b"}], "edges":[["a",0,"b"],["b",0,"a"]]}"#;
        assert!(matches!(parse_structure(text), Err(Error::Cycle(_))));
    }

    #[test]
    fn json_round_trip() {
        let (d, s) = parse_structure("(r:1 (x:2 (y) (z:4)) (w))").unwrap();
        let (d2, s2) = parse_structure(&serialize_structure(&d, &s)).unwrap();
        assert_eq!((d, s), (d2, s2));
    }
}

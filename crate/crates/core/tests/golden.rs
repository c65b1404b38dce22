use std::path::PathBuf;

use recurtc::ilir::{parse_program, print_program, IndexExpr, Stmt};
use recurtc::lower::lower;
use recurtc::models::bundled;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compare against the stored dump; `RECURTC_BLESS=1` rewrites it.
fn check(name: &str, text: &str) {
    let path = golden(name);
    if std::env::var_os("RECURTC_BLESS").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, want, "{name} differs from its golden dump");
}

#[test]
fn treernn_batched_specialized() {
    let (g, s) = bundled("treernn", &[("H", 256)]).unwrap();
    let l = lower(&g, &s).unwrap();
    let text = print_program(&l.program);
    check("treernn_h256.ilir", &text);
    assert_eq!(parse_program(&text).unwrap(), l.program);

    let nests: Vec<_> = l
        .program
        .body
        .iter()
        .filter_map(|s| match s {
            Stmt::Loop(l) => Some(l),
            _ => None,
        })
        .collect();
    assert_eq!(nests.len(), 2);
    assert_eq!(nests[0].bound, IndexExpr::var("leaf_batch_size"));
    assert_eq!(nests[1].bound, IndexExpr::var("num_internal_batches"));
    let hidden: Vec<_> = l.program.loops().into_iter().filter(|m| m.dim == "d_hidden").collect();
    assert_eq!(hidden.len(), 4);
    assert!(hidden.iter().all(|m| m.bound == IndexExpr::Const(256)));
    let Some(Stmt::Loop(inner)) = nests[1].body.iter().find(|s| matches!(s, Stmt::Loop(_))) else {
        panic!("no batch loop")
    };
    assert_eq!(inner.bound, IndexExpr::load("batch_sizes", vec![IndexExpr::var("b_idx")]));
    let internal_hidden = recurtc::ilir::access_sets(&inner.body);
    assert_eq!(internal_hidden.1, ["lh", "rh", "rnn"]);
}

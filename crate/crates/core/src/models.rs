//! Bundled model files.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ra::{load_model, RaGraph, RaSchedule};

pub const BUNDLED: &[(&str, &str)] = &[
    ("treernn", include_str!("../models/treernn.json")),
    ("treernn_zero", include_str!("../models/treernn_zero.json")),
    ("treefc", include_str!("../models/treefc.json")),
    ("dagrnn", include_str!("../models/dagrnn.json")),
    ("treegru", include_str!("../models/treegru.json")),
    ("treelstm", include_str!("../models/treelstm.json")),
    ("mvrnn", include_str!("../models/mvrnn.json")),
];

pub fn names() -> Vec<&'static str> {
    BUNDLED.iter().map(|m| m.0).collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|m| m.0 == name).map(|m| m.1)
}

/// Load a bundled model, overriding parameters such as `H`.
pub fn bundled(name: &str, params: &[(&str, i64)]) -> Result<(RaGraph, RaSchedule)> {
    let src = source(name).ok_or_else(|| Error::Unknown(format!("bundled model `{name}`")))?;
    let o: BTreeMap<String, i64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    load_model(src, &o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_load() {
        for n in names() {
            let (g, s) = bundled(n, &[]).unwrap_or_else(|e| panic!("{n}: {e}"));
            s.validate(&g).unwrap();
        }
        let (g, _) = bundled("treernn", &[("H", 256)]).unwrap();
        assert_eq!(g.param("H"), Some(256));
    }
}

use thiserror::Error;

/// Location in a text input, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loc {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Loc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error at {loc}: {msg}")]
    Parse { loc: Loc, msg: String },
    #[error("cycle detected through node `{0}`")]
    Cycle(String),
    #[error("kind violation: {0}")]
    KindViolation(String),
    #[error("multiple recursion operators (`{0}` and `{1}`)")]
    MultipleRecursion(String, String),
    #[error("placeholder `{0}` is never bound by a recursion operator")]
    DanglingPlaceholder(String),
    #[error("child index {index} out of range for max_children={max_children} in `{op}`")]
    ChildIndex {
        op: String,
        index: usize,
        max_children: usize,
    },
    #[error("graph error: {0}")]
    Graph(String),
    #[error("unrolling is only supported for trees and sequences")]
    UnrollOnDag,
    #[error("recursive refactoring is only supported for trees and sequences")]
    RefactorOnDag,
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("node id {0} out of range")]
    Index(usize),
    #[error("node {0} is a leaf, not an internal node")]
    NotInternal(usize),
    #[error("missing dimension map for tensor dim `{dim}` of `{tensor}`")]
    MissingDimMap { tensor: String, dim: String },
    #[error("cannot bound loop `{0}`")]
    UnboundedLoop(String),
    #[error("split factor {factor} does not divide extent {extent}")]
    NonDivisibleSplit { extent: usize, factor: usize },
    #[error("bad permutation: {0}")]
    BadPermutation(String),
    #[error("access not found: {0}")]
    AccessNotFound(String),
    #[error("loop `{0}` has a constant bound; split it exactly instead of peeling")]
    PeelConstantBound(String),
    #[error("no dependence fact covers a cross-nest read of `{0}`")]
    UnknownDependence(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("dependence violation: {0}")]
    DependenceViolation(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("pass `{0}` has no target in this program")]
    NotApplicable(String),
    #[error("unknown name `{0}`")]
    Unknown(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Lowering of recursive tensor models over trees, DAGs and sequences to
//! irregular loop programs, with a linearizer, an interpreter and a
//! recursive reference evaluator.

pub mod error;
pub mod exec;
pub mod ilir;
pub mod linearize;
pub mod lower;
pub mod models;
pub mod passes;
pub mod pipeline;
pub mod ra;
pub mod structure;
pub mod syntax;
pub mod tensor;

pub use error::{Error, Loc, Result};
pub use exec::{EquivalenceReport, ExecMode, ExecOptions, ExecStats, Inputs};
pub use ilir::IlirProgram;
pub use linearize::{Linearization, LinearizerPlan};
pub use lower::Lowered;
pub use passes::Pass;
pub use ra::{RaGraph, RaSchedule};
pub use structure::{DataStructure, StructureDecl, StructureKind};
pub use tensor::{ElemType, NonlinMode, Tensor};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use recurtc::{ElemType, ExecMode, NonlinMode, Pass};

#[derive(Debug, Parser)]
#[command(name = "recurtc", version, about = "Compile and run recursive tensor models over trees, DAGs and sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Lower a model and write the RA, ILIR and linearizer-plan dumps.
    Compile(CompileArgs),
    /// Compile, linearize each structure and interpret, optionally checking
    /// against the reference evaluator.
    Run(RunArgs),
    /// Write a generated structure file.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Bundled model name or path to a model file.
    #[arg(long)]
    pub model: String,
    /// Parameter override, e.g. `H=8`.
    #[arg(long = "param", value_name = "NAME=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, i64)>,
    /// Dynamic batching on or off.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub batch: Option<bool>,
    /// Specialize the leaf check of the recursion body.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub specialize: Option<bool>,
    /// Hoist node-independent leaf computation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub hoist: Option<bool>,
    /// Recursion unrolling depth.
    #[arg(long, value_name = "N")]
    pub unroll: Option<usize>,
    /// Named cut of the model to refactor along, or `none`.
    #[arg(long, value_name = "CUT")]
    pub refactor: Option<String>,
    /// ILIR passes to apply in order.
    #[arg(long, value_name = "PASS[,PASS...]", value_delimiter = ',')]
    pub transform: Vec<Pass>,
    /// Directory for the dumps; falls back to RECURTC_DUMP_DIR.
    #[arg(long, env = "RECURTC_DUMP_DIR", value_name = "DIR")]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub compile: CompileArgs,
    /// Structure files (JSON or parenthesized).
    #[arg(long, required = true, num_args = 1..)]
    pub structure: Vec<PathBuf>,
    /// Input tensors as a JSON map from input name to tensor; random
    /// inputs drawn from --seed otherwise.
    #[arg(long, value_name = "FILE")]
    pub inputs: Option<PathBuf>,
    #[arg(long, default_value = "f64")]
    pub precision: ElemType,
    #[arg(long, default_value = "exact")]
    pub nonlin: NonlinMode,
    #[arg(long, default_value = "sequential")]
    pub mode: ExecMode,
    /// Compare with the reference evaluator.
    #[arg(long)]
    pub check: bool,
    /// Comparison tolerance; 1e-12 for f64 with exact nonlinearities,
    /// 5e-3 otherwise.
    #[arg(long, value_parser = parse_tol)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Perfect,
    RandomTree,
    RandomFullBinary,
    Grid,
    Sequence,
    Skewed,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub kind: GenKind,
    /// Levels of a perfect tree (2^k - 1 nodes).
    #[arg(long, default_value_t = 7)]
    pub levels: u32,
    /// Node budget of random trees.
    #[arg(long, default_value_t = 63)]
    pub nodes: usize,
    /// Maximum fan-out of random trees.
    #[arg(long, default_value_t = 2)]
    pub arity: usize,
    #[arg(long, default_value_t = 10)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    /// Sequence length.
    #[arg(long, default_value_t = 100)]
    pub len: usize,
    /// Payloads are drawn from 0..vocab.
    #[arg(long, default_value_t = 16)]
    pub vocab: i64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout otherwise.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_param(s: &str) -> Result<(String, i64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v = v.parse().map_err(|_| format!("`{v}` is not an integer"))?;
    Ok((k.to_string(), v))
}

fn parse_tol(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if t > 0.0 && t.is_finite() => Ok(t),
        _ => Err(format!("tolerance must be a positive number, got `{s}`")),
    }
}

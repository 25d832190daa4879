//! A workbench for the asynchronous pi-calculus.
//!
//! The crate type-checks processes against two thread disciplines —
//! sequentiality (a single computation thread, tracked by an indicator
//! bit) and well-bracketing (calls and returns follow a stack of
//! continuation names) — explores typed labelled transitions, audits the
//! well-bracketing property on traces, and decides or certifies the
//! corresponding bisimilarities on bounded state spaces.
//!
//! Entry points:
//!
//! - [`parser::parse`] reads `.pi` sources (declarations, process
//!   definitions, stacks, relation certificates);
//! - [`seq::typecheck_seq`] and [`wb::typecheck_wb`] implement the two
//!   type systems; [`wb::admissible_stacks`] enumerates stacks;
//! - [`lts::explore`] builds bounded reachable graphs;
//! - [`traces::generate_traces`] and [`traces::check_wellbracketed`]
//!   audit the bracket structure of typed traces;
//! - [`equiv::bisim_ordinary`], [`equiv::bisim_seq`], [`equiv::bisim_wb`]
//!   decide the bisimilarities; [`equiv::check_certificate`] verifies
//!   relation certificates, optionally up to deterministic reductions and
//!   static contexts;
//! - [`corpus::load_corpus`] exposes the bundled example library.

pub mod canon;
pub mod cli;
pub mod contexts;
pub mod corpus;
pub mod equiv;
pub mod lts;
pub mod names;
pub mod parser;
pub mod process;
pub mod refs;
pub mod seq;
pub mod sorting;
pub mod traces;
pub mod wb;

pub use canon::{alpha_equiv, canonical_form};
pub use lts::{explore, is_deterministic_step, step, Action, LtsCtx, StateGraph};
pub use names::{Name, NameKind};
pub use parser::{parse, render, SourceUnit};
pub use process::{Obj, Process, StaticContext};
pub use seq::{typecheck_seq, SeqConfig};
pub use sorting::{check_sorting, sorting_of_unit, Sorting};
pub use wb::{interleave, typecheck_wb, Stack, StackTag, WbConfig};

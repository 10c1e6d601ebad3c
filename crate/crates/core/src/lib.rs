//! descent: a batch safety verifier for monotonic data-structure traversals
//! written in a C subset.
//!
//! A traversal harness (`test` function) is lowered to a small register IR
//! over a two-level heap, instrumented with memory-safety checks, and then
//! proved safe by abstract interpretation. The distinguishing variant tracks
//! *herds* of traces: alongside the primary trace, shrunken "scapegoat"
//! traces of strictly smaller input size are carried so that whenever the
//! primary might fail, the failure can be blamed on a provably-failing
//! smaller trace. Well-founded descent on trace size then rules the failure
//! out without ever needing a universally quantified loop invariant.
//!
//! Module map:
//! - [`ir`]: instruction set, programs, loop metadata, input shapes.
//! - [`interp`]: concrete reference interpreter and bounded oracle.
//! - [`instrument`]: safety-check insertion.
//! - [`dataflow`]: conservative check elision / dead-store / CSE cleanup.
//! - [`front`]: C-subset parser and lowering.
//! - [`solver`]: incremental difference-logic + congruence solver.
//! - [`herd`]: the abstract trace-herd domain and its operations.
//! - [`engine`]: the worklist verifier (classic and descent modes).
//! - [`bench`]: batch manifest runner.

pub mod bench;
pub mod dataflow;
pub mod diag;
pub mod engine;
pub mod front;
pub mod herd;
pub mod instrument;
pub mod interp;
pub mod ir;
pub mod solver;

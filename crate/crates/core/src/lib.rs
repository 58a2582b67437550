//! An optimizing compiler and exact-inference engine for a small discrete
//! probabilistic language.
//!
//! Programs are parsed ([`parse`]), lowered from categorical to Boolean form
//! ([`encode`]), optimized by merging `flip`s that can never be evaluated on
//! the same execution ([`analysis`], [`hoist`]), and compiled to reduced
//! ordered BDDs for exact weighted model counting ([`bdd`], [`compile`]).
//! [`oracle`] enumerates execution paths and serves as the reference
//! semantics for every transformation.

pub mod analysis;
pub mod ast;
pub mod bdd;
pub mod bif;
pub mod compile;
pub mod encode;
pub mod hoist;
pub mod oracle;
pub mod parse;
pub mod pipeline;
pub mod prob;

pub use ast::{Expr, FlipId, Value};
pub use prob::Prob;

/// Stack size for threads that run the pipeline. Compilation and analysis
/// recurse over the program tree, which can be very deep for large networks.
pub const BIG_STACK: usize = 256 << 20;

/// Run `f` on a fresh thread with a [`BIG_STACK`] stack.
pub fn with_big_stack<R: Send + 'static>(f: impl FnOnce() -> R + Send + 'static) -> R {
    std::thread::Builder::new()
        .stack_size(BIG_STACK)
        .spawn(f)
        .expect("spawn worker thread")
        .join()
        .unwrap_or_else(|e| std::panic::resume_unwind(e))
}

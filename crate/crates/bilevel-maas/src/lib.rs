// Negated comparisons are deliberate: they treat NaN as a violation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Solver suite for single-leader multi-follower pricing games on two-sided
//! mobility markets.
//!
//! A regulator (the leader) runs a double auction: travelers bid to buy
//! mobility resources, transportation service providers bid to sell capacity.
//! The leader picks threshold prices and accept/reject sets; each accepted
//! follower then chooses its own purchase/sale level by optimizing a private
//! objective coupled to everyone else only through the scalar supply-demand
//! gap. This crate solves the resulting bilevel program to global optimality
//! and ships every piece needed to reproduce that claim independently:
//!
//! - [`model`]: domain types, validation, JSON (de)serialization.
//! - [`follower`]: closed-form follower best responses and the optimality
//!   audit used to certify incumbents.
//! - [`subsolver`]: a self-contained LP / mixed-binary / mixed-binary-convex
//!   solver (revised simplex, branch and bound, outer approximation).
//! - [`reform`]: single-level reformulation builders (high-point relaxation,
//!   strong-duality rows, McCormick envelopes, KKT/complementarity system).
//! - [`bnb`]: the strong-duality branch and bound with three branching rules,
//!   the complementarity-branching benchmark, and a brute-force oracle.
//! - [`instgen`]: seeded random instance generator and the embedded
//!   two-traveler example.
//! - [`cli`]: command-line front end (solve / benchmark / sensitivity).
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! single capability end to end.

pub mod bnb;
pub mod follower;
pub mod instgen;
pub mod model;
pub mod reform;
pub mod subsolver;

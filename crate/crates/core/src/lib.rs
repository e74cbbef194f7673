//! Simulation and numerical verification for auto-bidding auctions where every
//! bidder maximizes value subject to a budget and a return-on-spend (ROS)
//! constraint.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: instances, bid profiles, allocations and liquid welfare.
//! - [`mechanisms`]: first-price, two-bidder randomized first-price and
//!   quasi-proportional first-price allocation/payment rules.
//! - [`optimum`]: optimal fractional (LP) and integral (branch-and-bound)
//!   liquid welfare, plus brute-force oracles.
//! - [`bestresponse`]: best responses, equilibrium verification, dynamics and
//!   the inequality diagnostics that every equilibrium must satisfy.
//! - [`bounds`]: closed-form certificate functions behind the price-of-anarchy
//!   constants.
//! - [`paperlab`]: generators for the extremal instances, randomized
//!   worst-case search and the replication table.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bestresponse;
pub mod bounds;
pub mod error;
pub mod mechanisms;
pub mod model;
pub mod optimum;
pub mod paperlab;
pub mod tolerance;

pub use error::{Error, Result};
pub use mechanisms::{Mechanism, TieBreak};
pub use model::{Allocation, BidMode, BidProfile, Budget, Instance, Outcome};

//! Distributed Gaussian-process point-target tracking over wireless sensor
//! networks.
//!
//! The crate is organized around a small exact-GP core ([`gp`]), the four
//! product-of-experts aggregation rules ([`aggregate`]), the sliding-window
//! tracking pipeline with likelihood-gated data association ([`tracker`]),
//! theoretical upper-confidence error bounds ([`ucb`]), a Poisson-clutter
//! hybrid Bayesian filter ([`hybrid`]), and the sensor-network world
//! generator ([`sim`]).

pub mod aggregate;
pub mod config;
pub mod gp;
pub mod hybrid;
pub mod sim;
pub mod tracker;
pub mod ucb;

//! Deterministic simulator and experiment runner for Snow and the
//! flooding, gossip and Plumtree baselines.
//!
//! [`engine::Engine`] drives any [`engine::SimNode`] on a virtual clock.
//! [`scenario`] turns a JSON config into runs and CSV rows, and [`verify`]
//! checks the tree properties exhaustively.

pub mod baselines;
pub mod config;
pub mod engine;
pub mod latency;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod snow_node;
pub mod verify;

//! Multi expert-agent object classification.
//!
//! A center agent forwards tag-based queries to the expert agents it is most
//! confident about and mixes their replies into a ranked class vector. Each
//! expert keeps a K/M/D-region feature table that it revises online from the
//! queries it sees, and contested K-region promotions are arbitrated through
//! the center so that no feature defines two classes at once.
//!
//! Module map:
//!
//! - [`feature`]: probabilities, thresholds and region-partitioned tables
//! - [`memory`]: the sliding time-interval memory
//! - [`agent`]: expert agents (scoring, reinforcement, decay, promotion triggers)
//! - [`center`]: registry, confidence, dispatch and aggregation
//! - [`protocol`]: messages and the promotion session state machine
//! - [`sim`]: the seeded FIFO-channel runtime
//! - [`corpus`], [`config`], [`scenario`], [`metrics`], [`snapshot`]: the harness

pub mod agent;
pub mod center;
pub mod config;
pub mod corpus;
pub mod error;
pub mod feature;
pub mod memory;
pub mod metrics;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod snapshot;
pub mod tags;

pub use error::{Error, Result};

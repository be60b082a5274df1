//! Online open-world identity learning from streams of detection descriptors.
//!
//! Each frame's observations are matched against a bounded memory of
//! identity-labelled exemplars with reverse nearest neighbour ratio matching.
//! Matched exemplars decay in eligibility and are forgotten once redundant;
//! unmatched observations become new identities, subject to temporal
//! coherence rules. The crate also ships MOT-style evaluation, a synthetic
//! stream generator and a 1-D stability simulator.

pub mod bench;
pub mod cli;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod matcher;
pub mod memory;
pub mod metrics;
pub mod streams;

pub use engine::{compute_eta, Engine, EngineConfig, FrameResult, TrackStatus};
pub use error::{Error, Result};
pub use geometry::BBox;
pub use matcher::{MatchGroups, MatchParams, MatchRecord, Observation};
pub use memory::{IdentityId, ItemKey, MemoryItem, MemoryStore, StoreConfig};

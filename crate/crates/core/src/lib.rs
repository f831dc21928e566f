//! Population protocol simulator with exact influencer tracking.
//!
//! - [`model`]: protocols, configurations, the uniform pairwise scheduler and
//!   seeded trials.
//! - [`influence`]: forward influencer sets, backward reconstruction from a
//!   recorded schedule and the layered causality graph.
//! - [`protocols`]: catalog protocols and the JSON loader.
//! - [`exact`]: reachable-space enumeration, safety and hitting times.
//! - [`stats`]: transition probabilities, geometric-sum oracles, estimators.
//! - [`threshold`]: `n^(p/q)`-style threshold expressions.

pub mod error;
pub mod exact;
pub mod influence;
pub mod model;
pub mod protocols;
pub mod stats;
pub mod threshold;

pub use error::{Error, Result};
pub use model::{
    Configuration, Interaction, Observer, OutputSymbol, Protocol, StateId, TrialRecord,
    TrialSettings,
};

//! Blocking bandits: multi-armed bandits where a played arm is unavailable
//! for a fixed number of slots afterwards.
//!
//! The crate covers the environment and its online policies, exact and
//! relaxed offline optimization, closed-form regret bounds, pinwheel
//! scheduling tools, and a seeded Monte-Carlo experiment harness.

pub mod env;
pub mod error;
pub mod experiments;
pub mod model;
pub mod offline;
pub mod pinwheel;
pub mod plot;
pub mod policies;
pub mod regret;

pub use env::{run_policy, Policy, SlotView, Trace};
pub use error::{Error, Result};
pub use model::{load_instance, ArmIndex, ArmSpec, Instance, RewardDistribution, SeedSpec};

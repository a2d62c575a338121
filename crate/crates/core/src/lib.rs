//! Trust-aware robot navigation with human guidance.
//!
//! The crate turns spoken directions into scored symbol sequences,
//! simulates corridor worlds populated by guides of varying reliability,
//! and trains a PPO agent that decides when to ask, whether to follow,
//! and how much to trust what it hears.

pub mod config;
pub mod env;
pub mod eval;
pub mod guidance;
pub mod human;
pub mod lang2sym;
pub mod logging;
pub mod net;
pub mod ppo;
pub mod world;

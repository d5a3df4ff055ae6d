pub mod branching;
pub mod cache;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod parallel;
pub mod rate;
pub mod rng;
pub mod stats;
pub mod tails;
pub mod verify;
pub mod walk;

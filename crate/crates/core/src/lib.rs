//! Energy-efficient downlink power allocation for massive MIMO with
//! zero-forcing precoding and per-user rate guarantees.
//!
//! The pipeline for one channel draw is: check whether the minimum QoS powers
//! fit the budget ([`qos::check_feasibility`]); if they do, maximise energy
//! efficiency ([`solver::solve_ee`]); otherwise admit as many users as the
//! budget allows ([`admission::admit_users`]). [`experiment`] repeats this over
//! Monte-Carlo channels and parameter sweeps.

pub mod admission;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod link;
pub mod oracle;
pub mod qos;
pub mod solver;
pub mod units;
pub mod validation;

pub use error::{Error, Result};

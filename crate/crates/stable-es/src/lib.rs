//! Stability-guaranteed evolution-strategy policy search over
//! variable-impedance controllers, with a deterministic 2D block-insertion
//! benchmark.
//!
//! Every sampled policy is a mixture of spring-damper components whose
//! stiffness and damping matrices are drawn from Wishart distributions, so
//! the stability constraints hold by construction for every rollout of the
//! search, not just the final policy.

pub mod distributions;
pub mod harness;
pub mod optimizer;
pub mod policy;
pub mod sim2d;
pub mod spd;
pub mod streams;

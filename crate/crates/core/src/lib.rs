//! Exact (bias-free) sampling of the steady state of FCFS GI/GI/c queues.
//!
//! The sampler is a dominated coupling-from-the-past scheme. A multi-server
//! vacation system, built backwards in time from stationarity, bounds the
//! Kiefer–Wolfowitz workload vector from above; the empty system bounds it
//! from below. Both are driven by the same arrivals and service times and,
//! once they meet before time zero, the target queue is replayed forward to
//! produce a draw from its stationary law.
//!
//! Module map:
//! - [`dists`]: the catalog of interarrival and service laws
//! - [`rwmax`]: joint sampling of a negative-drift random walk and its
//!   infinite-horizon running maxima
//! - [`vacation`]: the stationary vacation system and service-time extraction
//! - [`kw`]: Kiefer–Wolfowitz recursion and FCFS replay
//! - [`driver`]: horizon doubling and coalescence detection
//! - [`analytics`]: closed-form M/M/c references and experiment harnesses
//! - [`cli`]: command-line surface

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod cli;
pub mod dists;
pub mod driver;
pub mod error;
pub mod kw;
pub mod par;
pub mod rng;
pub mod rwmax;
pub mod stats;
pub mod vacation;

pub use dists::DistributionSpec;
pub use driver::{sample_stationary, DcftpConfig, StationarySample};
pub use error::{Error, Result};
pub use kw::{KwVector, QueueState};

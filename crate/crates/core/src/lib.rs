//! Two-stage orchestration of a UAV fleet that serves the edge users of a
//! ground base station (GBS).
//!
//! Stage one places the fleet with GBS-aware K-Means++ clustering. Stage two
//! fine-tunes trajectories and transmit powers with multi-agent PPO (shared
//! actor, centralized critic). A one-shot reset-and-finetune controller
//! clears the Adam moments and decays both learning rates once the episode
//! fairness index plateaus.
//!
//! Module map:
//! - [`scenario`]: clustered user placement and the GBS/UAV user partition
//! - [`channel`]: air-to-ground and terrestrial path loss, SNR
//! - [`network`]: Max-RSSI association, congestion-aware rates, coverage
//! - [`metrics`]: Jain's index, coverage rate, normalized energy efficiency
//! - [`init_phase1`]: K-Means++ / Lloyd clustering and initial UAV poses
//! - [`env`]: the multi-agent environment with rewards and penalties
//! - [`learn`]: MLPs with hand-written backprop, GAE, PPO, Adam
//! - [`rnf`]: the plateau detector and optimizer reset
//! - [`harness`]: run configs, training loop, baselines, evaluation, logs

pub mod channel;
pub mod env;
pub mod error;
pub mod harness;
pub mod init_phase1;
pub mod learn;
pub mod metrics;
pub mod network;
pub mod rnf;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};

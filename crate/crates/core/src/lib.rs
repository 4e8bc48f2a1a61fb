//! Desk-scale LEO downlink simulator with a two-time-scale collaborative
//! deep-reinforcement-learning harness.
//!
//! A single LEO satellite (higher tier, acts once per cycle of `T` slots)
//! serves one ground UE (lower tier, acts every slot). The satellite picks a
//! transmit beam and a candidate RB-group set; the UE picks a receive beam and
//! the RB groups it actually uses. The crate is organised bottom-up:
//!
//! - [`numkit`]: complex matrices, a small MLP with exact gradients, Adam.
//! - [`orbit`]: circular-orbit propagation, elevation gating, path loss.
//! - [`channel`]: UPA steering vectors and the multipath channel matrix.
//! - [`link`]: beams, SNR, Shannon rate, RB pools and offset grids.
//! - [`env`]: the two-tier MDP environment and its reward bookkeeping.
//! - [`collab`]: the collaborative learners, rollout and the training loop.
//! - [`baselines`]: BFS/PBU beam management with greedy/MAB allocation.
//! - [`metrics`], [`config`], [`experiment`]: experiment orchestration.

// Validation guards use `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod collab;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod link;
pub mod metrics;
pub mod numkit;
pub mod orbit;
pub mod rng;
pub mod svg;

pub use error::{Error, Result};
pub use numkit::{ComplexMat, Gradients, Mlp, C64};

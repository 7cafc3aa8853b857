//! Scheduling of beamformer feedback over time-varying multi-antenna channels.
//!
//! The crate covers the Gauss–Markov channel, the quantized (ĝ, ẑ) state
//! grid and its transition model, average-reward policy iteration with
//! threshold policies, beamforming codebooks and a Monte Carlo link simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod codebook;
pub mod error;
pub mod mdp;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod state_grid;
pub mod synthetic;

pub use channel::{Beamformer, ChannelState, FadingParams};
pub use codebook::{Codebook, EpsStats};
pub use error::{Error, Result};
pub use mdp::{ControlProblem, Policy, RewardSpec, SolveResult, ThresholdProfile, ValueTable};
pub use simulator::{Curve, CurvePoint, EvalResult, TrajectoryConfig};
pub use state_grid::{GridSpec, ModelDocument, StationaryDistribution, TransitionModel};

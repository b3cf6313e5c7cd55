//! Delay-optimal, power-aware scheduling of variable-length packets over a
//! fading link with mutual-information accumulation.
//!
//! The online controller keeps a virtual queue of accumulated power debt and,
//! once per packet, solves a small dynamic program that trades frame length
//! against power. The [`oracle`] module provides brute-force ground truth
//! (exhaustive policy enumeration and the optimal constrained delay) for
//! small instances.

pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod model;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod sim;
pub mod solver;

pub use controller::{queue_update, run_frame, run_horizon, Controller, FrameRecord, VirtualQueue};
pub use error::{Error, Result, Violation};
pub use model::{
    build_rate_table, kmin, lmax, shannon_rate, validate_model, ChannelDistribution, LinkModel,
    PacketLengthDistribution, PowerMenu, RateTable, SystemConfig,
};
pub use oracle::{policy_stats, theta_star, verify_dp, FramePolicy, PolicyStats};
pub use sim::{compute_metrics, simulate, sweep_v, Metrics, Trace};
pub use solver::{
    build_value_table_static, build_value_table_stochastic, case_split, choose_power, penalties,
    solve_frame, FrameCase, FramePenalties, ValueTable,
};

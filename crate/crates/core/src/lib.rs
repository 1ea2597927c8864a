//! Minimum average peak age-of-information (PAoI) scheduling for a
//! source → UAV → destination relay link.
//!
//! The UAV flies at fixed altitude between known launch and landing points
//! and relays `N` update packets. Each packet is served in an uplink phase
//! (source → UAV) followed by a downlink phase (UAV → destination). The
//! crate jointly chooses the UAV waypoints, per-phase service times and
//! per-phase transmit energies so that the average peak AoI is minimised:
//!
//! * [`allocation`] solves the energy/service-time problem for a fixed
//!   trajectory (closed form when energy is plentiful, a one-dimensional
//!   dual search otherwise).
//! * [`trajectory`] improves the waypoints for a fixed allocation by
//!   successive convex approximation, each step being a small convex QCQP
//!   handled by [`convex_kernel`].
//! * [`bcd`] alternates the two blocks until the objective stalls.
//! * [`experiments`] holds config ingestion, the straight-line baseline,
//!   parameter sweeps and CSV/JSON output used by the CLI.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod bcd;
pub mod convex_kernel;
pub mod error;
pub mod experiments;
pub mod model;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::{Allocation, Point, Scenario, Solution, Trajectory};

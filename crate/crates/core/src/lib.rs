//! NLOS-aware ultra-wideband localization toolkit.
//!
//! Low-cost UWB modules report a distance plus two signal-strength readings
//! per anchor. When the line of sight is blocked the time of flight grows
//! and the measured range comes out long, which drags a least-squares fix
//! away from the true position. This crate implements the full
//! countermeasure chain:
//!
//! * [`sim`] — 2D environments (anchors, walls), ray-occlusion LOS ground
//!   truth, and synthetic ranging campaigns with NLOS-dependent bias;
//! * [`features`] — classifier inputs (received powers, their difference,
//!   windowed ranging deviation) and rank-correlation diagnostics;
//! * [`nn`] — a from-scratch feed-forward network that maps those features
//!   to the probability a measurement is line of sight;
//! * [`solver`] — weighted nonlinear least-squares positioning with
//!   warm-started Levenberg-Marquardt iteration and a grid-search oracle;
//! * [`eval`] — error summaries, improvement percentages and CDFs comparing
//!   weighted against unweighted localization;
//! * [`io`], [`commands`], [`pipeline`] — config/CSV schemas and the
//!   reproducible end-to-end experiment.
//!
//! The `nlosloc` binary in this workspace exposes each step as a
//! subcommand; the guide under `book/` walks through the concepts with
//! runnable examples, each compiled and run as a doc-test of this crate.

pub mod commands;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
mod guide;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};

//! Application-specific partial crossbar synthesis.
//!
//! Given a timed communication trace, the flow profiles traffic per
//! fixed-size window, derives which targets must never share a bus, finds the
//! smallest number of buses that carries every window's traffic, binds targets
//! to buses so that the heaviest per-bus overlap is minimal, and replays the
//! trace on the result to measure latency.
//!
//! ```
//! use xbar::generator::{benchmark_preset, generate, Preset};
//! use xbar::solver::SolverLimits;
//! use xbar::window::AnalysisParams;
//!
//! let mut spec = benchmark_preset(Preset::Mat2Like);
//! spec.horizon = 20_000;
//! let trace = generate(&spec).unwrap();
//! let params = AnalysisParams::new(spec.burst_len_mean, 0.3);
//! let outcome = xbar::flow::design_trace(&trace, &params, &SolverLimits::unlimited(), None).unwrap();
//! assert!(outcome.bus_count() < 12);
//! ```

pub mod error;
pub mod flow;
pub mod generator;
pub mod sim;
pub mod solver;
pub mod trace;
pub mod window;

pub use error::{Error, Result};

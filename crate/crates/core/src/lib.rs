//! Core model and processing chain for angled ultrasonic roadside sensing.
//!
//! A module is one ultrasonic ranger mounted at a beam angle to the road
//! axis. As a vehicle crosses the beam the module sees a distance profile
//! (a ramp while the beam sweeps the front or rear face, a flat section
//! while it rests on the near side). This crate covers the whole chain:
//!
//! * [`geometry`] and [`sim`]: the ideal beam/vehicle intersection and a
//!   seeded sample synthesizer with quantization, noise and outliers.
//! * [`filter`]: range and peak rejection, window reduction, EMA smoothing.
//! * [`detect`]: z-score trend-break detection, second-difference refinement
//!   and classification into front/side/rear events.
//! * [`estimate`]: speed from the ramp slope, length from the side dwell.
//! * [`fusion`]: devices made of modules on an ordered bus, an unreliable
//!   inter-device channel, and inverse-variance fusion of module reports.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]
#![forbid(unsafe_code)]
// NaN must fail the range checks, so they are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod detect;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod fusion;
pub mod geometry;
pub mod noise;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Distance, SensorConfig, VehiclePass};

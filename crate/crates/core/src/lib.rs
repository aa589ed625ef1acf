//! Weak Euler approximations for SDEs driven by Lévy processes, with a
//! Monte Carlo harness for measuring weak convergence rates.
//!
//! The crate is organised bottom-up: [`levy`] models jump measures,
//! [`drivers`] generates noise increments, [`schemes`] integrates,
//! [`models`] holds coefficient sets and the problem catalog, and
//! [`harness`] runs experiments and writes reports.

pub mod drivers;
pub mod harness;
pub mod levy;
pub mod models;
pub mod quad;
pub mod rng;
pub mod schemes;

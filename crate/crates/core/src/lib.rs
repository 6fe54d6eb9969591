//! Discrete-event simulation of MPI applications under DVFS runtimes.
//!
//! [`engine`] executes a [`model::Workload`] under a [`policies::PolicySpec`]
//! on a [`model::MachineModel`]; [`analysis`] turns results and traces into
//! comparison, coverage and predictability tables.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod model;
pub mod policies;
pub mod units;
pub mod workloads;

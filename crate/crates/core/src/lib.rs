//! Simulation and bifurcation analysis of a cascade of two adiabatic CSTRs
//! operated with constant flow, periodic flow reversal, or flow reversal
//! with relaxation.

pub mod commands;
pub mod config;
mod continuation;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod output;
pub mod periodic;
pub mod relaxation;
pub mod steady;
pub mod svg;

pub use error::{Error, Result};
pub use model::{CascadeState, Damkohler, FlowDirection, ModelParams, Phase};

use thiserror::Error;

use crate::model::CascadeState;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its admissible domain")]
    Domain { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("derivative of the kinetic term is singular at alpha = {alpha} (order {order} < 1)")]
    KineticSingularity { alpha: f64, order: f64 },

    #[error("singular Jacobian (|det| = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("duration {duration} is shorter than one integration step {step}")]
    StepAdjustment { duration: f64, step: f64 },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("continuation stalled near p = {p} after {steps} steps")]
    Stall { p: f64, steps: usize },

    #[error("no settled regime after {cycles} cycles; last cycle-start states {trailing:?}")]
    NotSettled {
        cycles: usize,
        trailing: Vec<CascadeState>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

//! Linearized calibration of a time-linear local-volatility perturbation from
//! call prices at two expiries.

pub mod black_scholes;
pub mod calibrate;
pub mod error;
pub mod forward;
pub mod fredholm;
pub mod kernels;
pub mod model;
pub mod pipeline;
pub mod quadrature;
pub mod special;
pub mod spectral;

pub use error::{Result, VolcalError};

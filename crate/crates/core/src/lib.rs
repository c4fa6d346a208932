//! Nonlinear normal modes of conservative mechanical systems and a nonlinear
//! model-predictive controller that steers a torque-limited plant onto them.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`, which is what the
//! controller and the command-line harness use.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrate;
pub mod linalg;
pub mod modes;
pub mod nmpc;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DoublePendulum64 = dynamics::DoublePendulum<f64>;
pub type DoublePendulum32 = dynamics::DoublePendulum<f32>;
pub type SystemParams64 = dynamics::SystemParams<f64>;
pub type State64 = dynamics::State<f64>;
pub type ControlInput64 = dynamics::ControlInput<f64>;
pub type Trajectory64 = integrate::Trajectory<f64>;
pub type Mode64 = modes::Mode<f64>;
pub type ModeChart64 = modes::ModeChart<f64>;
pub type LinearMode64 = modes::LinearMode<f64>;

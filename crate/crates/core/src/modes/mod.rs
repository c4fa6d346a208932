//! Linear and nonlinear normal modes.
//!
//! Nonlinear modes are found as brake orbits: the system is released at rest
//! from a point on the energy level set and must come to rest again. Those
//! rest points are tracked from the linear-mode direction up to the target
//! energy by continuation, and the resulting orbit is summarized by a
//! polynomial chart for the curved NMPC cost.

mod chart;
mod linear;
mod search;

pub use chart::{fit_chart, projector_c_perp, ChartExport, ChartPoint, ModeChart, DEFAULT_CHART_DEGREE};
pub use linear::{linear_modes, LinearMode, ModeFamily};
pub use search::{
    continuation, find_eigenmode, rest_point_on_level_set, shoot_residual, GeneratorPoint, Mode, ModeSearchConfig,
};

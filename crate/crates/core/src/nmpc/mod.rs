//! Nonlinear model-predictive control: running costs, the condensed horizon
//! problem, a Gauss-Newton SQP with a box-constrained QP, and the
//! receding-horizon loop.

pub mod controller;
pub mod cost;
pub mod nlp;
pub mod qp;
pub mod sqp;

pub use controller::{closed_loop, closed_loop_csv_header, ClosedLoopRun, Controller, SampleLog, PLANT_DT};
pub use cost::{
    cost_residual_curved, running_cost, running_cost_curved, running_cost_straight, stage_residual,
    stage_residual_with_jacobians, straight_multipliers, CostSpec, CostVariant, CostWeights, StageResidual,
};
pub use nlp::{build_nlp, Condensed, Nlp, NmpcConfig, StatePenalty, WarmStart};
pub use qp::{solve_box_qp, BoxQpSolution, Bound};
pub use sqp::{sqp_solve, NlpSolution};

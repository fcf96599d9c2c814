//! Online multi-model tube MPC.

mod mpc;
mod observer;
mod prediction;
mod qp;
mod switching;

pub use mpc::{
    assemble_constraints, build_qp, check_decoded, decode, tube_feedback, Block, Constraints, Controller,
    ControllerConfig, ControllerState, Decoded, Layout, StepDiagnostics, DECODE_TOL,
};
pub use observer::{observer_gain, observer_step, ObserverState, INNOVATION_HISTORY};
pub use prediction::{
    assemble_cost, build_error_maps, build_prediction, cost_maps, offset_cost_maps, CostMaps, CostWeights, ErrorMaps,
    ReferenceTrajectory, ReferenceWindow,
};
pub use qp::{max_violation, solve_qp, PreparedQp, QpProblem, QpSolution, QpStatus, QP_ITERATION_CAP, TOL_QP};
pub use switching::{switching_signal, Switcher};

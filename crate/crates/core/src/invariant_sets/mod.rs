//! Offline synthesis per model: gains, tube cross-section, tightened
//! constraints, terminal set and feasibility set, plus the cross-model
//! intersections that keep the controller feasible across switches.

mod bundle;
mod lqr;
mod mrpi;
mod sets;

pub use bundle::{
    cross_model_intersections, synthesize_bank, synthesize_model, ControllerBundle, LqrWeights, SynthesisConfig,
};
pub use lqr::synthesize_feedback;
pub use mrpi::{mrpi_outer, template_directions, MrpiResult, MRPI_MAX_TERMS};
pub use sets::{backward_feasible_set, mpi_tracking, one_step_backward, steering_feasible, tighten};

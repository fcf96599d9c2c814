//! Model chain from an identified ARMAX difference equation to the
//! delay-compensated, input-rate system used by the controller.

mod armax;
mod bank;
mod plant;
mod state_space;

pub use armax::{simulate_armax, ArmaxModel};
pub use bank::{BankEntry, FitReport, ModelBank, RegionGrid};
pub use plant::{
    build_plant_model, dead_time_shift, DeadTimeShift, Interval, PlantLimits, PlantModel, Region, IDX_A, IDX_S, IDX_V,
};
pub use state_space::{acceleration_transform, armax_to_ss, augment_position_velocity, DelayedStateSpace};

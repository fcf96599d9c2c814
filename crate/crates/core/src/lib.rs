//! Robust tube-based model predictive control of a longitudinal vehicle
//! position over a bank of identified, input-delayed linear models.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: H-polytopes, an in-repo LP solver and the set algebra
//!   (support functions, Pontryagin differences, Fourier–Motzkin projection).
//! - [`models`]: ARMAX models and the chain of transformations to the
//!   delay-compensated, input-rate system used for prediction.
//! - [`ident`]: region-partitioned ARMAX identification and a synthetic
//!   drive-log generator.
//! - [`invariant_sets`]: offline synthesis of gains, tubes, terminal and
//!   feasibility sets, including the cross-model intersections.
//! - [`controller`]: observers, switching, QP assembly and the tube law.
//! - [`sim`]: reference generation, disturbances, closed-loop harness,
//!   metrics, CSV/SVG output.
//! - [`verify`]: property checks on stored bundles and closed-loop logs.

pub mod controller;
pub mod defaults;
pub mod error;
pub mod geometry;
pub mod ident;
pub mod invariant_sets;
pub mod linalg;
pub mod models;
pub mod serde_mat;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};

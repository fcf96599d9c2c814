//! Convex polytopes in halfspace form, interval boxes and the set operations
//! the invariant-set synthesis is built on.

mod boxes;
pub mod lp;
mod polytope;
mod projection;
mod zonotope;

pub use boxes::IntervalBox;
pub use lp::{solve_lp, LpResult, LpStatus};
pub use polytope::HPolytope;
pub use projection::{fourier_motzkin, FM_ROW_CAP};
pub use zonotope::{affine_image_box, BoxImage};

use nalgebra::{DMatrix, DVector};

use crate::Result;

/// Feasibility tolerance of the LP solver.
pub const TOL_LP: f64 = 1e-9;
/// Membership and set-comparison tolerance.
pub const TOL_GEO: f64 = 1e-7;
/// Tolerance used when deciding whether a row is redundant.
pub const TOL_RED: f64 = 1e-8;

/// Anything with a support function `h_S(d) = max_{x in S} d'x`.
pub trait SupportFunction {
    fn dim(&self) -> usize;
    fn support(&self, dir: &DVector<f64>) -> Result<f64>;
}

/// Support function of `sum_k M_k S_k` where each part is a linear image of a
/// support-function set: `h(d) = sum_k h_{S_k}(M_k' d)`.
pub fn minkowski_support(parts: &[(&DMatrix<f64>, &dyn SupportFunction)], dir: &DVector<f64>) -> Result<f64> {
    let mut total = 0.0;
    for (m, s) in parts {
        if m.nrows() != dir.len() || m.ncols() != s.dim() {
            return Err(crate::Error::Dimension(format!(
                "map is {}x{}, direction {}, set dimension {}",
                m.nrows(),
                m.ncols(),
                dir.len(),
                s.dim()
            )));
        }
        total += s.support(&(m.transpose() * dir))?;
    }
    Ok(total)
}

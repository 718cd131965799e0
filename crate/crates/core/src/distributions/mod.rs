//! The moment-matched component `A`, its truncations, and samplers for `A`,
//! the unit sphere and the hidden-direction law `M_{A,v}`.

mod audit;
mod moment_matched;
mod sampling;
mod truncation;

pub use audit::{sample_moment_audit, MomentCheck};
pub use moment_matched::{
    build_prop_c2, build_with_eps, eps_floor, eps_floor_poly, gaussian_abs_moment, Audit, MomentMatchedA,
    AUDIT_GRID_STEP, MAX_MATCHED_MOMENTS,
};
pub use sampling::{sample_hidden_direction, sample_scalar, sample_unit_sphere, Component, HiddenDirectionModel};
pub use truncation::{gaussian_window_moment, truncated_conditional_moment};

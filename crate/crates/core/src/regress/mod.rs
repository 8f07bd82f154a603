//! Parameter estimation: ordinary linear regression and a box-constrained
//! Levenberg-Marquardt solver driven by the analytic model gradients.

mod init;
mod linear;
mod lm;

pub use init::{default_init, perturb_init};
pub use linear::{linear_fit, linear_fit_points, LinearFit};
pub use lm::{
    jacobian_check, lm_fit, lm_fit_single, project, LmConfig, LmResult, StopReason, BOX_K_MAX,
    BOX_LAMBDA_MAX, BOX_LAMBDA_MIN, BOX_M_MAX, BOX_S0_MAX, BOX_S0_MIN,
};

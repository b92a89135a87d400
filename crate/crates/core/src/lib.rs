//! Numerical laboratory for the degenerate parabolic chemotaxis problem
//!
//! ```text
//! u_t = x^{2-q} u_xx + u (u_x)^q,   0 < x <= 1,   q = 2/N,
//! u(t,0) = 0,  u(t,1) = m,  u_x >= 0,
//! ```
//!
//! its steady states `U_a(x) = U_1(ax)`, the Hardy-type constant
//! `lambda_1(a) = inf int h'^2 / U_a'^q / int h^2 / x^{2-q}`, the Lyapunov
//! functionals, and exponential convergence-rate estimation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evolution;
pub mod functionals;
pub mod interp;
pub mod ode;
pub mod params;
pub mod profiles;
pub mod quadrature;
pub mod rate_analysis;
pub mod spectrum;
pub mod tridiag;
pub mod weighted_norms;

pub use error::{Error, MembershipClause, Result};
pub use params::ModelParams;
pub use profiles::SteadyProfile;
pub use weighted_norms::{Grid, GridFn};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

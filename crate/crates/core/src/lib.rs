//! Best constants of finite sections of weighted Hardy inequalities.
//!
//! For a non-decreasing positive weight sequence `lambda_k` with prefix sums
//! `Lambda_n`, the best constant `mu_N` in
//!
//! ```text
//! sum_{n<=N} (sum_{k<=n} lambda_k a_k / Lambda_n)^p <= mu_N sum_{n<=N} a_n^p
//! ```
//!
//! is computed exactly (to a bisection tolerance) from the breakdown index
//! of a scalar recurrence, cross-checked against direct optimization, and
//! compared with its two-term asymptotic expansion in `log N`.
//!
//! ```
//! use hardy_core::{solve_mu, ProblemSpec, WeightRule};
//!
//! let spec = ProblemSpec::new(2.0, WeightRule::unit()).unwrap();
//! let r = solve_mu(2, 1e-12, &spec).unwrap();
//! assert!((r.mu - (1.5 + 1.25f64.sqrt()) / 2.0).abs() < 1e-11);
//! ```

pub mod asymptotics;
pub mod compensated;
pub mod error;
pub mod exec;
pub mod oracle;
pub mod quadrature;
pub mod recurrence;
pub mod solver;
pub mod weights;

pub use asymptotics::{
    fit_second_order, limit_constant, log_n_estimate, predict_mu, theta, theta_inf_closed,
    theta_infinity, AsymptoticEstimate, SecondOrderFit,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use oracle::{kkt_residual, norm_general, norm_p2, objective, ExtremalVector, IterationOptions, MeanMatrix};
pub use recurrence::{
    breakdown_index, h_step, omega, run_h, threshold_index, BreakdownIndex, BreakdownOutcome, HTrace,
    ProblemSpec, Step, StoreMode,
};
pub use solver::{mu_thresholds, residual, solve_mu, ConstantResult};
pub use weights::{check_conditions, g_eval, ConditionReport, WeightFamily, WeightRule};

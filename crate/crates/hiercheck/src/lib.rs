//! Second-stage checking of hierarchical Bayesian models.
//!
//! The library fits two-stage models (normal-normal and beta-binomial) by
//! MCMC and then asks whether the *second stage* — the distribution assumed
//! for the group-level parameters — is compatible with the data. The main
//! tools are:
//!
//! * **Pivotal residuals** ([`pivotal`]): standardized residuals
//!   `(y_ij - theta_i)/sigma_i` and `(theta_i - mu)/tau`, and probability
//!   integral transforms `Beta(p_i; alpha, beta)`, all of which have known
//!   marginal reference distributions when evaluated at posterior draws.
//! * **Summary p-values** ([`pivotal::shapiro_wilk`],
//!   [`pivotal::max_uniform_pit`]): one p-value per posterior draw.
//! * **Dependent order-statistic bounds** ([`bounds`]): a distribution-free
//!   bound on the joint p-value of the (dependent) per-draw p-value series.
//! * **Partial posterior p-values** ([`partial`]): the comparison baseline,
//!   together with prior- and posterior-predictive p-values.
//! * **A calibration harness** ([`calibration`]): null-model Monte Carlo
//!   that measures the finite-sample distribution of every p-value type.
//!
//! Each major capability has a runnable example under `examples/`; the
//! `hiercheck` binary exposes the same operations as subcommands for batch
//! use.

pub mod bounds;
pub mod calibration;
pub mod error;
pub mod gof;
pub mod models;
pub mod partial;
pub mod pivotal;
pub mod report;
pub mod samplers;
pub mod special;

pub use error::{Error, Result};
pub use special::Probability;

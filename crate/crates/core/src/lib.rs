//! Estimation of the historical functional linear model with an unknown lag.
//!
//! The response curve `y_i(t)` is related to the recent history of a covariate
//! curve through `y_i(t) = alpha(t) + int_{t-delta}^t beta(s, t) x_i(s) ds + e_i(t)`.
//! The coefficient surface is expanded in P1 tent functions over a uniform
//! triangulation of `{0 <= s <= t <= T}` and a nested group bridge penalty
//! shrinks whole upper-left triangles of the surface to zero, which yields
//! the lag `delta` together with `beta`.

pub mod cli;
pub mod design;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod penalties;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};

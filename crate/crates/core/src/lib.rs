//! Forward-backward splitting for Tikhonov functionals in Banach spaces.
//!
//! The crate minimizes `F(u) + Φ(u)` with a smooth data term
//! `F(u) = ‖Ku - f‖^r / r` and a non-smooth penalty `Φ`, alternating a
//! gradient evaluation `w = F'(u)` with the generalized backward step
//!
//! ```text
//! u⁺ = argmin_v ‖v - u‖^p / p + τ (⟨w, v⟩ + Φ(v))
//! ```
//!
//! Two penalties are supported: weighted power penalties on coefficient
//! vectors (iterative thresholding-like algorithms, see [`threshold`]) and
//! total variation on regular grids (see [`tv`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banach;
pub mod error;
pub mod fbs;
pub mod operators;
pub mod threshold;
pub mod tv;

pub use banach::{
    duality_map, holder_bound_jr, norm, signed_power, DualVector, Exponents, Signal,
};
pub use error::{Error, Result};

//! Transient stability-constrained optimal power flow with the classical
//! generator model.
//!
//! The network is Kron-reduced to the generator internal nodes once per
//! stage (pre-fault, during fault, post-fault), with loads turned into
//! constant admittances at assumed bus voltages. The swing equations are
//! discretized with the trapezoidal rule and appended to an AC-OPF, and the
//! rotor angles are kept within a band around the center of inertia. The
//! resulting NLP is solved by a primal-dual interior-point method ([`nlp`]).
//!
//! [`metrics::run_comparison`] runs the whole study: an AC-OPF, the TSC-OPF
//! with load voltages at 1.0 p.u., a re-solve with load admittances at the
//! solved voltages, and mean absolute trajectory errors of both against the
//! trapezoidal simulator in [`tdsim`].

// Index loops mirror the math; `!(x > y)` comparisons deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod admittance;
pub mod cli;
pub mod case;
pub mod contingency;
pub mod error;
pub mod metrics;
pub mod nlp;
pub mod opf;
pub mod plot;
pub mod swing;
pub mod tdsim;

//! Uniform approximation of a function on a finite point set by a sum of
//! partition algebras.
//!
//! A [`Domain`](domain::Domain) is a finite set of points together with two or
//! more factor partitions. Each partition induces an algebra of functions that
//! are constant on its classes. The crate provides
//!
//! * the alternating midrange levelling iteration ([`levelling`]),
//! * bolts and their alternating-sign functionals, which certify lower bounds
//!   on the approximation error ([`bolts`]),
//! * an exact linear-programming oracle with a checkable dual certificate
//!   ([`oracle`]),
//! * finite-resolution experiments on region families ([`diagnostics`]).

pub mod bolts;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod expr;
pub mod levelling;
pub mod oracle;
pub mod simplex;

pub use domain::{Domain, LevelSetIndex, Region};
pub use error::{Error, Result};
pub use levelling::{FactorFunction, Field, LevellingState, StoppingRule, Termination};
pub use oracle::{OracleResult, OracleStatus};

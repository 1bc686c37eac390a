//! Tabular distributionally robust offline reinforcement learning with
//! KL-divergence uncertainty sets.
//!
//! The crate solves robust MDPs exactly when the nominal kernel is known and
//! learns from offline data through pessimistic robust value iteration, for
//! both episodic and discounted models.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod instances;
pub mod kl_dual;
pub mod model;
pub mod occupancy;
pub mod policy;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{DiscountedRmdp, FiniteHorizonRmdp, KernelTable, SaTable, StateTable, Violation};
pub use policy::Policy;

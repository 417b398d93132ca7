//! Convex-hull pricing for unit commitment.
//!
//! Prices are the multipliers of the relaxed power balance constraints,
//! improved by surrogate Lagrangian relaxation. Each run maintains a lower
//! bound (the best exact dual value), an upper bound on the optimal dual value
//! obtained from detecting multiplier divergence, and the cost of the best
//! feasible schedule found by primal recovery.

pub mod bound;
pub mod case;
pub mod cases;
pub mod dual;
pub mod lp;
pub mod network;
pub mod recovery;
pub mod slr;
pub mod unit;
pub mod validate;

pub use case::{load_case, CaseData, CaseError, Mode, UnitParams};
pub use slr::{run, ResultBundle, SlrConfig, Termination};

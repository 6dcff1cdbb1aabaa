//! Follow-the-leader particle schemes for scalar conservation laws, the
//! Hughes pedestrian model and the Aw–Rascle–Zhang system.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arz;
pub mod atomize;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod hughes;
pub mod ibvp;
pub mod integrator;
pub mod lwr;
pub mod model;
pub mod reference;
pub mod runner;
pub mod scenario;
pub mod trajectory;

pub use error::{Error, Result};

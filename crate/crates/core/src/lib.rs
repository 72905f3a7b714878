//! Convex-relaxation-then-quantization (CRQ) one-bit precoding for massive
//! MIMO: asymptotic symbol-error-probability prediction via scalar
//! state-evolution fixed points, SEP-optimal regularization parameters, an
//! AMP solver with post-processing, an independent convex oracle, and a
//! seeded Monte Carlo harness that validates every prediction.

pub mod amp;
pub mod asymptotics;
pub mod error;
pub mod fixed_point;
pub mod linalg;
pub mod optimal;
pub mod oracle;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};

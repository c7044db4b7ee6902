//! Exact scalars, the cyclotomic quotient ring and graded Laurent series.

pub mod cyclotomic;
pub mod rational;
pub mod series;

pub use cyclotomic::{cyc_reduce, CycScalar};
pub use rational::{from_pq, multifactorial, q, qi, to_pq, Q};
pub use series::{geom_expand, Coeff, GradedSeries};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("element is not rational: {0}")]
    NotRational(String),
    #[error("variable ordering violated: {0}")]
    OrderingViolation(String),
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("cannot parse rational {0:?}")]
    Parse(String),
    #[error("element is not invertible")]
    NotInvertible,
    #[error("cyclotomic order must be at least 2, got {0}")]
    BadOrder(u32),
}

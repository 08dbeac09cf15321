use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid potential: {0}")]
    Potential(String),

    /// A parameter violates one of the standing constraints on (p, q, ε).
    #[error("constraint `{constraint}` violated: {detail}")]
    Constraint {
        constraint: &'static str,
        detail: String,
    },

    #[error("field does not match mesh: {0}")]
    Shape(String),

    /// A nonzero discrete function with `Q_V(u) <= 0` was encountered.
    #[error("energy form is not positive definite: {0}")]
    Indefinite(String),

    #[error("solver failure: {0}")]
    Solver(String),

    /// No acceptable step along the Newton direction; carries the last iterate.
    #[error("line search failed: {detail}")]
    LineSearch {
        detail: String,
        last: Box<crate::grid::DiscreteFunction>,
    },
}

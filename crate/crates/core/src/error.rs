use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("corner proximity: point ({x}, {y}) lies within {margin} of a corner")]
    CornerProximity { x: f64, y: f64, margin: f64 },

    #[error("no boundary: a torus has no boundary")]
    NoBoundary,

    #[error("point ({x}, {y}) is not on the domain boundary")]
    NotOnBoundary { x: f64, y: f64 },

    #[error("invalid interface: {0}")]
    InvalidInterface(String),

    #[error("degenerate interface: {0}")]
    Degenerate(String),

    #[error("self-intersection: segments {0} and {1} cross")]
    SelfIntersection(usize, usize),

    #[error("no boundary intersection: loop interfaces have no endpoints")]
    NoBoundaryIntersection,

    #[error("endpoint left its wall segment: {0}")]
    EndpointLeftWall(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("no sign change of {what} on the bracket [{lo}, {hi}]")]
    NoSignChange { what: String, lo: f64, hi: f64 },

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("tangential condition violated: max |<X, nu_Omega>| on the boundary = {0:e}")]
    TangentialCondition(f64),

    #[error("orthogonality violated: endpoint angle residual {0:e} rad")]
    NotOrthogonal(f64),

    #[error("time step underflow at step {0}: 8 halvings did not restore energy decrease")]
    DtUnderflow(usize),

    #[error("perturbation rejected {0} times in a row")]
    TooManyRejections(usize),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-smooth point: {0}")]
    NonSmoothPoint(String),

    #[error("jet order {requested} exceeds the supported maximum of {max}")]
    OrderExceeded { requested: usize, max: usize },

    #[error("syntax error at offset {offset}: expected one of {}", expected.join(", "))]
    Syntax { offset: usize, expected: Vec<String> },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("field `{0}` must depend on base coordinates only")]
    FiberDependence(String),

    #[error("index {index} out of range 1..={bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("singular frame: {0}")]
    SingularFrame(String),

    #[error("singular transition: {0}")]
    SingularTransition(String),

    #[error("singular metric: {0}")]
    SingularMetric(String),

    #[error("antisymmetry violation: {0}")]
    AntisymmetryViolation(String),

    #[error("empty sample box: {0}")]
    EmptyBox(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

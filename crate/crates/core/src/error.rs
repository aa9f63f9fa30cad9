use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("primes above 5 are not supported (got {0})")]
    UnsupportedPrime(u64),
    #[error("defining polynomial is not irreducible mod p")]
    NotIrreducible,
    #[error("F_{p}^{k} is too large for table-based arithmetic")]
    FieldTooLarge { p: u64, k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("not a 1-unit")]
    NotOneUnit,
    #[error("division by a non-unit")]
    NonUnitDivision,
    #[error("integrality failure: {0}")]
    Integrality(String),
    #[error("recurrence unstable at order {order}; need at least {required} coefficients")]
    Unstable { order: usize, required: usize },
    #[error("no unit root")]
    NoUnitRoot,
    #[error("multiple unit roots ({0})")]
    MultipleUnitRoots(usize),
    #[error("no stabilization: {0}")]
    NoStabilization(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

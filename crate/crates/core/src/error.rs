use core::fmt;

/// Errors raised by parameter validation and by the simulation engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented invariant.
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    /// A schedule entry is out of order or outside the horizon.
    InvalidSchedule(&'static str),
    /// The integrated state became non-finite.
    NonFinite { time: f64 },
    /// Ground-truth extended EMF is only defined for Ld = Lq.
    SalientMachine,
    /// Logs passed to a comparison differ in horizon or count.
    LengthMismatch,
    /// The log does not cover the requested analysis window.
    InsufficientData(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::InvalidSchedule(reason) => write!(f, "invalid schedule: {reason}"),
            Error::NonFinite { time } => write!(f, "simulation state became non-finite at t = {time:e} s"),
            Error::SalientMachine => f.write_str("ground-truth EMF requires Ld = Lq"),
            Error::LengthMismatch => f.write_str("logs differ in horizon or sample count"),
            Error::InsufficientData(reason) => write!(f, "insufficient data: {reason}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, name: &'static str, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason })
    }
}

use thiserror::Error;

use crate::exact::ConvergenceTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("conditioning event numerically null (survival mass {mass:e})")]
    NullConditioning { mass: f64 },

    #[error("irreducibility violated: {0}")]
    Reducible(String),

    #[error("no convergence after {iterations} iterations (last TV increment {last_increment:e})")]
    NoConvergence {
        iterations: usize,
        last_increment: f64,
        increments: Vec<f64>,
    },

    #[error("Yaglom limit not reached by t = {t_end}; the truncation window may be too small")]
    YaglomNotConverged {
        t_end: f64,
        trace: Box<ConvergenceTrace>,
    },

    #[error("exponential moment diverges at lambda0 = {lambda}")]
    MomentDiverges { lambda: f64 },

    #[error("divergent tail: return from infinity fails")]
    DivergentTail,

    #[error("hypothesis part {part} not verifiable: {reason}")]
    HypothesisFailed { part: u8, reason: String },

    #[error("criterion not satisfied: {0}")]
    CriterionNotSatisfied(String),

    #[error("conditioning event unobserved: increase n_paths or lower horizon")]
    NoSurvivors,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

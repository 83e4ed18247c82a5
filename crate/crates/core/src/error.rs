use core::fmt;

use thiserror::Error;

use crate::prelude::*;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Sampler step names, used to locate failures inside a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Loadings,
    ResponseCoefficients,
    Variances,
    Factors,
    Memberships,
    Sticks,
    HyperVariances,
    Adaptation,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Step::Loadings => "loadings",
            Step::ResponseCoefficients => "response-coefficients",
            Step::Variances => "variances",
            Step::Factors => "factors",
            Step::Memberships => "memberships",
            Step::Sticks => "sticks",
            Step::HyperVariances => "hyper-variances",
            Step::Adaptation => "adaptation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite (minimum diagonal pivot {min_pivot:e})")]
    NotPositiveDefinite { min_pivot: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("feature `{feature}` of view {view} has zero variance over its observed entries")]
    ConstantFeature { view: usize, feature: String },
    #[error("step `{step}` failed at iteration {iteration}: {source}")]
    Step {
        step: Step,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn at(self, step: Step, iteration: usize) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                iteration,
                source: Box::new(e),
            },
        }
    }

    /// True when the root cause is a numerical (factorization) failure.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. } => true,
            Error::Step { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

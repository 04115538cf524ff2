//! Experiment pipelines shared by the command-line driver, the examples and
//! the acceptance suite.

pub mod bench2d;
pub mod darcy;
pub mod linear_gaussian;
pub mod selftest;

use thiserror::Error;

use crate::benchmarks2d::BenchmarkError;
use crate::conditional::ConditionalError;
use crate::darcy::DarcyError;
use crate::grf::GrfError;
use crate::measures::MeasureError;
use crate::metrics::MetricsError;
use crate::monge::MongeError;
use crate::pcn::PcnError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Conditional(#[from] ConditionalError),
    #[error(transparent)]
    Darcy(#[from] DarcyError),
    #[error(transparent)]
    Grf(#[from] GrfError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Monge(#[from] MongeError),
    #[error(transparent)]
    Pcn(#[from] PcnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_)
            | Self::Monge(MongeError::Config(_))
            | Self::Pcn(PcnError::Config(_))
            | Self::Benchmark(BenchmarkError::UnknownFamily(_))
            | Self::Benchmark(BenchmarkError::Parameter(_)) => 1,
            _ => 2,
        }
    }
}

//! Deterministic smart-home simulation on top of `homectx-core`: virtual
//! devices, scripted scenarios and the reasoner benchmark.

pub mod bench;
pub mod devices;
pub mod scenario;

use std::path::PathBuf;

use thiserror::Error;

use homectx_core::cbr::CbrError;
use homectx_core::kernel::KernelError;
use homectx_core::services::ServiceError;
use homectx_core::store::StoreError;
use homectx_core::task::TaskError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("bench: {0}")]
    Bench(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Cbr(#[from] CbrError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

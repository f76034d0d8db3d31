//! Context-driven, task-oriented home middleware kernel.

pub mod bus;
pub mod cbr;
pub mod clock;
pub mod eca;
pub mod event;
pub mod kernel;
pub mod scheduler;
pub mod services;
pub mod snapshot;
pub mod store;
pub mod task;
pub mod value;
pub mod zone;

use std::io;

use thiserror::Error;

use crate::retention::ConfigError;

#[derive(Debug, Error)]
pub enum SpawnError {
    #[error("failed to create a worker thread: {0}")]
    Os(#[from] io::Error),
    #[error("runtime is shut down")]
    ShutDown,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum JoinError {
    #[error("thread is detached")]
    Detached,
    #[error("thread was already joined")]
    AlreadyJoined,
    #[error("a thread cannot join itself")]
    Deadlock,
    #[error("thread panicked")]
    Poisoned,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DetachError {
    #[error("thread was already joined")]
    AlreadyJoined,
    #[error("thread is already detached")]
    AlreadyDetached,
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("failed to start the maintenance thread: {0}")]
    Io(#[from] io::Error),
}

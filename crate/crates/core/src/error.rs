use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpawnError {
    #[error("no conflict-guaranteed pair found after {retries} attempts; check airspace geometry")]
    Exhausted { retries: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NeuralError {
    #[error("backward already ran on this tape; record a new forward pass")]
    TapeConsumed,
    #[error("backward root must be a 1x1 scalar, got {0}x{1}")]
    NonScalarRoot(usize, usize),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("architecture mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spawn(#[from] SpawnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spawn(#[from] SpawnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

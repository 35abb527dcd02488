use alloc::string::String;

/// Errors raised by validation and by the inference routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("episode {episode}: {reason}")]
    InvalidEpisode { episode: String, reason: String },
    #[error("person {person}: episodes {first} and {second} overlap")]
    OverlappingEpisodes { person: String, first: String, second: String },
    #[error("invalid augmentation for episode {episode}: {reason}")]
    InvalidAugmentation { episode: String, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time {time} lies outside (0, {end}]")]
    TimeOutOfRange { time: f64, end: f64 },
    #[error("need at least {needed} {what}, found {found}")]
    Insufficient { what: &'static str, needed: usize, found: usize },
    #[error("estimate {index} has non-positive or non-finite variance {variance}")]
    InvalidVariance { index: usize, variance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;

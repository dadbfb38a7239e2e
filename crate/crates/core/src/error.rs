use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("cell {index} holds {available}, cannot move {requested}")]
    InsufficientMass {
        index: usize,
        available: u64,
        requested: u64,
    },

    #[error("high index {high} must be greater than low index {low} and low must be >= 1")]
    BadIndices { high: usize, low: usize },

    #[error("arithmetic overflow while moving mass from cell {high} to cell {low}")]
    Overflow { high: usize, low: usize },

    #[error("block exponent {0} outside 1..={max}", max = crate::CAP)]
    BadExponent(u32),

    #[error("block is {actual} bytes, expected {expected}")]
    BadBlockLength { expected: usize, actual: usize },

    #[error("key covers {key_len} bytes but input has {input_len}")]
    KeyFileMismatch { key_len: u64, input_len: u64 },

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("unknown format: {0}")]
    UnknownFormat(String),

    #[error("truncated input at byte offset {offset}: need {needed} more byte(s)")]
    Truncated { offset: usize, needed: usize },

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{adapter} does not support decryption")]
    Unsupported { adapter: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

//! Configuration, dataset ingestion and the commands behind the `fedchain`
//! binary.

pub mod commands;
pub mod config;
pub mod idx;
pub mod synth;

use std::path::Path;

use fedchain::ckks::CkksError;
use fedchain::contracts::script::ScriptError;
use fedchain::flcore::FlError;
use fedchain::simnet::SimError;
use thiserror::Error;

pub use commands::{cmd_auction_demo, cmd_bench_ckks, cmd_gas_report, cmd_run, output_dir, BenchReport, RunOutputs};
pub use config::{load_config, parse_config, DatasetSource, Precision, RunConfig};
pub use idx::{parse_idx, read_idx_file, write_idx, IdxArray, IdxHeader};
pub use synth::{gen_synthetic, SyntheticSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("{0}")]
    Invalid(String),
    #[error("scenario {0}")]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Ckks(#[from] CkksError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

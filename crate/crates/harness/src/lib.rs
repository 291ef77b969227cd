//! Campaign orchestration for boundary search: configuration, SUT training,
//! search and baseline campaigns, and their evaluation.

pub mod campaign;
pub mod config;
pub mod evaluate;
pub mod records;
pub mod train;

pub use campaign::{in_pool, open_sut, run_campaign, CampaignReport, RunOptions};
pub use config::{CampaignConfig, Loaded};
pub use evaluate::{evaluate, usage_report_cmd, Summary};
pub use records::Mode;
pub use train::{train_sut, TrainReport};

use bsearch_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SUT: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Io(_) | Error::Json(_) => EXIT_DATA,
        Error::Transport(_) | Error::TrainingQuality { .. } => EXIT_SUT,
        _ => 1,
    }
}

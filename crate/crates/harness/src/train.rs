//! `train-sut`: fits the built-in classifier and writes its weights.

use std::path::PathBuf;

use bsearch_core::sut::train_network;
use bsearch_core::{Error, Execution, Generator, Result};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, Loaded};
use crate::records::{write_atomic, write_json};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub holdout_accuracy: f64,
    pub train_accuracy: f64,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub min_accuracy: f64,
    pub passed: bool,
    pub seed: u64,
    pub weights: Option<PathBuf>,
    pub weights_sha256: Option<String>,
    pub config_hash: String,
}

/// Report file written next to the weights.
pub fn report_path(loaded: &Loaded) -> PathBuf {
    loaded.weights_path().with_extension("report.json")
}

/// Trains, writes the report, and writes the weights only when the holdout
/// accuracy clears the configured floor.
pub fn train_sut(loaded: &Loaded, execution: Execution) -> Result<TrainReport> {
    let cfg = &loaded.config;
    let tc = cfg.train_config();
    let generator = Generator::new(cfg.generator_spec())?;
    let outcome = train_network(&generator, &tc, execution)?;
    let passed = outcome.holdout_accuracy >= tc.min_accuracy;
    let mut report = TrainReport {
        holdout_accuracy: outcome.holdout_accuracy,
        train_accuracy: outcome.train_accuracy,
        train_samples: outcome.train_samples,
        holdout_samples: outcome.holdout_samples,
        min_accuracy: tc.min_accuracy,
        passed,
        seed: tc.seed,
        weights: None,
        weights_sha256: None,
        config_hash: cfg.hash(),
    };
    if passed {
        let path = loaded.weights_path();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let bytes = outcome.weights.to_bytes();
        write_atomic(&path, &bytes)?;
        report.weights_sha256 = Some(hex(&Sha256::digest(&bytes)));
        report.weights = Some(cfg.weights.clone());
    }
    write_json(&report_path(loaded), &report)?;
    info!(
        "holdout accuracy {:.4} (train {:.4}) on {} samples",
        report.holdout_accuracy, report.train_accuracy, report.holdout_samples
    );
    if !passed {
        return Err(Error::TrainingQuality {
            accuracy: report.holdout_accuracy,
            threshold: tc.min_accuracy,
        });
    }
    Ok(report)
}

//! On-disk records of one campaign cell.

use std::fs;
use std::path::{Path, PathBuf};

use bsearch_core::search::{FrontMember, RetargetEvent, SearchOutcome};
use bsearch_core::{interpolate, ClassLabel, Error, Generator, Genome, Image, ProbVector, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, CampaignConfig};

pub const CANDIDATE_FILE: &str = "candidate.json";
pub const META_FILE: &str = "meta.json";
pub const TRACE_FILE: &str = "trace.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Search,
    Baseline,
}

impl Mode {
    pub fn dir_name(self) -> &'static str {
        match self {
            Mode::Search => "search",
            Mode::Baseline => "baseline",
        }
    }
}

pub fn cell_dir(out: &Path, mode: Mode, class: ClassLabel, repetition: usize) -> PathBuf {
    out.join(mode.dir_name())
        .join(format!("class_{}", class.index()))
        .join(format!("rep_{repetition}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub origin: ClassLabel,
    pub target: ClassLabel,
    pub source_seed_id: u64,
    pub target_seed_id: u64,
    pub genome: Genome,
    pub probs: ProbVector,
    pub source_probs: ProbVector,
    pub dcb: f64,
    pub sparsity: f64,
    pub m1: f64,
    /// SHA-256 of the candidate image's little-endian f64 pixels.
    pub image_sha256: String,
    pub front: Vec<FrontMember>,
}

impl CandidateRecord {
    pub fn from_outcome(o: &SearchOutcome) -> Self {
        let c = &o.candidate;
        CandidateRecord {
            origin: c.origin,
            target: c.target,
            source_seed_id: c.source_seed.seed_id,
            target_seed_id: c.target_seed.seed_id,
            genome: c.genome.clone(),
            probs: c.probs.clone(),
            source_probs: o.source_probs.clone(),
            dcb: c.dcb,
            sparsity: c.sparsity,
            m1: c.m1,
            image_sha256: image_digest(&c.image),
            front: o.front.clone(),
        }
    }

    pub fn source_image(&self, gen: &Generator) -> Result<Image> {
        gen.synthesize(&gen.seed_from_id(self.origin, self.source_seed_id)?.latent)
    }

    pub fn target_image(&self, gen: &Generator) -> Result<Image> {
        gen.synthesize(&gen.seed_from_id(self.target, self.target_seed_id)?.latent)
    }

    /// Rebuilds the candidate image from seed ids and genome alone.
    pub fn candidate_image(&self, gen: &Generator) -> Result<Image> {
        let source = gen.seed_from_id(self.origin, self.source_seed_id)?;
        let target = gen.seed_from_id(self.target, self.target_seed_id)?;
        gen.synthesize(&interpolate(&source.latent, &target.latent, &self.genome)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub mode: Mode,
    pub class: ClassLabel,
    pub repetition: usize,
    pub status: Status,
    pub error: Option<String>,
    /// Predictions charged to the cell's budget.
    pub predictions_used: u64,
    /// Images the SUT was actually asked to classify.
    pub sut_calls: u64,
    pub budget: u64,
    pub generations: usize,
    pub retargets: Vec<RetargetEvent>,
    pub target: Option<ClassLabel>,
    pub source_seed_id: Option<u64>,
    pub target_seed_id: Option<u64>,
    pub version: String,
    pub config_hash: String,
    pub config: CampaignConfig,
    pub elapsed_ms: u128,
}

pub fn image_digest(image: &Image) -> String {
    hex(&Sha256::digest(image.to_le_bytes()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline, written through a temporary file so a
/// crash never leaves a truncated record behind.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

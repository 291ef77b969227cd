//! Targeted decision-boundary search for probabilistic classifiers.
//!
//! A search run picks a seed latent of an origin class, targets the class the
//! classifier ranks second, and evolves per-layer interpolation weights between
//! the two seeds until the classifier's confidences for both classes balance.

pub mod error;
pub mod generator;
pub mod latent;
pub mod metrics;
pub mod optimizer;
pub mod par;
pub mod raster;
pub mod search;
pub mod sut;

pub use error::{Error, Result};
pub use generator::{Generator, GeneratorSpec, LatentSeed, LayerBand};
pub use latent::{genome_distance, interpolate, random_genome, ClassLabel, Genome, LayeredLatent};
pub use par::Execution;
pub use raster::Image;
pub use sut::{Classifier, PredictionBudget, ProbVector, Top2};

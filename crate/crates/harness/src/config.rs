//! Campaign configuration: one flat JSON document.

use std::path::{Path, PathBuf};

use bsearch_core::generator::LayerBand;
use bsearch_core::optimizer::VariationRates;
use bsearch_core::search::SearchConfig;
use bsearch_core::sut::TrainConfig;
use bsearch_core::{ClassLabel, Error, Execution, GeneratorSpec, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    // generator
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub layers: usize,
    pub dims: usize,
    pub noise_dims: usize,
    pub generator_seed: u64,

    // SUT: built-in weights, or an external adapter when `sut_command` is set
    pub weights: PathBuf,
    pub sut_command: Option<Vec<String>>,
    pub sut_connections: usize,

    // built-in SUT training
    pub train_samples_per_class: usize,
    pub train_epochs: usize,
    pub train_learning_rate: f64,
    pub train_momentum: f64,
    pub train_batch_size: usize,
    pub train_hidden: usize,
    pub train_holdout_fraction: f64,
    pub train_seed: u64,
    pub train_min_accuracy: f64,

    // search
    /// Origin classes to test; all classes when absent.
    pub origin_classes: Option<Vec<usize>>,
    pub repetitions: usize,
    pub budget: u64,
    pub population: usize,
    pub max_seed_retries: usize,
    pub retarget_patience: usize,
    pub seed: u64,
    pub band: Option<LayerBand>,
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    pub mutation_prob: Option<f64>,
    pub mutation_eta: f64,

    // evaluation
    pub usage_bins: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let g = GeneratorSpec::default();
        let t = TrainConfig::default();
        let s = SearchConfig::default();
        CampaignConfig {
            classes: g.classes,
            height: g.height,
            width: g.width,
            channels: g.channels,
            layers: g.layers,
            dims: g.dims,
            noise_dims: g.noise_dims,
            generator_seed: g.master_seed,
            weights: PathBuf::from("sut.bsw"),
            sut_command: None,
            sut_connections: 1,
            train_samples_per_class: t.samples_per_class,
            train_epochs: t.epochs,
            train_learning_rate: t.learning_rate,
            train_momentum: t.momentum,
            train_batch_size: t.batch_size,
            train_hidden: t.hidden,
            train_holdout_fraction: t.holdout_fraction,
            train_seed: t.seed,
            train_min_accuracy: t.min_accuracy,
            origin_classes: None,
            repetitions: s.candidates_per_class,
            budget: s.budget,
            population: s.population,
            max_seed_retries: s.max_seed_retries,
            retarget_patience: s.retarget_patience,
            seed: s.seed,
            band: s.band,
            crossover_prob: s.variation.crossover_prob,
            crossover_eta: s.variation.crossover_eta,
            mutation_prob: s.variation.mutation_prob,
            mutation_eta: s.variation.mutation_eta,
            usage_bins: bsearch_core::metrics::DEFAULT_USAGE_BINS,
        }
    }
}

/// A parsed configuration and the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: CampaignConfig,
    pub base: PathBuf,
}

impl Loaded {
    /// Reads `path`, or the defaults relative to the working directory.
    pub fn from_path(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            let config = CampaignConfig::default();
            config.validate()?;
            return Ok(Loaded { config, base: PathBuf::from(".") });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = CampaignConfig::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base })
    }

    pub fn weights_path(&self) -> PathBuf {
        self.base.join(&self.config.weights)
    }
}

impl CampaignConfig {
    /// Parses and validates. Syntax errors carry serde's line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let config: CampaignConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator_spec().validate()?;
        self.train_config().validate()?;
        self.search_config(Execution::default()).validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if self.sut_connections == 0 {
            return Err(Error::Config("sut_connections must be positive".into()));
        }
        if self.usage_bins == 0 {
            return Err(Error::Config("usage_bins must be positive".into()));
        }
        if self.sut_command.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(Error::Config("sut_command is empty".into()));
        }
        if let Some(origins) = &self.origin_classes {
            if origins.is_empty() {
                return Err(Error::Config("origin_classes is empty".into()));
            }
            for &c in origins {
                ClassLabel::checked(c, self.classes)
                    .map_err(|_| Error::Config(format!("origin class {c} out of range")))?;
            }
        }
        Ok(())
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            classes: self.classes,
            height: self.height,
            width: self.width,
            channels: self.channels,
            layers: self.layers,
            dims: self.dims,
            noise_dims: self.noise_dims,
            master_seed: self.generator_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            samples_per_class: self.train_samples_per_class,
            epochs: self.train_epochs,
            learning_rate: self.train_learning_rate,
            momentum: self.train_momentum,
            batch_size: self.train_batch_size,
            hidden: self.train_hidden,
            holdout_fraction: self.train_holdout_fraction,
            seed: self.train_seed,
            min_accuracy: self.train_min_accuracy,
        }
    }

    pub fn search_config(&self, execution: Execution) -> SearchConfig {
        SearchConfig {
            budget: self.budget,
            candidates_per_class: self.repetitions,
            population: self.population,
            max_seed_retries: self.max_seed_retries,
            retarget_patience: self.retarget_patience,
            seed: self.seed,
            band: self.band,
            variation: VariationRates {
                crossover_prob: self.crossover_prob,
                crossover_eta: self.crossover_eta,
                mutation_prob: self.mutation_prob,
                mutation_eta: self.mutation_eta,
            },
            trace: false,
            execution,
        }
    }

    pub fn origins(&self) -> Vec<ClassLabel> {
        match &self.origin_classes {
            Some(list) => list.iter().copied().map(ClassLabel).collect(),
            None => (0..self.classes).map(ClassLabel).collect(),
        }
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(CampaignConfig::parse("{}").unwrap(), CampaignConfig::default());
    }

    #[test]
    fn unknown_field_is_named() {
        let err = CampaignConfig::parse("{\n  \"budgett\": 5\n}").unwrap_err().to_string();
        assert!(err.contains("budgett"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn syntax_error_has_a_position() {
        let err = CampaignConfig::parse("{\"budget\": 10,,}").unwrap_err().to_string();
        assert!(err.contains("line 1 column"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for doc in [
            r#"{"repetitions": 0}"#,
            r#"{"budget": 3, "population": 10}"#,
            r#"{"classes": 1}"#,
            r#"{"origin_classes": [7]}"#,
            r#"{"crossover_prob": 1.5}"#,
            r#"{"sut_command": []}"#,
        ] {
            assert!(matches!(CampaignConfig::parse(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn conversions_round_trip_the_defaults() {
        let c = CampaignConfig::default();
        assert_eq!(c.generator_spec(), GeneratorSpec::default());
        assert_eq!(c.train_config(), TrainConfig::default());
        assert_eq!(c.search_config(Execution::default()), SearchConfig::default());
        assert_eq!(c.origins().len(), c.classes);
    }

    #[test]
    fn hash_tracks_content() {
        let a = CampaignConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}

//! Targeted boundary search: seed acquisition, targeting, the two search
//! objectives, retargeting and the search loop itself.

mod run;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{band_layers, Generator, LatentSeed, LayerBand};
use crate::latent::{genome_distance, ClassLabel, Genome};
use crate::optimizer::VariationRates;
use crate::par::Execution;
use crate::sut::{predict, Classifier, PredictionBudget, ProbVector, DEFAULT_BUDGET};

pub use run::{
    random_baseline, BoundaryCandidate, FrontMember, RetargetEvent, Search, SearchOutcome, TraceRow,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// SUT predictions per candidate, seed acquisition included.
    pub budget: u64,
    pub candidates_per_class: usize,
    pub population: usize,
    pub max_seed_retries: usize,
    /// Generations the runner-up must persist before the target switches.
    pub retarget_patience: usize,
    pub seed: u64,
    /// Restrict the search to one layer band; other genes stay at 1.
    pub band: Option<LayerBand>,
    pub variation: VariationRates,
    /// Record every evaluation in the outcome's trace.
    pub trace: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: DEFAULT_BUDGET,
            candidates_per_class: 10,
            population: 25,
            max_seed_retries: 50,
            retarget_patience: 10,
            seed: 2024,
            band: None,
            variation: VariationRates::default(),
            trace: false,
            execution: Execution::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("budget", self.budget as usize),
            ("candidates_per_class", self.candidates_per_class),
            ("population", self.population),
            ("max_seed_retries", self.max_seed_retries),
            ("retarget_patience", self.retarget_patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.budget < self.population as u64 {
            return Err(Error::Config(format!(
                "budget {} is smaller than the population {}",
                self.budget, self.population
            )));
        }
        let v = &self.variation;
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(v.crossover_prob) || !v.mutation_prob.is_none_or(prob_ok) {
            return Err(Error::Config("variation probabilities must lie in [0, 1]".into()));
        }
        if !(v.crossover_eta >= 0.0 && v.mutation_eta >= 0.0) {
            return Err(Error::Config("distribution indices must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Classes the search balances the origin against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSet(Vec<ClassLabel>);

impl TargetSet {
    pub fn new(origin: ClassLabel, targets: Vec<ClassLabel>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::domain("empty target set"));
        }
        if targets.contains(&origin) {
            return Err(Error::domain("the origin cannot be a target"));
        }
        Ok(TargetSet(targets))
    }

    pub fn single(origin: ClassLabel, target: ClassLabel) -> Result<Self> {
        TargetSet::new(origin, vec![target])
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.0
    }
}

/// Confidence imbalance between the origin and the targets; 0 when balanced.
/// A zero denominator (no mass on any involved class) scores the worst value 1.
pub fn objective_dcb(probs: &ProbVector, origin: ClassLabel, targets: &TargetSet) -> f64 {
    let y1 = probs.get(origin);
    let ys: Vec<f64> = targets.0.iter().map(|&c| probs.get(c)).collect();
    let denom = targets.0.len() as f64 * (y1 + ys.iter().sum::<f64>());
    if denom <= 0.0 {
        return 1.0;
    }
    ys.iter().map(|y| (y1 - y).abs()).sum::<f64>() / denom
}

/// One minus the normalized distance to the nearest archived genome; 0 for
/// an empty archive.
pub fn objective_sparsity(genome: &Genome, archive: &[Genome]) -> Result<f64> {
    let mut nearest = f64::INFINITY;
    for a in archive {
        nearest = nearest.min(genome_distance(genome, a)?);
    }
    Ok(if nearest.is_finite() { 1.0 - nearest } else { 0.0 })
}

/// Most probable class other than the origin; ties go to the lower index.
/// When the origin is the top class this is the runner-up of `top2`.
pub fn select_target(probs: &ProbVector, origin: ClassLabel) -> Result<ClassLabel> {
    let mut best: Option<usize> = None;
    for (c, &p) in probs.probs().iter().enumerate() {
        if c != origin.index() && best.is_none_or(|b| p > probs.probs()[b]) {
            best = Some(c);
        }
    }
    best.map(ClassLabel)
        .ok_or_else(|| Error::domain("targeting needs at least two classes"))
}

/// Samples seeds of `label` until the SUT agrees with the label, charging one
/// prediction per attempt.
pub fn acquire_seed<C: Classifier + ?Sized, R: Rng + ?Sized>(
    label: ClassLabel,
    sut: &C,
    generator: &Generator,
    budget: &PredictionBudget,
    retries: usize,
    rng: &mut R,
) -> Result<(LatentSeed, ProbVector)> {
    for _ in 0..retries {
        let seed = generator.sample_seed(label, rng)?;
        let image = generator.synthesize(&seed.latent)?;
        let probs = predict(sut, std::slice::from_ref(&image), budget)?
            .pop()
            .expect("one prediction per image");
        if probs.argmax() == label {
            return Ok((seed, probs));
        }
    }
    Err(Error::SeedAcquisition {
        class: label.index(),
        attempts: retries,
    })
}

/// Counts consecutive generations in which the incumbent's strongest
/// non-origin class beats the current target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetargetState {
    pub target: ClassLabel,
    pub patience: usize,
    pub streak: usize,
}

impl RetargetState {
    pub fn new(target: ClassLabel, patience: usize) -> Self {
        RetargetState {
            target,
            patience,
            streak: 0,
        }
    }

    /// Feeds the best individual's prediction for one generation. Returns the
    /// class to switch to once the streak reaches the patience.
    pub fn observe(&mut self, best: &ProbVector, origin: ClassLabel) -> Result<Option<ClassLabel>> {
        let runner_up = select_target(best, origin)?;
        if runner_up != self.target && best.get(runner_up) > best.get(self.target) {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= self.patience {
            self.streak = 0;
            return Ok(Some(runner_up));
        }
        Ok(None)
    }

    pub fn switch(&mut self, target: ClassLabel) {
        self.target = target;
        self.streak = 0;
    }
}

/// Genes the search may change; everything outside `band` is frozen.
pub fn active_genes(layers: usize, band: Option<LayerBand>) -> Vec<bool> {
    match band {
        None => vec![true; layers],
        Some(b) => {
            let range = band_layers(layers, b);
            (0..layers).map(|n| range.contains(&n)).collect()
        }
    }
}

/// Seed of an independent random stream for one (class, repetition) cell.
pub fn cell_seed(master: u64, class: usize, repetition: usize, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    [class as u64, repetition as u64, stream]
        .into_iter()
        .fold(mix(master), |acc, v| mix(acc ^ mix(v)))
}

/// Runs `cfg.candidates_per_class` independent searches for `origin`.
pub fn find_boundary<C: Classifier + ?Sized>(
    origin: ClassLabel,
    sut: &C,
    generator: &Generator,
    cfg: &SearchConfig,
) -> Result<Vec<Result<SearchOutcome>>> {
    let search = Search::new(sut, generator, cfg)?;
    Ok((0..cfg.candidates_per_class)
        .map(|rep| search.run(origin, rep))
        .collect())
}

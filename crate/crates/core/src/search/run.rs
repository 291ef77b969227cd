use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    acquire_seed, active_genes, cell_seed, objective_dcb, objective_sparsity, select_target, RetargetState,
    SearchConfig, TargetSet,
};
use crate::error::{Error, Result};
use crate::generator::{Generator, LatentSeed};
use crate::latent::{interpolate, random_genome, ClassLabel, Genome, LayeredLatent};
use crate::metrics::{boundary_distance, BoundaryVector};
use crate::optimizer::{Individual, Population};
use crate::raster::Image;
use crate::sut::{classify_checked, Classifier, PredictionBudget, ProbVector};

const ACQUISITION_STREAM: u64 = 0;
const OPTIMIZER_STREAM: u64 = 1;

/// The best boundary input of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCandidate {
    pub origin: ClassLabel,
    pub target: ClassLabel,
    pub source_seed: LatentSeed,
    pub target_seed: LatentSeed,
    pub genome: Genome,
    pub image: Image,
    pub probs: ProbVector,
    pub dcb: f64,
    pub sparsity: f64,
    /// Distance of `probs` to the ideal origin/target boundary vector.
    pub m1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub genome: Genome,
    pub probs: ProbVector,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetEvent {
    pub generation: usize,
    pub from: ClassLabel,
    pub to: ClassLabel,
    pub seed_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub eval_id: u64,
    pub genome: Genome,
    pub objectives: Vec<f64>,
    /// Front index within the merged parent + offspring population.
    pub front_rank: usize,
    pub target: ClassLabel,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub candidate: BoundaryCandidate,
    /// Prediction for the unmodified source seed.
    pub source_probs: ProbVector,
    /// First non-dominated front of the final population.
    pub front: Vec<FrontMember>,
    pub predictions_used: u64,
    /// Generations after the initial population (baseline: random batches).
    pub generations: usize,
    pub retargets: Vec<RetargetEvent>,
    /// Lowest `dcb` in the population after each generation, starting with
    /// the initial population.
    pub best_dcb: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub elapsed_ms: u128,
}

/// Search context shared by every run of one campaign.
pub struct Search<'a, C: ?Sized> {
    sut: &'a C,
    generator: &'a Generator,
    cfg: &'a SearchConfig,
}

/// Seeds and prediction accounting of one cell.
struct Cell<'a, C: ?Sized> {
    sut: &'a C,
    generator: &'a Generator,
    cfg: &'a SearchConfig,
    budget: PredictionBudget,
    origin: ClassLabel,
    source: LatentSeed,
    source_probs: ProbVector,
    target: ClassLabel,
    target_seed: LatentSeed,
    acquisition: ChaCha8Rng,
    optimizer: ChaCha8Rng,
}

impl<'a, C: Classifier + ?Sized> Cell<'a, C> {
    fn open(search: &Search<'a, C>, origin: ClassLabel, repetition: usize) -> Result<Self> {
        let cfg = search.cfg;
        let classes = search.generator.spec().classes;
        ClassLabel::checked(origin.index(), classes)?;
        let budget = PredictionBudget::new(cfg.budget);
        let mut acquisition = ChaCha8Rng::seed_from_u64(cell_seed(cfg.seed, origin.index(), repetition, ACQUISITION_STREAM));
        let optimizer = ChaCha8Rng::seed_from_u64(cell_seed(cfg.seed, origin.index(), repetition, OPTIMIZER_STREAM));
        let (source, source_probs) =
            acquire_seed(origin, search.sut, search.generator, &budget, cfg.max_seed_retries, &mut acquisition)?;
        let target = select_target(&source_probs, origin)?;
        let (target_seed, _) =
            acquire_seed(target, search.sut, search.generator, &budget, cfg.max_seed_retries, &mut acquisition)?;
        Ok(Cell {
            sut: search.sut,
            generator: search.generator,
            cfg,
            budget,
            origin,
            source,
            source_probs,
            target,
            target_seed,
            acquisition,
            optimizer,
        })
    }

    fn latent(&self, genome: &Genome) -> Result<LayeredLatent> {
        interpolate(&self.source.latent, &self.target_seed.latent, genome)
    }

    fn render(&self, genome: &Genome) -> Result<Image> {
        self.generator.synthesize(&self.latent(genome)?)
    }

    /// Reserves predictions for as many genomes as the budget allows, then
    /// classifies them. Returns the evaluated prefix.
    fn evaluate(&self, mut genomes: Vec<Genome>) -> Result<(Vec<Genome>, Vec<ProbVector>)> {
        let granted = self.budget.reserve_up_to(genomes.len() as u64) as usize;
        genomes.truncate(granted);
        let images: Vec<Image> = self
            .cfg
            .execution
            .map(&genomes, |g| self.render(g))
            .into_iter()
            .collect::<Result<_>>()?;
        let probs = classify_checked(self.sut, &images)?;
        Ok((genomes, probs))
    }

    fn targets(&self) -> Result<TargetSet> {
        TargetSet::single(self.origin, self.target)
    }

    fn random_genomes(&mut self, count: usize, active: &[bool]) -> Result<Vec<Genome>> {
        let layers = self.generator.spec().layers;
        (0..count)
            .map(|_| {
                let g = random_genome(&mut self.optimizer, layers)?;
                let w = g
                    .weights()
                    .iter()
                    .zip(active)
                    .map(|(&w, &on)| if on { w } else { 1.0 })
                    .collect();
                Genome::new(w)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        best: &Individual<ProbVector>,
        front: Vec<FrontMember>,
        generations: usize,
        retargets: Vec<RetargetEvent>,
        best_dcb: Vec<f64>,
        trace: Vec<TraceRow>,
        started: Instant,
    ) -> Result<SearchOutcome> {
        let classes = self.generator.spec().classes;
        let m1 = boundary_distance(&best.payload, &BoundaryVector::pair(classes, self.origin, self.target)?)?;
        let image = self.render(&best.genome)?;
        Ok(SearchOutcome {
            candidate: BoundaryCandidate {
                origin: self.origin,
                target: self.target,
                genome: best.genome.clone(),
                image,
                probs: best.payload.clone(),
                dcb: best.objectives[0],
                sparsity: best.objectives[1],
                m1,
                source_seed: self.source,
                target_seed: self.target_seed,
            },
            source_probs: self.source_probs,
            front,
            predictions_used: self.budget.used(),
            generations,
            retargets,
            best_dcb,
            trace,
            elapsed_ms: started.elapsed().as_millis(),
        })
    }
}

fn best_by_dcb<P>(members: &[Individual<P>]) -> &Individual<P> {
    let mut best = &members[0];
    for m in &members[1..] {
        if m.objectives[0] < best.objectives[0] {
            best = m;
        }
    }
    best
}

impl<'a, C: Classifier + ?Sized> Search<'a, C> {
    pub fn new(sut: &'a C, generator: &'a Generator, cfg: &'a SearchConfig) -> Result<Self> {
        cfg.validate()?;
        sut.info().check_compatible(generator.spec())?;
        Ok(Search { sut, generator, cfg })
    }

    pub fn config(&self) -> &SearchConfig {
        self.cfg
    }

    /// One guided search for `origin`; `repetition` selects the random streams.
    pub fn run(&self, origin: ClassLabel, repetition: usize) -> Result<SearchOutcome> {
        self.run_with(origin, repetition, &[])
    }

    /// As [`Search::run`], with `initial` genomes placed at the front of the
    /// initial population.
    pub fn run_with(&self, origin: ClassLabel, repetition: usize, initial: &[Genome]) -> Result<SearchOutcome> {
        let started = Instant::now();
        let cfg = self.cfg;
        let mut cell = Cell::open(self, origin, repetition)?;
        let layers = self.generator.spec().layers;
        let active = active_genes(layers, cfg.band);
        let n = cfg.population;

        let mut genomes: Vec<Genome> = initial.iter().take(n).cloned().collect();
        if let Some(bad) = genomes.iter().find(|g| g.len() != layers) {
            return Err(Error::dim(format!("injected genome of length {}, expected {layers}", bad.len())));
        }
        let fill = n - genomes.len();
        genomes.extend(cell.random_genomes(fill, &active)?);
        let (genomes, probs) = cell.evaluate(genomes)?;
        if genomes.is_empty() {
            return Err(Error::BudgetExhausted {
                used: cell.budget.used(),
                limit: cell.budget.limit(),
                requested: n as u64,
            });
        }

        let mut next_id = 0u64;
        let mut trace = Vec::new();
        let mut pop: Population<ProbVector> = Population::new(n);
        let targets = cell.targets()?;
        for (g, p) in genomes.into_iter().zip(probs) {
            let objectives = vec![objective_dcb(&p, origin, &targets), 0.0];
            pop.members.push(Individual::new(g, objectives, next_id, p));
            next_id += 1;
        }
        if cfg.trace {
            record(&mut trace, &pop, 0, 0, cell.target);
        }
        pop.survive();
        let mut best_dcb = vec![best_by_dcb(&pop.members).objectives[0]];

        let mut retarget = RetargetState::new(cell.target, cfg.retarget_patience);
        let mut retargets = Vec::new();
        let mut generation = 0;
        while cell.budget.remaining() > 0 {
            generation += 1;
            let archive: Vec<Genome> = pop.members.iter().map(|m| m.genome.clone()).collect();
            let kids = pop.offspring(n, &cfg.variation, &active, &mut cell.optimizer);
            let (kids, probs) = cell.evaluate(kids)?;
            let targets = cell.targets()?;
            let first_new = pop.members.len();
            for (g, p) in kids.into_iter().zip(probs) {
                let objectives = vec![objective_dcb(&p, origin, &targets), objective_sparsity(&g, &archive)?];
                pop.members.push(Individual::new(g, objectives, next_id, p));
                next_id += 1;
            }
            if cfg.trace {
                record(&mut trace, &pop, first_new, generation, cell.target);
            }
            pop.survive();

            let best = best_by_dcb(&pop.members).payload.clone();
            if let Some(to) = retarget.observe(&best, origin)? {
                match self.retarget(&mut cell, &mut pop, to)? {
                    Some(seed_id) => {
                        retargets.push(RetargetEvent {
                            generation,
                            from: retarget.target,
                            to,
                            seed_id,
                        });
                        retarget.switch(to);
                    }
                    None => retarget.streak = 0,
                }
            }
            best_dcb.push(best_by_dcb(&pop.members).objectives[0]);
        }

        let best = best_by_dcb(&pop.members).clone();
        let front = pop
            .first_front()
            .into_iter()
            .map(|m| FrontMember {
                genome: m.genome.clone(),
                probs: m.payload.clone(),
                objectives: m.objectives.clone(),
            })
            .collect();
        cell.finish(&best, front, generation, retargets, best_dcb, trace, started)
    }

    /// Switches the cell to target `to` and re-scores the population against
    /// it, keeping every genome. Returns the new target seed's id, or `None`
    /// when the switch was skipped.
    fn retarget(
        &self,
        cell: &mut Cell<'a, C>,
        pop: &mut Population<ProbVector>,
        to: ClassLabel,
    ) -> Result<Option<u64>> {
        let needed = (self.cfg.max_seed_retries + pop.members.len()) as u64;
        if cell.budget.remaining() < needed {
            log::info!("skipping retarget to class {to}: {} predictions left", cell.budget.remaining());
            return Ok(None);
        }
        let (seed, _) = match acquire_seed(
            to,
            self.sut,
            self.generator,
            &cell.budget,
            self.cfg.max_seed_retries,
            &mut cell.acquisition,
        ) {
            Ok(found) => found,
            Err(Error::SeedAcquisition { .. }) => {
                log::warn!("no seed of class {to} accepted; keeping target {}", cell.target);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let seed_id = seed.seed_id;
        cell.target = to;
        cell.target_seed = seed;
        let genomes: Vec<Genome> = pop.members.iter().map(|m| m.genome.clone()).collect();
        let ids = |pop: &Population<ProbVector>| {
            let mut v: Vec<u64> = pop.members.iter().map(|m| m.eval_id).collect();
            v.sort_unstable();
            v
        };
        let before = ids(pop);
        let (evaluated, probs) = cell.evaluate(genomes)?;
        debug_assert_eq!(evaluated.len(), pop.members.len());
        let targets = cell.targets()?;
        for (member, p) in pop.members.iter_mut().zip(probs) {
            member.objectives[0] = objective_dcb(&p, cell.origin, &targets);
            member.payload = p;
        }
        pop.survive();
        debug_assert_eq!(before, ids(pop), "retargeting must keep the population");
        Ok(Some(seed_id))
    }

    /// Random-search baseline on the same seeds as [`Search::run`]: random
    /// genomes in population-sized batches until the budget is spent, keeping
    /// the lowest `dcb`.
    pub fn baseline(&self, origin: ClassLabel, repetition: usize) -> Result<SearchOutcome> {
        let started = Instant::now();
        let cfg = self.cfg;
        let mut cell = Cell::open(self, origin, repetition)?;
        let active = active_genes(self.generator.spec().layers, cfg.band);
        let targets = cell.targets()?;
        let mut best: Option<Individual<ProbVector>> = None;
        let mut best_dcb = Vec::new();
        let mut trace = Vec::new();
        let mut batches = 0;
        let mut next_id = 0;
        while cell.budget.remaining() > 0 {
            let count = (cfg.population as u64).min(cell.budget.remaining()) as usize;
            let genomes = cell.random_genomes(count, &active)?;
            let (genomes, probs) = cell.evaluate(genomes)?;
            for (g, p) in genomes.into_iter().zip(probs) {
                let dcb = objective_dcb(&p, origin, &targets);
                if cfg.trace {
                    trace.push(TraceRow {
                        generation: batches,
                        eval_id: next_id,
                        genome: g.clone(),
                        objectives: vec![dcb, 0.0],
                        front_rank: 0,
                        target: cell.target,
                    });
                }
                if best.as_ref().is_none_or(|b| dcb < b.objectives[0]) {
                    best = Some(Individual::new(g, vec![dcb, 0.0], next_id, p));
                }
                next_id += 1;
            }
            batches += 1;
            if let Some(b) = &best {
                best_dcb.push(b.objectives[0]);
            }
        }
        let best = best.ok_or(Error::BudgetExhausted {
            used: cell.budget.used(),
            limit: cell.budget.limit(),
            requested: 1,
        })?;
        let front = vec![FrontMember {
            genome: best.genome.clone(),
            probs: best.payload.clone(),
            objectives: best.objectives.clone(),
        }];
        cell.finish(&best, front, batches, Vec::new(), best_dcb, trace, started)
    }
}

/// Baseline run for `origin` with the seeds of guided repetition `repetition`.
pub fn random_baseline<C: Classifier + ?Sized>(
    origin: ClassLabel,
    repetition: usize,
    sut: &C,
    generator: &Generator,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    Search::new(sut, generator, cfg)?.baseline(origin, repetition)
}

fn record(trace: &mut Vec<TraceRow>, pop: &Population<ProbVector>, from: usize, generation: usize, target: ClassLabel) {
    let ranks = pop.fronts().ranks(pop.members.len());
    for (m, &rank) in pop.members.iter().zip(&ranks).skip(from) {
        trace.push(TraceRow {
            generation,
            eval_id: m.eval_id,
            genome: m.genome.clone(),
            objectives: m.objectives.clone(),
            front_rank: rank,
            target,
        });
    }
}

//! Runs every (class, repetition) cell of a search or baseline campaign.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bsearch_core::search::{Search, SearchConfig, SearchOutcome};
use bsearch_core::sut::{BuiltinSut, CountingClassifier, ExternalSut, NetworkWeights, DEFAULT_HANDSHAKE_TIMEOUT};
use bsearch_core::{Classifier, ClassLabel, Error, Execution, Generator, Result};
use log::{info, warn};

use crate::config::Loaded;
use crate::records::{
    cell_dir, read_json, write_atomic, write_json, CandidateRecord, MetaRecord, Mode, Status, CANDIDATE_FILE,
    META_FILE, TRACE_FILE,
};

/// Opens the configured SUT: an external adapter when a command is given,
/// the built-in network otherwise.
pub fn open_sut(loaded: &Loaded, execution: Execution) -> Result<Box<dyn Classifier>> {
    let cfg = &loaded.config;
    if let Some(command) = &cfg.sut_command {
        return Ok(Box::new(ExternalSut::connect(
            command,
            cfg.sut_connections,
            DEFAULT_HANDSHAKE_TIMEOUT,
        )?));
    }
    let path = loaded.weights_path();
    if !path.is_file() {
        return Err(Error::Config(format!(
            "weights {} not found; run train-sut first",
            path.display()
        )));
    }
    let weights = NetworkWeights::load(&path)?;
    Ok(Box::new(BuiltinSut::new(weights, cfg.height, cfg.width)?.with_execution(execution)))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CampaignReport {
    pub completed: usize,
    pub failed: usize,
    pub skipped: usize,
}

enum CellResult {
    Completed,
    Failed,
    Skipped,
}

struct Context<'a> {
    loaded: &'a Loaded,
    hash: String,
    sut: &'a dyn Classifier,
    generator: Generator,
    search: SearchConfig,
    mode: Mode,
    out: &'a Path,
}

pub fn run_campaign(loaded: &Loaded, sut: &dyn Classifier, mode: Mode, opts: &RunOptions) -> Result<CampaignReport> {
    let cfg = &loaded.config;
    let execution = if cfg!(feature = "parallel") {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let mut search = cfg.search_config(execution);
    search.trace = opts.trace;
    let ctx = Context {
        loaded,
        hash: cfg.hash(),
        sut,
        generator: Generator::new(cfg.generator_spec())?,
        search,
        mode,
        out: &opts.out,
    };
    // Surfaces an incompatible SUT before any cell directory is created.
    Search::new(ctx.sut, &ctx.generator, &ctx.search)?;

    let cells: Vec<(ClassLabel, usize)> = cfg
        .origins()
        .into_iter()
        .flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r)))
        .collect();
    info!("{} campaign: {} cells into {}", mode.dir_name(), cells.len(), opts.out.display());
    let results = run_cells(&ctx, &cells, opts.workers)?;

    let mut report = CampaignReport::default();
    for r in results {
        match r {
            CellResult::Completed => report.completed += 1,
            CellResult::Failed => report.failed += 1,
            CellResult::Skipped => report.skipped += 1,
        }
    }
    info!(
        "{} campaign done: {} completed, {} failed, {} already present",
        mode.dir_name(),
        report.completed,
        report.failed,
        report.skipped
    );
    Ok(report)
}

/// Runs `f` on a worker pool of `workers` threads (default: logical cores).
#[cfg(feature = "parallel")]
pub fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn in_pool<T: Send>(_workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

#[cfg(feature = "parallel")]
fn run_cells(ctx: &Context, cells: &[(ClassLabel, usize)], workers: Option<usize>) -> Result<Vec<CellResult>> {
    use rayon::prelude::*;
    in_pool(workers, || cells.par_iter().map(|&(c, r)| run_cell(ctx, c, r)).collect())?
}

#[cfg(not(feature = "parallel"))]
fn run_cells(ctx: &Context, cells: &[(ClassLabel, usize)], _workers: Option<usize>) -> Result<Vec<CellResult>> {
    cells.iter().map(|&(c, r)| run_cell(ctx, c, r)).collect()
}

fn run_cell(ctx: &Context, class: ClassLabel, repetition: usize) -> Result<CellResult> {
    let dir = cell_dir(ctx.out, ctx.mode, class, repetition);
    let meta_path = dir.join(META_FILE);
    if meta_path.is_file() {
        let meta: MetaRecord = read_json(&meta_path)?;
        if meta.config_hash != ctx.hash {
            return Err(Error::Config(format!(
                "{} was produced by a different configuration",
                dir.display()
            )));
        }
        return Ok(CellResult::Skipped);
    }
    fs::create_dir_all(&dir)?;

    let counting = CountingClassifier::new(ctx.sut);
    let search = Search::new(&counting, &ctx.generator, &ctx.search)?;
    let outcome = match ctx.mode {
        Mode::Search => search.run(class, repetition),
        Mode::Baseline => search.baseline(class, repetition),
    };
    let mut meta = MetaRecord {
        mode: ctx.mode,
        class,
        repetition,
        status: Status::Ok,
        error: None,
        predictions_used: 0,
        sut_calls: 0,
        budget: ctx.search.budget,
        generations: 0,
        retargets: Vec::new(),
        target: None,
        source_seed_id: None,
        target_seed_id: None,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: ctx.hash.clone(),
        config: ctx.loaded.config.clone(),
        elapsed_ms: 0,
    };
    let result = match outcome {
        Ok(o) => {
            write_outputs(ctx, &dir, &o)?;
            meta.predictions_used = o.predictions_used;
            meta.generations = o.generations;
            meta.retargets = o.retargets;
            meta.target = Some(o.candidate.target);
            meta.source_seed_id = Some(o.candidate.source_seed.seed_id);
            meta.target_seed_id = Some(o.candidate.target_seed.seed_id);
            meta.elapsed_ms = o.elapsed_ms;
            info!(
                "class {} rep {}: m1 {:.4} target {} ({} predictions)",
                class.index(),
                repetition,
                o.candidate.m1,
                o.candidate.target.index(),
                o.predictions_used
            );
            CellResult::Completed
        }
        Err(e @ (Error::SeedAcquisition { .. } | Error::BudgetExhausted { .. })) => {
            warn!("class {} rep {} failed: {e}", class.index(), repetition);
            meta.status = Status::Failed;
            meta.error = Some(e.to_string());
            meta.predictions_used = counting.count();
            CellResult::Failed
        }
        Err(e) => return Err(e),
    };
    meta.sut_calls = counting.count();
    write_json(&meta_path, &meta)?;
    Ok(result)
}

fn write_outputs(ctx: &Context, dir: &Path, o: &SearchOutcome) -> Result<()> {
    let record = CandidateRecord::from_outcome(o);
    write_json(&dir.join(CANDIDATE_FILE), &record)?;
    o.candidate.image.write_png(&dir.join("candidate.png"))?;
    record.source_image(&ctx.generator)?.write_png(&dir.join("source.png"))?;
    record.target_image(&ctx.generator)?.write_png(&dir.join("target.png"))?;
    if ctx.search.trace {
        let mut buf = Vec::new();
        for row in &o.trace {
            serde_json::to_writer(&mut buf, row)?;
            buf.write_all(b"\n")?;
        }
        write_atomic(&dir.join(TRACE_FILE), &buf)?;
    }
    Ok(())
}

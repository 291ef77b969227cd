//! Metric tables, run-set summaries and the guided-vs-random comparison.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use bsearch_core::metrics::{
    cohens_d, escaped, label_coverage, laplacian_variance, mann_whitney_u, usage_analysis, Alternative,
    EffectSize, LabelCoverage, MannWhitney, UsageHistogram,
};
use bsearch_core::{ClassLabel, Error, Generator, Genome, Result};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::records::{
    image_digest, read_json, write_atomic, write_json, CandidateRecord, MetaRecord, Mode, Status, CANDIDATE_FILE,
    META_FILE,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const USAGE_FILE: &str = "usage.json";
pub const SIGNIFICANCE: f64 = 0.05;
pub const MIN_EFFECT: f64 = 0.5;

/// One completed cell with its candidate record.
#[derive(Debug, Clone)]
pub struct Run {
    pub meta: MetaRecord,
    pub candidate: CandidateRecord,
}

/// All cells of one mode found under a directory.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub mode: Mode,
    pub root: PathBuf,
    pub runs: Vec<Run>,
    pub failed_cells: usize,
    pub missing_candidates: usize,
}

fn subdirs(dir: &Path, prefix: &str) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix(prefix))
            .and_then(|n| n.parse().ok());
        if let (Some(i), true) = (index, path.is_dir()) {
            out.push((i, path));
        }
    }
    out.sort();
    Ok(out)
}

fn load_set(root: &Path) -> Result<Option<RunSet>> {
    let mut set: Option<RunSet> = None;
    for (_, class_dir) in subdirs(root, "class_")? {
        for (_, rep_dir) in subdirs(&class_dir, "rep_")? {
            let meta_path = rep_dir.join(META_FILE);
            if !meta_path.is_file() {
                warn!("{}: incomplete cell, skipped", rep_dir.display());
                continue;
            }
            let meta: MetaRecord = read_json(&meta_path)?;
            let s = set.get_or_insert_with(|| RunSet {
                mode: meta.mode,
                root: root.to_path_buf(),
                runs: Vec::new(),
                failed_cells: 0,
                missing_candidates: 0,
            });
            if s.mode != meta.mode {
                return Err(Error::Data(format!("{} mixes search and baseline runs", root.display())));
            }
            if meta.status == Status::Failed {
                s.failed_cells += 1;
                continue;
            }
            let cand_path = rep_dir.join(CANDIDATE_FILE);
            if !cand_path.is_file() {
                warn!("{}: missing {CANDIDATE_FILE}, row skipped", rep_dir.display());
                s.missing_candidates += 1;
                continue;
            }
            let candidate = read_json(&cand_path)?;
            s.runs.push(Run { meta, candidate });
        }
    }
    Ok(set)
}

/// Finds run sets in `dirs`. Each entry is either a run-set directory
/// (holding `class_*` cells) or a campaign root holding `search/` and
/// `baseline/`.
pub fn discover(dirs: &[PathBuf]) -> Result<Vec<RunSet>> {
    let mut sets = Vec::new();
    for dir in dirs {
        if !dir.is_dir() {
            return Err(Error::Data(format!("{} is not a directory", dir.display())));
        }
        let mut found = false;
        if let Some(s) = load_set(dir)? {
            sets.push(s);
            found = true;
        }
        for mode in [Mode::Search, Mode::Baseline] {
            let sub = dir.join(mode.dir_name());
            if sub.is_dir() {
                if let Some(s) = load_set(&sub)? {
                    sets.push(s);
                    found = true;
                }
            }
        }
        if !found {
            return Err(Error::Data(format!("no runs found under {}", dir.display())));
        }
    }
    sets.sort_by_key(|s| s.mode);
    for pair in sets.windows(2) {
        if pair[0].mode == pair[1].mode {
            return Err(Error::Data(format!(
                "more than one {} run set given",
                pair[0].mode.dir_name()
            )));
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub class: usize,
    pub repetition: usize,
    pub m1: f64,
    pub m2: f64,
    pub escape_flag: bool,
    pub target_label: usize,
    pub predictions_used: u64,
}

/// Generators keyed by config hash, so mixed-config sets still resolve.
#[derive(Default)]
struct Generators(HashMap<String, Generator>);

impl Generators {
    fn get(&mut self, meta: &MetaRecord) -> Result<&Generator> {
        if !self.0.contains_key(&meta.config_hash) {
            let g = Generator::new(meta.config.generator_spec())?;
            self.0.insert(meta.config_hash.clone(), g);
        }
        Ok(&self.0[&meta.config_hash])
    }
}

struct Evaluated {
    rows: Vec<MetricsRow>,
    image_mismatches: usize,
}

fn evaluate_runs(set: &RunSet) -> Result<Evaluated> {
    let mut gens = Generators::default();
    let mut rows = Vec::with_capacity(set.runs.len());
    let mut image_mismatches = 0;
    for run in &set.runs {
        let gen = gens.get(&run.meta)?;
        let c = &run.candidate;
        let source = c.source_image(gen)?;
        let image = c.candidate_image(gen)?;
        if image_digest(&image) != c.image_sha256 {
            image_mismatches += 1;
        }
        rows.push(MetricsRow {
            class: run.meta.class.index(),
            repetition: run.meta.repetition,
            m1: c.m1,
            m2: laplacian_variance(&source, &image)?,
            escape_flag: escaped(&c.source_probs, &c.probs)?,
            target_label: c.target.index(),
            predictions_used: run.meta.predictions_used,
        });
    }
    Ok(Evaluated { rows, image_mismatches })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: usize,
    pub runs: usize,
    pub m1_mean: f64,
    pub m1_sd: Option<f64>,
    pub m2_mean: f64,
    pub escape_ratio: f64,
    /// Target label counts, keyed by class index.
    pub targets: BTreeMap<usize, usize>,
    pub label_coverage: Option<LabelCoverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub mode: Mode,
    pub runs: usize,
    pub failed_cells: usize,
    pub missing_candidates: usize,
    pub image_mismatches: usize,
    pub max_predictions_used: u64,
    pub m1_mean: Option<f64>,
    pub m2_mean: Option<f64>,
    pub escape_ratio: Option<f64>,
    pub label_coverage_mean: Option<f64>,
    pub per_class: Vec<ClassSummary>,
    pub usage: Option<UsageReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub candidates: UsageHistogram,
    pub fronts: UsageHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub class: usize,
    pub guided_runs: usize,
    pub baseline_runs: usize,
    pub guided_m1_mean: f64,
    pub baseline_m1_mean: f64,
    /// One-tailed: guided m1 is stochastically smaller.
    pub mann_whitney: Option<MannWhitney>,
    /// Baseline minus guided, so positive favours guided search.
    pub cohens_d: Option<EffectSize>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub alpha: f64,
    pub min_effect: f64,
    pub per_class: Vec<ClassComparison>,
    pub significant_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hashes: Vec<String>,
    pub sets: Vec<SetSummary>,
    pub comparison: Option<Comparison>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn by_class(rows: &[MetricsRow]) -> BTreeMap<usize, Vec<&MetricsRow>> {
    let mut map: BTreeMap<usize, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        map.entry(r.class).or_default().push(r);
    }
    map
}

/// Usage histograms of the candidate genomes and of every front member.
pub fn usage_report(set: &RunSet, bins: usize) -> Result<Option<UsageReport>> {
    if set.runs.is_empty() {
        return Ok(None);
    }
    let candidates: Vec<Genome> = set.runs.iter().map(|r| r.candidate.genome.clone()).collect();
    let fronts: Vec<Genome> = set
        .runs
        .iter()
        .flat_map(|r| r.candidate.front.iter().map(|m| m.genome.clone()))
        .collect();
    Ok(Some(UsageReport {
        candidates: usage_analysis(&candidates, bins)?,
        fronts: usage_analysis(&fronts, bins)?,
    }))
}

fn summarize(set: &RunSet, ev: &Evaluated, bins: usize) -> Result<SetSummary> {
    let classes = set.runs.first().map(|r| r.meta.config.classes);
    let mut per_class = Vec::new();
    for (class, rows) in by_class(&ev.rows) {
        let m1: Vec<f64> = rows.iter().map(|r| r.m1).collect();
        let m2: Vec<f64> = rows.iter().map(|r| r.m2).collect();
        let targets: Vec<ClassLabel> = rows.iter().map(|r| ClassLabel(r.target_label)).collect();
        let mut counts = BTreeMap::new();
        for t in &targets {
            *counts.entry(t.index()).or_insert(0) += 1;
        }
        let escapes = rows.iter().filter(|r| r.escape_flag).count();
        per_class.push(ClassSummary {
            class,
            runs: rows.len(),
            m1_mean: mean(&m1).expect("nonempty class"),
            m1_sd: sample_sd(&m1),
            m2_mean: mean(&m2).expect("nonempty class"),
            escape_ratio: escapes as f64 / rows.len() as f64,
            targets: counts,
            label_coverage: label_coverage(&targets, ClassLabel(class), classes.expect("runs exist"))?,
        });
    }
    let m1: Vec<f64> = ev.rows.iter().map(|r| r.m1).collect();
    let m2: Vec<f64> = ev.rows.iter().map(|r| r.m2).collect();
    let flags: Vec<f64> = ev.rows.iter().map(|r| f64::from(u8::from(r.escape_flag))).collect();
    let coverages: Vec<f64> = per_class
        .iter()
        .filter_map(|c| c.label_coverage.map(|l| l.coverage))
        .collect();
    Ok(SetSummary {
        mode: set.mode,
        runs: set.runs.len(),
        failed_cells: set.failed_cells,
        missing_candidates: set.missing_candidates,
        image_mismatches: ev.image_mismatches,
        max_predictions_used: ev.rows.iter().map(|r| r.predictions_used).max().unwrap_or(0),
        m1_mean: mean(&m1),
        m2_mean: mean(&m2),
        escape_ratio: mean(&flags),
        label_coverage_mean: mean(&coverages),
        per_class,
        usage: usage_report(set, bins)?,
    })
}

/// Per-class guided-vs-random comparison on m1.
pub fn compare(guided: &[MetricsRow], baseline: &[MetricsRow]) -> Result<Comparison> {
    let g = by_class(guided);
    let b = by_class(baseline);
    let mut per_class = Vec::new();
    for (class, g_rows) in &g {
        let Some(b_rows) = b.get(class) else { continue };
        let gm: Vec<f64> = g_rows.iter().map(|r| r.m1).collect();
        let bm: Vec<f64> = b_rows.iter().map(|r| r.m1).collect();
        let mw = mann_whitney_u(&gm, &bm, Alternative::Less)?;
        let d = if gm.len() >= 2 && bm.len() >= 2 {
            Some(cohens_d(&bm, &gm)?)
        } else {
            None
        };
        let significant = !mw.degenerate
            && mw.p < SIGNIFICANCE
            && d.and_then(|e| e.d).is_some_and(|d| d > MIN_EFFECT);
        per_class.push(ClassComparison {
            class: *class,
            guided_runs: gm.len(),
            baseline_runs: bm.len(),
            guided_m1_mean: mean(&gm).expect("nonempty"),
            baseline_m1_mean: mean(&bm).expect("nonempty"),
            mann_whitney: Some(mw),
            cohens_d: d,
            significant,
        });
    }
    let significant_classes = per_class.iter().filter(|c| c.significant).count();
    Ok(Comparison {
        alpha: SIGNIFICANCE,
        min_effect: MIN_EFFECT,
        per_class,
        significant_classes,
    })
}

fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["class", "repetition", "m1", "m2", "escape_flag", "target_label", "predictions_used"])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes `<out>/<mode>/metrics.csv` per run set and `<out>/summary.json`.
pub fn evaluate(dirs: &[PathBuf], out: &Path) -> Result<Summary> {
    let sets = discover(dirs)?;
    let mut summaries = Vec::new();
    let mut rows_by_mode = BTreeMap::new();
    let mut hashes = Vec::new();
    for set in &sets {
        let ev = evaluate_runs(set)?;
        let bins = set.runs.first().map_or(1, |r| r.meta.config.usage_bins);
        let dir = out.join(set.mode.dir_name());
        fs::create_dir_all(&dir)?;
        write_csv(&dir.join(METRICS_FILE), &ev.rows)?;
        summaries.push(summarize(set, &ev, bins)?);
        for r in &set.runs {
            hashes.push(r.meta.config_hash.clone());
        }
        rows_by_mode.insert(set.mode, ev.rows);
    }
    hashes.sort();
    hashes.dedup();
    let comparison = match (rows_by_mode.get(&Mode::Search), rows_by_mode.get(&Mode::Baseline)) {
        (Some(g), Some(b)) => Some(compare(g, b)?),
        _ => None,
    };
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hashes: hashes,
        sets: summaries,
        comparison,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub mode: Mode,
    pub runs: usize,
    pub usage: Option<UsageReport>,
}

/// Writes `<out>/usage.json` with the genome-usage histograms of each run set.
pub fn usage_report_cmd(dirs: &[PathBuf], out: &Path) -> Result<Vec<UsageEntry>> {
    let sets = discover(dirs)?;
    let mut entries = Vec::new();
    for set in &sets {
        let bins = set.runs.first().map_or(1, |r| r.meta.config.usage_bins);
        entries.push(UsageEntry {
            mode: set.mode,
            runs: set.runs.len(),
            usage: usage_report(set, bins)?,
        });
    }
    fs::create_dir_all(out)?;
    write_json(&out.join(USAGE_FILE), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(class: usize, m1: f64) -> MetricsRow {
        MetricsRow {
            class,
            repetition: 0,
            m1,
            m2: 0.0,
            escape_flag: false,
            target_label: 0,
            predictions_used: 0,
        }
    }

    #[test]
    fn clearly_lower_guided_m1_is_significant() {
        let g: Vec<_> = (0..10).map(|i| row(1, 0.01 + i as f64 * 1e-3)).collect();
        let b: Vec<_> = (0..10).map(|i| row(1, 0.2 + i as f64 * 1e-2)).collect();
        let c = compare(&g, &b).unwrap();
        assert_eq!(c.significant_classes, 1);
        let cc = &c.per_class[0];
        assert!(cc.mann_whitney.unwrap().p < 1e-4);
        assert!(cc.cohens_d.unwrap().d.unwrap() > 1.0);
    }

    #[test]
    fn reversed_samples_are_not_significant() {
        let g: Vec<_> = (0..10).map(|i| row(0, 0.5 + i as f64 * 1e-2)).collect();
        let b: Vec<_> = (0..10).map(|i| row(0, 0.1 + i as f64 * 1e-2)).collect();
        let c = compare(&g, &b).unwrap();
        assert_eq!(c.significant_classes, 0);
        assert!(c.per_class[0].cohens_d.unwrap().d.unwrap() < 0.0);
    }

    #[test]
    fn unpaired_classes_are_left_out() {
        let c = compare(&[row(0, 0.1), row(0, 0.2)], &[row(1, 0.3), row(1, 0.4)]).unwrap();
        assert!(c.per_class.is_empty());
    }

    #[test]
    fn sd_needs_two_values() {
        assert_eq!(sample_sd(&[1.0]), None);
        assert!((sample_sd(&[1.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }
}

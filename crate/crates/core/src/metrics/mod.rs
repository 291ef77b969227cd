//! Candidate-quality metrics and genome-usage analysis.

mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{ClassLabel, Genome};
use crate::raster::Image;
use crate::sut::{top2, ProbVector};

pub use stats::{
    cohens_d, mann_whitney_u, mann_whitney_u_with, Alternative, EffectSize, Magnitude, MannWhitney, PMethod,
    EXACT_LIMIT,
};

/// Ideal probability vector at a decision boundary: equal mass on the
/// involved classes, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVector(Vec<f64>);

impl BoundaryVector {
    pub fn new(classes: usize, involved: &[ClassLabel]) -> Result<Self> {
        if involved.is_empty() {
            return Err(Error::domain("boundary needs at least one class"));
        }
        let mut b = vec![0.0; classes];
        for c in involved {
            if c.index() >= classes {
                return Err(Error::dim(format!("class {c} out of range for K = {classes}")));
            }
            if b[c.index()] != 0.0 {
                return Err(Error::domain(format!("class {c} listed twice")));
            }
            b[c.index()] = 1.0;
        }
        let share = 1.0 / involved.len() as f64;
        Ok(BoundaryVector(b.into_iter().map(|v| v * share).collect()))
    }

    /// Boundary between an origin and a single target class.
    pub fn pair(classes: usize, origin: ClassLabel, target: ClassLabel) -> Result<Self> {
        BoundaryVector::new(classes, &[origin, target])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean distance between a prediction and the ideal boundary vector.
pub fn boundary_distance(probs: &ProbVector, b: &BoundaryVector) -> Result<f64> {
    if probs.len() != b.0.len() {
        return Err(Error::dim(format!(
            "prediction has {} classes, boundary vector {}",
            probs.len(),
            b.0.len()
        )));
    }
    Ok(probs
        .probs()
        .iter()
        .zip(&b.0)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelCoverage {
    /// Kolmogorov-Smirnov distance to the uniform distribution over targets.
    pub distance: f64,
    /// `1 - distance`.
    pub coverage: f64,
}

/// How evenly the target labels spread over the non-origin classes.
///
/// The KS statistic is taken over the non-origin classes in ascending index
/// order. Returns `None` for an empty label list.
pub fn label_coverage(targets: &[ClassLabel], origin: ClassLabel, classes: usize) -> Result<Option<LabelCoverage>> {
    if classes < 2 {
        return Err(Error::domain("label coverage needs K >= 2"));
    }
    if origin.index() >= classes {
        return Err(Error::dim(format!("origin {origin} out of range")));
    }
    if let Some(bad) = targets.iter().find(|t| **t == origin || t.index() >= classes) {
        return Err(Error::domain(format!("target {bad} is the origin or out of range")));
    }
    if targets.is_empty() {
        return Ok(None);
    }
    let support: Vec<usize> = (0..classes).filter(|&c| c != origin.index()).collect();
    let n = targets.len() as f64;
    let mut distance: f64 = 0.0;
    let mut seen = 0usize;
    for (i, &c) in support.iter().enumerate() {
        seen += targets.iter().filter(|t| t.index() == c).count();
        let ecdf = seen as f64 / n;
        let uniform = (i + 1) as f64 / support.len() as f64;
        distance = distance.max((ecdf - uniform).abs());
    }
    Ok(Some(LabelCoverage {
        distance,
        coverage: 1.0 - distance,
    }))
}

/// Whether the candidate dropped the source's top class from its top two.
pub fn escaped(source: &ProbVector, candidate: &ProbVector) -> Result<bool> {
    if source.len() != candidate.len() {
        return Err(Error::dim("source and candidate predictions differ in length"));
    }
    let origin = top2(source)?.first;
    let t = top2(candidate)?;
    Ok(origin != t.first && origin != t.second)
}

/// Fraction of candidates that escaped their source class; `None` when empty.
pub fn escape_ratio(pairs: &[(ProbVector, ProbVector)]) -> Result<Option<f64>> {
    let Some(first) = pairs.first() else {
        return Ok(None);
    };
    let k = first.0.len();
    let mut count = 0usize;
    for (s, c) in pairs {
        if s.len() != k {
            return Err(Error::dim("inconsistent class counts across pairs"));
        }
        count += escaped(s, c)? as usize;
    }
    Ok(Some(count as f64 / pairs.len() as f64))
}

/// Population variance of the 4-neighbour Laplacian of `x - x_prime`
/// (valid region only), averaged over channels.
pub fn laplacian_variance(x: &Image, x_prime: &Image) -> Result<f64> {
    if x.shape() != x_prime.shape() {
        return Err(Error::dim(format!(
            "image shapes differ: {:?} vs {:?}",
            x.shape(),
            x_prime.shape()
        )));
    }
    let (h, w, channels) = x.shape();
    if h < 3 || w < 3 {
        return Err(Error::dim("laplacian needs images of at least 3x3"));
    }
    let diff = |y: usize, xx: usize, c: usize| x.get(y, xx, c) - x_prime.get(y, xx, c);
    let mut total = 0.0;
    for c in 0..channels {
        let mut values = Vec::with_capacity((h - 2) * (w - 2));
        for y in 1..h - 1 {
            for xx in 1..w - 1 {
                values.push(
                    diff(y - 1, xx, c) + diff(y + 1, xx, c) + diff(y, xx - 1, c) + diff(y, xx + 1, c)
                        - 4.0 * diff(y, xx, c),
                );
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        total += values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    }
    Ok(total / channels as f64)
}

pub const DEFAULT_USAGE_BINS: usize = 20;

/// Histogram summary of how a set of genomes uses each layer's weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageHistogram {
    pub bins: usize,
    /// `per_layer[n][b]`: genomes whose layer-`n` weight falls in bin `b`.
    pub per_layer: Vec<Vec<u64>>,
    /// Normalized entropy of each layer's histogram, in `[0, 1]`.
    pub uniformity: Vec<f64>,
    /// Counts pooled over all layers.
    pub pooled: Vec<u64>,
    /// Trapezoidal area under the pooled histogram scaled to peak 1, over
    /// bin centres.
    pub auc: f64,
}

fn bin_of(w: f64, bins: usize) -> usize {
    ((w * bins as f64) as usize).min(bins - 1)
}

fn normalized_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.len() < 2 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    (h / (counts.len() as f64).ln()).clamp(0.0, 1.0)
}

pub fn usage_analysis(genomes: &[Genome], bins: usize) -> Result<UsageHistogram> {
    let Some(first) = genomes.first() else {
        return Err(Error::Data("usage analysis needs at least one genome".into()));
    };
    if bins < 2 {
        return Err(Error::domain("usage analysis needs at least two bins"));
    }
    let layers = first.len();
    let mut per_layer = vec![vec![0u64; bins]; layers];
    for g in genomes {
        if g.len() != layers {
            return Err(Error::dim("genomes differ in length"));
        }
        for (n, &w) in g.weights().iter().enumerate() {
            per_layer[n][bin_of(w, bins)] += 1;
        }
    }
    let uniformity = per_layer.iter().map(|h| normalized_entropy(h)).collect();
    let pooled: Vec<u64> = (0..bins).map(|b| per_layer.iter().map(|h| h[b]).sum()).collect();
    let peak = *pooled.iter().max().expect("bins > 0") as f64;
    let width = 1.0 / bins as f64;
    let auc = pooled
        .windows(2)
        .map(|pair| 0.5 * (pair[0] + pair[1]) as f64 / peak * width)
        .sum();
    Ok(UsageHistogram {
        bins,
        per_layer,
        uniformity,
        pooled,
        auc,
    })
}

//! The system under test: anything that maps images to class probabilities.

mod external;
mod network;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::ClassLabel;
use crate::raster::Image;

pub use external::{external_handshake, ExternalSut, DEFAULT_HANDSHAKE_TIMEOUT};
pub use network::{BuiltinSut, DenseLayer, NetworkWeights, WEIGHT_MAGIC};
pub use train::{train_builtin, train_network, TrainConfig, TrainOutcome};

pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Classifier output over `K` classes: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::dim("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::domain("probabilities must be finite and nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::domain(format!("probabilities sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    pub fn uniform(classes: usize) -> Self {
        ProbVector(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: ClassLabel) -> f64 {
        self.0[class.index()]
    }

    pub fn top2(&self) -> Result<Top2> {
        top2(self)
    }

    pub fn argmax(&self) -> ClassLabel {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        ClassLabel(best)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Top2 {
    pub first: ClassLabel,
    pub second: ClassLabel,
    pub p1: f64,
    pub p2: f64,
}

/// The two most probable classes; ties go to the lower class index.
pub fn top2(p: &ProbVector) -> Result<Top2> {
    let probs = p.probs();
    if probs.len() < 2 {
        return Err(Error::domain("top2 needs at least two classes"));
    }
    let (mut first, mut second) = if probs[1] > probs[0] { (1, 0) } else { (0, 1) };
    for (i, &v) in probs.iter().enumerate().skip(2) {
        if v > probs[first] {
            second = first;
            first = i;
        } else if v > probs[second] {
            second = i;
        }
    }
    Ok(Top2 {
        first: ClassLabel(first),
        second: ClassLabel(second),
        p1: probs[first],
        p2: probs[second],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SutInfo {
    #[serde(rename = "k")]
    pub classes: usize,
    #[serde(rename = "h")]
    pub height: usize,
    #[serde(rename = "w")]
    pub width: usize,
    #[serde(rename = "c")]
    pub channels: usize,
}

impl SutInfo {
    pub fn check_compatible(&self, spec: &crate::GeneratorSpec) -> Result<()> {
        let expected = SutInfo {
            classes: spec.classes,
            height: spec.height,
            width: spec.width,
            channels: spec.channels,
        };
        if *self != expected {
            return Err(Error::Config(format!(
                "SUT expects {self:?}, generator produces {expected:?}"
            )));
        }
        Ok(())
    }
}

/// Image to probability-vector map. Implementations must be safe to call from
/// several threads at once.
pub trait Classifier: Send + Sync {
    fn info(&self) -> SutInfo;

    fn classify(&self, images: &[Image]) -> Result<Vec<ProbVector>>;
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn info(&self) -> SutInfo {
        (**self).info()
    }

    fn classify(&self, images: &[Image]) -> Result<Vec<ProbVector>> {
        (**self).classify(images)
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn info(&self) -> SutInfo {
        (**self).info()
    }

    fn classify(&self, images: &[Image]) -> Result<Vec<ProbVector>> {
        (**self).classify(images)
    }
}

/// Hard cap on SUT predictions. Predictions are reserved before they are
/// dispatched, so `used` never exceeds `limit`.
#[derive(Debug)]
pub struct PredictionBudget {
    limit: u64,
    used: AtomicU64,
}

pub const DEFAULT_BUDGET: u64 = 15_000;

impl PredictionBudget {
    pub fn new(limit: u64) -> Self {
        PredictionBudget {
            limit,
            used: AtomicU64::new(0),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.used()
    }

    /// Reserves exactly `n` predictions or nothing.
    pub fn reserve(&self, n: u64) -> Result<()> {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| {
                used.checked_add(n).filter(|total| *total <= self.limit)
            })
            .map(|_| ())
            .map_err(|used| Error::BudgetExhausted {
                used,
                limit: self.limit,
                requested: n,
            })
    }

    /// Reserves `min(n, remaining)` predictions and returns the granted count.
    pub fn reserve_up_to(&self, n: u64) -> u64 {
        let mut granted = 0;
        let _ = self
            .used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| {
                granted = n.min(self.limit - used);
                Some(used + granted)
            });
        granted
    }
}

/// Classifies `images`, charging one prediction per image to `budget` before
/// the SUT is invoked.
pub fn predict<C: Classifier + ?Sized>(
    sut: &C,
    images: &[Image],
    budget: &PredictionBudget,
) -> Result<Vec<ProbVector>> {
    budget.reserve(images.len() as u64)?;
    classify_checked(sut, images)
}

/// Classifies without touching a budget, for callers that already reserved.
pub(crate) fn classify_checked<C: Classifier + ?Sized>(
    sut: &C,
    images: &[Image],
) -> Result<Vec<ProbVector>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let out = sut.classify(images)?;
    if out.len() != images.len() {
        return Err(Error::Transport(format!(
            "SUT returned {} predictions for {} images",
            out.len(),
            images.len()
        )));
    }
    Ok(out)
}

/// Wraps a classifier and counts every image it is asked to classify.
pub struct CountingClassifier<C> {
    inner: C,
    count: AtomicU64,
}

impl<C: Classifier> CountingClassifier<C> {
    pub fn new(inner: C) -> Self {
        CountingClassifier {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: Classifier> Classifier for CountingClassifier<C> {
    fn info(&self) -> SutInfo {
        self.inner.info()
    }

    fn classify(&self, images: &[Image]) -> Result<Vec<ProbVector>> {
        self.count.fetch_add(images.len() as u64, Ordering::SeqCst);
        self.inner.classify(images)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prob_vector_invariants() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.1, -0.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn top2_examples() {
        let t = top2(&pv(&[0.7, 0.2, 0.1])).unwrap();
        assert_eq!((t.first, t.second), (ClassLabel(0), ClassLabel(1)));
        let t = top2(&pv(&[0.4, 0.4, 0.2])).unwrap();
        assert_eq!((t.first, t.second), (ClassLabel(0), ClassLabel(1)));
        let t = top2(&pv(&[0.1, 0.2, 0.7])).unwrap();
        assert_eq!((t.first, t.second), (ClassLabel(2), ClassLabel(1)));
        assert_eq!((t.p1, t.p2), (0.7, 0.2));
        let t = top2(&pv(&[0.2, 0.2, 0.2, 0.4])).unwrap();
        assert_eq!((t.first, t.second), (ClassLabel(3), ClassLabel(0)));
        assert!(top2(&pv(&[1.0])).is_err());
    }

    #[test]
    fn top2_matches_sorting_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let k = rng.random_range(2..8);
            // coarse values so ties are common
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0..4) as f64 + 1.0).collect();
            let sum: f64 = raw.iter().sum();
            let p = ProbVector::new(raw.iter().map(|v| v / sum).collect()).unwrap();
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|a, b| p.probs()[*b].partial_cmp(&p.probs()[*a]).unwrap().then(a.cmp(b)));
            let t = top2(&p).unwrap();
            assert_eq!((t.first.0, t.second.0), (idx[0], idx[1]));
            assert_eq!(p.argmax(), t.first);
        }
    }

    #[test]
    fn budget_never_overshoots() {
        let b = PredictionBudget::new(10);
        b.reserve(4).unwrap();
        assert!(matches!(b.reserve(7), Err(Error::BudgetExhausted { used: 4, .. })));
        assert_eq!(b.used(), 4);
        assert_eq!(b.reserve_up_to(100), 6);
        assert_eq!(b.reserve_up_to(1), 0);
        assert_eq!(b.used(), 10);
    }

    #[test]
    fn concurrent_reservations_are_exact() {
        let b = PredictionBudget::new(1000);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| while b.reserve(3).is_ok() {});
            }
        });
        assert_eq!(b.used(), 999);
    }
}

//! Latent and genome value types, plus the per-layer interpolation that turns
//! a genome into a new latent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a class in `[0, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub usize);

impl ClassLabel {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn checked(index: usize, classes: usize) -> Result<Self> {
        if index < classes {
            Ok(ClassLabel(index))
        } else {
            Err(Error::domain(format!(
                "class {index} out of range for {classes} classes"
            )))
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Intermediate latent: `layers` rows of `dims` values, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredLatent {
    layers: usize,
    dims: usize,
    values: Vec<f64>,
}

impl LayeredLatent {
    pub fn new(layers: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if layers == 0 || dims == 0 {
            return Err(Error::dim("latent needs at least one layer and one dim"));
        }
        if values.len() != layers * dims {
            return Err(Error::dim(format!(
                "expected {} values for {layers}x{dims} latent, got {}",
                layers * dims,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("latent contains non-finite values"));
        }
        Ok(LayeredLatent {
            layers,
            dims,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::dim("ragged latent rows"));
        }
        Self::new(rows.len(), dims, rows.concat())
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn layer(&self, n: usize) -> &[f64] {
        &self.values[n * self.dims..(n + 1) * self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.layers, self.dims)
    }
}

/// One interpolation weight per latent layer, each in `[0, 1]`.
///
/// A weight of 1 keeps the source layer, 0 takes the target layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genome(Vec<f64>);

impl Genome {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::dim("genome must have at least one weight"));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::domain(format!("genome weight {w} outside [0, 1]")));
        }
        Ok(Genome(weights))
    }

    /// Builds a genome, clamping each weight into `[0, 1]`. NaN maps to 0.5.
    pub fn clamped(weights: Vec<f64>) -> Self {
        Genome(
            weights
                .into_iter()
                .map(|w| if w.is_nan() { 0.5 } else { w.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Genome::clamped(vec![value; len])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Genome {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Genome::new(v)
    }
}

impl From<Genome> for Vec<f64> {
    fn from(g: Genome) -> Self {
        g.0
    }
}

/// Row `n` of the result is `k[n] * source[n] + (1 - k[n]) * target[n]`.
pub fn interpolate(
    source: &LayeredLatent,
    target: &LayeredLatent,
    genome: &Genome,
) -> Result<LayeredLatent> {
    if source.shape() != target.shape() {
        return Err(Error::dim(format!(
            "source latent {:?} vs target latent {:?}",
            source.shape(),
            target.shape()
        )));
    }
    if genome.len() != source.layers {
        return Err(Error::dim(format!(
            "genome length {} vs {} latent layers",
            genome.len(),
            source.layers
        )));
    }
    let dims = source.dims;
    let mut values = Vec::with_capacity(source.values.len());
    for (n, &k) in genome.weights().iter().enumerate() {
        let s = &source.values[n * dims..(n + 1) * dims];
        let t = &target.values[n * dims..(n + 1) * dims];
        // equal endpoints are copied so that interpolating a latent with
        // itself is exact for every weight
        values.extend(s.iter().zip(t).map(|(&s, &t)| if s == t { s } else { k * s + (1.0 - k) * t }));
    }
    Ok(LayeredLatent {
        layers: source.layers,
        dims,
        values,
    })
}

pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, layers: usize) -> Result<Genome> {
    if layers == 0 {
        return Err(Error::dim("genome length must be at least 1"));
    }
    Ok(Genome((0..layers).map(|_| rng.random::<f64>()).collect()))
}

/// Euclidean distance scaled by `1/sqrt(L)`, so it lies in `[0, 1]`.
pub fn genome_distance(a: &Genome, b: &Genome) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "genome lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sq: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sq.sqrt() / (a.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn latent(rows: &[&[f64]]) -> LayeredLatent {
        LayeredLatent::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn interpolation_endpoints() {
        let s = latent(&[&[1.0, -2.0], &[0.5, 0.25]]);
        let t = latent(&[&[-1.0, 3.0], &[0.0, 0.75]]);
        assert_eq!(interpolate(&s, &t, &Genome::constant(2, 1.0)).unwrap(), s);
        assert_eq!(interpolate(&s, &t, &Genome::constant(2, 0.0)).unwrap(), t);
    }

    #[test]
    fn interpolation_midpoint() {
        let s = latent(&[&[0.0, 2.0]]);
        let t = latent(&[&[2.0, 0.0]]);
        let g = Genome::new(vec![0.5]).unwrap();
        assert_eq!(interpolate(&s, &t, &g).unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn interpolation_shape_errors() {
        let s = latent(&[&[0.0, 2.0]]);
        let t = latent(&[&[2.0, 0.0, 1.0]]);
        assert!(matches!(
            interpolate(&s, &t, &Genome::constant(1, 0.5)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            interpolate(&s, &s, &Genome::constant(2, 0.5)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn genome_validation() {
        assert!(Genome::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(matches!(Genome::new(vec![1.1]), Err(Error::Domain(_))));
        assert!(matches!(Genome::new(vec![]), Err(Error::Dimension(_))));
        assert_eq!(Genome::clamped(vec![-1.0, 2.0]).weights(), &[0.0, 1.0]);
        let parsed: std::result::Result<Genome, _> = serde_json::from_str("[0.2, 1.5]");
        assert!(parsed.is_err());
    }

    #[test]
    fn random_genome_determinism_and_range() {
        let a = random_genome(&mut ChaCha8Rng::seed_from_u64(9), 3).unwrap();
        let b = random_genome(&mut ChaCha8Rng::seed_from_u64(9), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.weights().iter().all(|w| (0.0..=1.0).contains(w)));
        assert!(random_genome(&mut ChaCha8Rng::seed_from_u64(9), 0).is_err());
    }

    #[test]
    fn random_genome_mean_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let layers = 4;
        let mut sums = vec![0.0; layers];
        for _ in 0..draws {
            let g = random_genome(&mut rng, layers).unwrap();
            for (s, w) in sums.iter_mut().zip(g.weights()) {
                *s += w;
            }
        }
        for s in sums {
            let mean = s / draws as f64;
            assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        }
    }

    #[test]
    fn genome_distance_examples() {
        let g = Genome::new(vec![0.3, 0.9]).unwrap();
        assert_eq!(genome_distance(&g, &g).unwrap(), 0.0);
        for l in 1..6 {
            let d = genome_distance(&Genome::constant(l, 0.0), &Genome::constant(l, 1.0)).unwrap();
            assert!((d - 1.0).abs() < 1e-12);
        }
        let a = Genome::new(vec![0.0, 0.0]).unwrap();
        let b = Genome::new(vec![1.0, 0.0]).unwrap();
        assert!((genome_distance(&a, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(genome_distance(&a, &Genome::constant(3, 0.0)).is_err());
    }

    fn genome_strategy(len: usize) -> impl Strategy<Value = Genome> {
        prop::collection::vec(0.0..=1.0f64, len).prop_map(Genome::clamped)
    }

    proptest! {
        #[test]
        fn interpolation_is_convex(
            rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 4),
            other in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 4),
            g in genome_strategy(4),
        ) {
            let s = LayeredLatent::from_rows(&rows).unwrap();
            let t = LayeredLatent::from_rows(&other).unwrap();
            let w = interpolate(&s, &t, &g).unwrap();
            for ((v, a), b) in w.values().iter().zip(s.values()).zip(t.values()) {
                prop_assert!(*v >= a.min(*b) - 1e-12 && *v <= a.max(*b) + 1e-12);
            }
            prop_assert_eq!(interpolate(&s, &s, &g).unwrap(), s.clone());
        }

        #[test]
        fn genome_distance_is_a_bounded_metric(
            a in genome_strategy(5), b in genome_strategy(5), c in genome_strategy(5),
        ) {
            let ab = genome_distance(&a, &b).unwrap();
            let ba = genome_distance(&b, &a).unwrap();
            let bc = genome_distance(&b, &c).unwrap();
            let ac = genome_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab == 0.0, a == b);
        }
    }
}

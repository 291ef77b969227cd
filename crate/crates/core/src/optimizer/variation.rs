use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::latent::Genome;

/// Operator rates for simulated binary crossover and polynomial mutation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationRates {
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    /// Per-gene mutation probability; `None` means `1 / L`.
    pub mutation_prob: Option<f64>,
    pub mutation_eta: f64,
}

impl Default for VariationRates {
    fn default() -> Self {
        VariationRates {
            crossover_prob: 0.9,
            crossover_eta: 15.0,
            mutation_prob: None,
            mutation_eta: 20.0,
        }
    }
}

impl VariationRates {
    pub fn none() -> Self {
        VariationRates {
            crossover_prob: 0.0,
            mutation_prob: Some(0.0),
            ..Default::default()
        }
    }
}

/// Parent view used by tournament selection.
#[derive(Debug, Clone, Copy)]
pub struct Contender<'a> {
    pub genome: &'a Genome,
    pub rank: usize,
    pub score: f64,
}

fn tournament<'a, R: Rng + ?Sized>(pool: &[Contender<'a>], rng: &mut R) -> &'a Genome {
    let a = &pool[rng.random_range(0..pool.len())];
    let b = &pool[rng.random_range(0..pool.len())];
    let b_wins = b.rank < a.rank || (b.rank == a.rank && b.score > a.score);
    if b_wins {
        b.genome
    } else {
        a.genome
    }
}

/// SBX on one gene pair. The children's mean equals the parents' mean and
/// their order is randomized, so each child alone is centred on it too.
pub fn sbx_pair<R: Rng + ?Sized>(x1: f64, x2: f64, eta: f64, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.random();
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    let mean = 0.5 * (x1 + x2);
    let half = 0.5 * beta * (x2 - x1);
    if rng.random_bool(0.5) {
        (mean + half, mean - half)
    } else {
        (mean - half, mean + half)
    }
}

/// Bounded polynomial mutation of one gene on `[0, 1]`.
pub fn polynomial_mutation<R: Rng + ?Sized>(y: f64, eta: f64, rng: &mut R) -> f64 {
    let r: f64 = rng.random();
    let power = 1.0 / (eta + 1.0);
    let shift = if r < 0.5 {
        let xy = 1.0 - y;
        let val = 2.0 * r + (1.0 - 2.0 * r) * xy.powf(eta + 1.0);
        val.powf(power) - 1.0
    } else {
        let xy = y;
        let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy.powf(eta + 1.0);
        1.0 - val.powf(power)
    };
    (y + shift).clamp(0.0, 1.0)
}

/// Produces `count` offspring from `parents`. Only genes whose `active` flag
/// is set are varied; the others are copied from the first parent.
pub fn vary<R: Rng + ?Sized>(
    parents: &[Contender<'_>],
    count: usize,
    rates: &VariationRates,
    active: &[bool],
    rng: &mut R,
) -> Vec<Genome> {
    if parents.is_empty() || count == 0 {
        return Vec::new();
    }
    let len = parents[0].genome.len();
    let mutation_prob = rates.mutation_prob.unwrap_or(1.0 / len as f64);
    let crossover = parents.len() > 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut c1 = tournament(parents, rng).weights().to_vec();
        let mut c2 = tournament(parents, rng).weights().to_vec();
        if crossover && rng.random::<f64>() < rates.crossover_prob {
            for n in 0..len {
                if active[n] && rng.random_bool(0.5) && (c1[n] - c2[n]).abs() > 1e-14 {
                    let (a, b) = sbx_pair(c1[n], c2[n], rates.crossover_eta, rng);
                    c1[n] = a;
                    c2[n] = b;
                }
            }
        }
        for child in [&mut c1, &mut c2] {
            for n in 0..len {
                if active[n] && rng.random::<f64>() < mutation_prob {
                    child[n] = polynomial_mutation(child[n], rates.mutation_eta, rng);
                }
            }
        }
        out.push(Genome::clamped(c1));
        if out.len() < count {
            out.push(Genome::clamped(c2));
        }
    }
    out
}

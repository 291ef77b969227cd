//! Rank test and effect size for comparing two samples of a metric.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// `a` tends to be smaller than `b`.
    Less,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub method: PMethod,
    /// Every value in both samples is identical; `p` is fixed at 0.5.
    pub degenerate: bool,
}

/// Largest `n_a * n_b` for which the p-value is computed exactly.
pub const EXACT_LIMIT: usize = 64;

/// Midranks (1-based) of the pooled sample, and the tie groups' sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// One-tailed Mann-Whitney U test with midranks for ties.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MannWhitney> {
    let method = if a.len() * b.len() <= EXACT_LIMIT {
        PMethod::Exact
    } else {
        PMethod::Normal
    };
    mann_whitney_u_with(a, b, alternative, method)
}

/// As [`mann_whitney_u`], with the p-value method chosen by the caller.
pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: PMethod,
) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("Mann-Whitney U needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::domain("Mann-Whitney U needs finite values"));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;
    if ties.len() == 1 {
        return Ok(MannWhitney {
            u,
            p: 0.5,
            method,
            degenerate: true,
        });
    }
    let p = match method {
        PMethod::Exact => exact_p(&ranks, na, rank_sum, alternative),
        PMethod::Normal => normal_p(u, na, nb, &ties, alternative),
    };
    Ok(MannWhitney {
        u,
        p: p.clamp(0.0, 1.0),
        method,
        degenerate: false,
    })
}

/// Distribution of the first sample's rank sum over all equally likely
/// assignments of the pooled midranks, counted by dynamic programming over
/// doubled rank sums (midranks are multiples of 1/2).
fn exact_p(ranks: &[f64], na: usize, rank_sum: f64, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0f64; max_sum + 1]; na + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=na).rev() {
            for s in (r..=max_sum).rev() {
                let add = ways[k - 1][s - r];
                if add > 0.0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    let observed = (2.0 * rank_sum).round() as usize;
    let total: f64 = ways[na].iter().sum();
    let tail: f64 = match alternative {
        Alternative::Less => ways[na][..=observed].iter().sum(),
        Alternative::Greater => ways[na][observed..].iter().sum(),
    };
    tail / total
}

fn normal_p(u: f64, na: usize, nb: usize, ties: &[usize], alternative: Alternative) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term);
    let sd = var.sqrt();
    let normal = Normal::standard();
    match alternative {
        Alternative::Less => normal.cdf((u + 0.5 - mean) / sd),
        Alternative::Greater => 1.0 - normal.cdf((u - 0.5 - mean) / sd),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Large above 1, medium above 0.5, small otherwise.
    pub fn of(d: f64) -> Self {
        let d = d.abs();
        if d > 1.0 {
            Magnitude::Large
        } else if d > 0.5 {
            Magnitude::Medium
        } else {
            Magnitude::Small
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    /// `None` when the pooled standard deviation is zero.
    pub d: Option<f64>,
    pub magnitude: Option<Magnitude>,
    pub degenerate: bool,
}

fn mean_and_ss(x: &[f64]) -> (f64, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (mean, x.iter().map(|v| (v - mean).powi(2)).sum())
}

/// Cohen's d of `a` relative to `b`, with the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<EffectSize> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::domain("Cohen's d needs at least two values per sample"));
    }
    let (ma, ssa) = mean_and_ss(a);
    let (mb, ssb) = mean_and_ss(b);
    let pooled = ((ssa + ssb) / (a.len() + b.len() - 2) as f64).sqrt();
    if !(pooled > 0.0) {
        return Ok(EffectSize {
            d: None,
            magnitude: None,
            degenerate: true,
        });
    }
    let d = (ma - mb) / pooled;
    Ok(EffectSize {
        d: Some(d),
        magnitude: Some(Magnitude::of(d)),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Exact one-tailed p by enumerating every split of the pooled sample.
    fn brute_force_p(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let u_of = |mask: u32| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for (i, v) in pooled.iter().enumerate() {
                    if mask >> i & 1 == 1 { xs.push(*v) } else { ys.push(*v) }
                }
                (xs, ys)
            };
            // pairwise definition: wins count 1, ties count 1/2
            let mut u = 0.0;
            for x in &xs {
                for y in &ys {
                    u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
                }
            }
            u
        };
        let observed = u_of((1u32 << a.len()) - 1);
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            total += 1;
            let u = u_of(mask);
            let hit = match alternative {
                Alternative::Less => u <= observed + 1e-9,
                Alternative::Greater => u >= observed - 1e-9,
            };
            hits += hit as u64;
        }
        hits as f64 / total as f64
    }

    #[test]
    fn separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, PMethod::Exact);
        assert!((r.p - 0.05).abs() < 1e-12);
        assert!((brute_force_p(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less) - 0.05).abs() < 1e-12);
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Greater).unwrap();
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_multisets_are_symmetric() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let less = mann_whitney_u(&a, &a, Alternative::Less).unwrap();
        let greater = mann_whitney_u(&a, &a, Alternative::Greater).unwrap();
        assert_eq!(less.u, 8.0);
        assert!((less.p - greater.p).abs() < 1e-12);
        assert!(less.p > 0.5 && less.p < 0.7);
    }

    #[test]
    fn all_equal_is_degenerate() {
        let r = mann_whitney_u(&[3.0; 4], &[3.0; 5], Alternative::Less).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 0.5);
        assert!(mann_whitney_u(&[], &[1.0], Alternative::Less).is_err());
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let na = rng.random_range(1..=7);
            let nb = rng.random_range(1..=7);
            let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..5) as f64).collect();
            for alt in [Alternative::Less, Alternative::Greater] {
                let got = mann_whitney_u_with(&a, &b, alt, PMethod::Exact).unwrap();
                if got.degenerate {
                    continue;
                }
                let want = brute_force_p(&a, &b, alt);
                assert!((got.p - want).abs() < 1e-12, "{a:?} {b:?} {alt:?}: {} vs {want}", got.p);
            }
        }
    }

    #[test]
    fn normal_approximation_tracks_exact_at_n8() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let shift: f64 = rng.random_range(0.0..1.5);
            let a: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
            let exact = mann_whitney_u_with(&a, &b, Alternative::Less, PMethod::Exact).unwrap();
            let approx = mann_whitney_u_with(&a, &b, Alternative::Less, PMethod::Normal).unwrap();
            assert!((exact.p - approx.p).abs() < 0.01, "{} vs {}", exact.p, approx.p);
        }
    }

    #[test]
    fn larger_samples_use_the_normal_approximation() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = (5..15).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b, Alternative::Less).unwrap();
        assert_eq!(r.method, PMethod::Normal);
        assert!(r.p < 0.05);
    }

    #[test]
    fn cohens_d_examples() {
        let e = cohens_d(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(e.d, Some(0.0));
        assert_eq!(e.magnitude, Some(Magnitude::Small));
        let e = cohens_d(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(e.degenerate && e.d.is_none());
        assert!(cohens_d(&[1.0], &[1.0, 2.0]).is_err());
        // pooled variance of {1,3} and {2,4} is 2
        let e = cohens_d(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert!((e.d.unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cohens_d_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let a: Vec<f64> = (0..10_000).map(|_| 1.0 + z()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| z()).collect();
        let d = cohens_d(&a, &b).unwrap().d.unwrap();
        assert!((d - 1.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn magnitude_thresholds() {
        assert_eq!(Magnitude::of(0.5), Magnitude::Small);
        assert_eq!(Magnitude::of(0.51), Magnitude::Medium);
        assert_eq!(Magnitude::of(-1.0), Magnitude::Medium);
        assert_eq!(Magnitude::of(1.01), Magnitude::Large);
    }
}

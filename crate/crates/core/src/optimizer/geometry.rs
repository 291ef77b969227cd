//! Curvature estimate of a normalized Pareto front.
//!
//! Every interior point `x` of the front is assumed to satisfy
//! `sum_i x_i^p = 1`; `p` is solved per point by safeguarded Newton iteration
//! and the per-point solutions are averaged.

pub const MIN_P: f64 = 0.1;
pub const MAX_P: f64 = 10.0;
const FALLBACK_P: f64 = 1.0;
const EDGE: f64 = 1e-9;

/// Estimates the exponent `p` of a front already normalized to `[0, 1]^M`.
pub fn estimate_geometry(front: &[Vec<f64>]) -> f64 {
    let m = match front.first() {
        Some(first) => first.len(),
        None => return FALLBACK_P,
    };
    if m < 2 || front.len() < m + 1 {
        return FALLBACK_P;
    }
    let interior: Vec<&Vec<f64>> = front
        .iter()
        .filter(|x| x.iter().all(|v| *v > EDGE && *v < 1.0 - EDGE))
        .collect();
    if interior.len() < 2 {
        return FALLBACK_P;
    }
    let total: f64 = interior.iter().map(|x| solve_exponent(x)).sum();
    (total / interior.len() as f64).clamp(MIN_P, MAX_P)
}

/// Root of `g(p) = sum x_i^p - 1` for a point with every coordinate in `(0, 1)`.
///
/// `g` is strictly decreasing with `g(0+) = M - 1 > 0`, so the root is unique.
pub fn solve_exponent(x: &[f64]) -> f64 {
    let g = |p: f64| x.iter().map(|v| v.powf(p)).sum::<f64>() - 1.0;
    let dg = |p: f64| x.iter().map(|v| v.powf(p) * v.ln()).sum::<f64>();
    let (mut lo, mut hi) = (1e-3, 1e3);
    if g(hi) >= 0.0 {
        return hi;
    }
    if g(lo) <= 0.0 {
        return lo;
    }
    let mut p = 1.0;
    for _ in 0..200 {
        let value = g(p);
        if value == 0.0 {
            return p;
        }
        if value > 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let slope = dg(p);
        let newton = p - value / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - p).abs() <= 1e-14 * p.max(1.0) {
            return next;
        }
        p = next;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_front() {
        let pts = vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]];
        assert_eq!(estimate_geometry(&pts), 1.0);
        let pts: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 / 20.0, 1.0 - i as f64 / 20.0]).collect();
        assert!((estimate_geometry(&pts) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn circular_front() {
        let pts: Vec<Vec<f64>> = (0..=30)
            .map(|i| {
                let t = i as f64 / 30.0 * std::f64::consts::FRAC_PI_2;
                vec![t.cos(), t.sin()]
            })
            .collect();
        assert!((estimate_geometry(&pts) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn per_point_root_is_exact() {
        for p in [0.3, 0.7, 1.0, 2.5, 6.0] {
            let x = [0.3f64, 0.6];
            // scale the point onto the p-sphere, then recover p
            let norm = x.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
            let on: Vec<f64> = x.iter().map(|v| v / norm).collect();
            assert!((solve_exponent(&on) - p).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn fallbacks() {
        assert_eq!(estimate_geometry(&[]), 1.0);
        assert_eq!(estimate_geometry(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]), 1.0);
        // a single interior point is not enough for a fit
        assert_eq!(estimate_geometry(&[vec![0.0, 1.0], vec![0.1, 0.1], vec![1.0, 0.0]]), 1.0);
        let degenerate = vec![vec![0.0, 0.0]; 4];
        assert_eq!(estimate_geometry(&degenerate), 1.0);
    }

    #[test]
    fn clamping() {
        let convex: Vec<Vec<f64>> = (1..10).map(|i| vec![i as f64 * 1e-4, 1e-4]).collect();
        assert_eq!(estimate_geometry(&convex), MIN_P);
    }
}

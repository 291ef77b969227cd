use super::geometry::estimate_geometry;
use super::sort::nondominated_sort;

/// Outcome of environmental selection over a list of objective vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Survival {
    /// Indices of the survivors, in selection order.
    pub selected: Vec<usize>,
    /// Front index of each survivor, aligned with `selected`.
    pub ranks: Vec<usize>,
    /// Survival score of each survivor; extremes of the first front are infinite.
    pub scores: Vec<f64>,
    /// Front geometry used for the distances.
    pub p: f64,
}

fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

struct Space {
    normalized: Vec<Vec<f64>>,
    projected: Vec<Vec<f64>>,
    proximity: Vec<f64>,
    p: f64,
}

impl Space {
    fn new(objectives: &[Vec<f64>], front0: &[usize]) -> Self {
        let m = objectives[0].len();
        let mut ideal = vec![f64::INFINITY; m];
        let mut nadir = vec![f64::NEG_INFINITY; m];
        for &i in front0 {
            for j in 0..m {
                ideal[j] = ideal[j].min(objectives[i][j]);
                nadir[j] = nadir[j].max(objectives[i][j]);
            }
        }
        let span: Vec<f64> = ideal
            .iter()
            .zip(&nadir)
            .map(|(lo, hi)| if hi - lo > 1e-12 { hi - lo } else { 1.0 })
            .collect();
        let normalized: Vec<Vec<f64>> = objectives
            .iter()
            .map(|o| (0..m).map(|j| (o[j] - ideal[j]) / span[j]).collect())
            .collect();
        let front: Vec<Vec<f64>> = front0.iter().map(|&i| normalized[i].clone()).collect();
        let p = estimate_geometry(&front);
        let zero = vec![0.0; m];
        let proximity: Vec<f64> = normalized.iter().map(|x| minkowski(x, &zero, p)).collect();
        let projected = normalized
            .iter()
            .zip(&proximity)
            .map(|(x, &d)| {
                if d > 1e-12 {
                    x.iter().map(|v| v / d).collect()
                } else {
                    x.clone()
                }
            })
            .collect();
        Space {
            normalized,
            projected,
            proximity,
            p,
        }
    }

    fn diversity(&self, candidate: usize, chosen: &[usize]) -> f64 {
        let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
        for &s in chosen {
            let d = minkowski(&self.projected[candidate], &self.projected[s], self.p);
            if d < d1 {
                d2 = d1;
                d1 = d;
            } else if d < d2 {
                d2 = d;
            }
        }
        match (d1.is_finite(), d2.is_finite()) {
            (true, true) => d1 + d2,
            (true, false) => d1,
            _ => f64::INFINITY,
        }
    }

    /// Greedily picks `count` members of `pool` by diversity / proximity
    /// relative to `chosen`, returning them with their scores.
    fn greedy(&self, pool: &[usize], chosen: &mut Vec<usize>, count: usize) -> Vec<(usize, f64)> {
        let mut left: Vec<usize> = pool.iter().copied().filter(|i| !chosen.contains(i)).collect();
        let mut picks = Vec::with_capacity(count);
        while picks.len() < count && !left.is_empty() {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (slot, &c) in left.iter().enumerate() {
                let score = self.diversity(c, chosen) / self.proximity[c].max(1e-12);
                if score > best_score {
                    best = slot;
                    best_score = score;
                }
            }
            let c = left.remove(best);
            chosen.push(c);
            picks.push((c, best_score));
        }
        picks
    }

    /// Per-objective minima of a front; ties prefer the smaller remaining
    /// coordinates, then the lower index.
    fn extremes(&self, front: &[usize]) -> Vec<usize> {
        let m = self.normalized[front[0]].len();
        let mut out: Vec<usize> = Vec::new();
        for j in 0..m {
            let key = |i: usize| {
                let rest: f64 = (0..m).filter(|&k| k != j).map(|k| self.normalized[i][k]).sum();
                (self.normalized[i][j], rest)
            };
            let best = front
                .iter()
                .copied()
                .min_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite objectives"))
                .expect("nonempty front");
            if !out.contains(&best) {
                out.push(best);
            }
        }
        out
    }
}

/// Selects `n` survivors from `objectives` (minimized).
pub fn survival(objectives: &[Vec<f64>], n: usize) -> Survival {
    let empty = Survival {
        selected: Vec::new(),
        ranks: Vec::new(),
        scores: Vec::new(),
        p: 1.0,
    };
    if n == 0 || objectives.is_empty() {
        return empty;
    }
    let partition = nondominated_sort(objectives);
    let space = Space::new(objectives, &partition.fronts[0]);

    let front0 = &partition.fronts[0];
    let extremes = space.extremes(front0);
    let mut ordered0: Vec<(usize, f64)> = extremes.iter().map(|&i| (i, f64::INFINITY)).collect();
    let mut chosen = extremes.clone();
    ordered0.extend(space.greedy(front0, &mut chosen, front0.len()));

    let mut out = Survival { p: space.p, ..empty };
    for (rank, front) in partition.fronts.iter().enumerate() {
        let room = n - out.selected.len();
        if room == 0 {
            break;
        }
        let picks: Vec<(usize, f64)> = if rank == 0 {
            // ordered0 is a greedy ranking, so any prefix is the truncation
            ordered0.iter().take(room).copied().collect()
        } else if front.len() <= room {
            front.iter().map(|&i| (i, 1.0 / space.proximity[i].max(1e-12))).collect()
        } else {
            let mut chosen = out.selected.clone();
            space.greedy(front, &mut chosen, room)
        };
        for (i, score) in picks {
            out.selected.push(i);
            out.ranks.push(rank);
            out.scores.push(score);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_when_room_for_everyone() {
        let objs = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 3.0], vec![0.5, 4.0]];
        let s = survival(&objs, 10);
        let mut sel = s.selected.clone();
        sel.sort_unstable();
        assert_eq!(sel, vec![0, 1, 2, 3]);
        assert_eq!(s.ranks.len(), 4);
    }

    #[test]
    fn zero_capacity_is_empty() {
        assert!(survival(&[vec![1.0, 1.0]], 0).selected.is_empty());
    }

    #[test]
    fn large_first_front_fills_everything() {
        let front: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 19.0 - i as f64]).collect();
        let mut objs = front.clone();
        objs.extend((0..5).map(|i| vec![30.0 + i as f64, 30.0]));
        let s = survival(&objs, 8);
        assert_eq!(s.selected.len(), 8);
        assert!(s.selected.iter().all(|&i| i < 20));
        assert!(s.ranks.iter().all(|&r| r == 0));
        assert!(s.selected.contains(&0) && s.selected.contains(&19));
    }

    #[test]
    fn extremes_always_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let size = rng.random_range(6..40);
            let objs: Vec<Vec<f64>> = (0..size)
                .map(|_| {
                    let t: f64 = rng.random_range(0.0..1.0);
                    let lift: f64 = if rng.random_bool(0.3) { rng.random_range(0.0..0.5) } else { 0.0 };
                    vec![t + lift, (1.0 - t * t).sqrt() + lift]
                })
                .collect();
            let n = rng.random_range(2..size);
            let s = survival(&objs, n);
            let front0 = &nondominated_sort(&objs).fronts[0];
            for j in 0..2 {
                let min = front0.iter().map(|&i| objs[i][j]).fold(f64::INFINITY, f64::min);
                assert!(
                    s.selected.iter().any(|&i| objs[i][j] == min),
                    "objective {j} minimum dropped"
                );
            }
            assert_eq!(s.selected.len(), n);
        }
    }

    #[test]
    fn elitist_fill() {
        // first front of 3 fits, second front split
        let objs = vec![
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![1.0, 0.0],
            vec![0.2, 1.2],
            vec![0.7, 0.7],
            vec![1.2, 0.2],
            vec![2.0, 2.0],
        ];
        let s = survival(&objs, 5);
        assert_eq!(&s.selected[..3], &[0, 2, 1]);
        assert_eq!(s.ranks, vec![0, 0, 0, 1, 1]);
        assert!(!s.selected.contains(&6));
    }
}

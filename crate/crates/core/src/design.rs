//! Design variables and Latin hypercube sampling over their ranges.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpm::PhysioState;

/// One simulation's design variables: `x1` scales (R_a, R_ap), `x2` scales
/// R_ad, `x3` scales (C_a, C_im), `x4` places the injection onset within
/// its cardiac cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub state: PhysioState,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

/// Closed bounds `[lo, hi]` for each of the four design variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRange {
    pub bounds: [(f64, f64); 4],
}

impl DesignRange {
    pub fn for_state(state: PhysioState) -> Self {
        match state {
            PhysioState::Rest => DesignRange {
                bounds: [(1.0, 2.0), (1.0, 2.0), (0.5, 1.0), (0.0, 1.0)],
            },
            PhysioState::Hyperemia => DesignRange {
                bounds: [(1.0, 5.0), (1.0, 5.0), (0.1, 1.0), (0.0, 1.0)],
            },
        }
    }

    /// Stratum index of `value` along dimension `dim` when the range is cut
    /// into `n` equal-width bins. The upper bound belongs to the last bin.
    pub fn stratum(&self, dim: usize, value: f64, n: usize) -> Option<usize> {
        let (lo, hi) = self.bounds[dim];
        if !(lo..=hi).contains(&value) {
            return None;
        }
        (0..n).find(|&j| value < stratum_edge(lo, hi, j + 1, n)).or(Some(n - 1))
    }
}

fn stratum_edge(lo: f64, hi: f64, j: usize, n: usize) -> f64 {
    if j == n {
        hi
    } else {
        lo + (hi - lo) * (j as f64) / (n as f64)
    }
}

impl DesignPoint {
    pub fn new(state: PhysioState, x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        DesignPoint { state, x1, x2, x3, x4 }
    }

    /// The reference (unscaled) point with injection at cycle start.
    pub fn identity(state: PhysioState) -> Self {
        DesignPoint::new(state, 1.0, 1.0, 1.0, 0.0)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn check_range(&self) -> Result<()> {
        let range = DesignRange::for_state(self.state);
        for (k, (v, (lo, hi))) in self.values().iter().zip(range.bounds).enumerate() {
            if !(lo..=hi).contains(v) {
                return Err(Error::Range(format!(
                    "x{} = {v} outside [{lo}, {hi}] for {}",
                    k + 1,
                    self.state
                )));
            }
        }
        Ok(())
    }
}

/// Latin hypercube sample of `n` points: along every dimension each of the
/// `n` equal-width strata holds exactly one point, jittered uniformly
/// inside its stratum. Deterministic for a given seed.
pub fn lhs_sample(n: usize, state: PhysioState, seed: u64) -> Vec<DesignPoint> {
    let range = DesignRange::for_state(state);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = [vec![], vec![], vec![], vec![]];
    for (dim, col) in columns.iter_mut().enumerate() {
        let (lo, hi) = range.bounds[dim];
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        *col = strata
            .into_iter()
            .map(|j| {
                let a = stratum_edge(lo, hi, j, n);
                let b = stratum_edge(lo, hi, j + 1, n);
                let u: f64 = rng.random();
                let v = a + u * (b - a);
                // Rounding can land exactly on the upper edge of an inner stratum.
                if v >= b && j + 1 < n {
                    a
                } else {
                    v.min(hi)
                }
            })
            .collect();
    }
    (0..n)
        .map(|i| DesignPoint::new(state, columns[0][i], columns[1][i], columns[2][i], columns[3][i]))
        .collect()
}

/// Checks the one-point-per-stratum property for every dimension.
pub fn is_latin_hypercube(points: &[DesignPoint], state: PhysioState) -> bool {
    let n = points.len();
    let range = DesignRange::for_state(state);
    (0..4).all(|dim| {
        let mut hit = vec![0usize; n];
        for p in points {
            match range.stratum(dim, p.values()[dim], n) {
                Some(j) => hit[j] += 1,
                None => return false,
            }
        }
        hit.iter().all(|&c| c == 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_in_box() {
        for state in [PhysioState::Rest, PhysioState::Hyperemia] {
            let p = lhs_sample(1, state, 3);
            assert_eq!(p.len(), 1);
            p[0].check_range().unwrap();
        }
    }

    #[test]
    fn two_points_split_halves() {
        let pts = lhs_sample(2, PhysioState::Rest, 11);
        let range = DesignRange::for_state(PhysioState::Rest);
        for dim in 0..4 {
            let (lo, hi) = range.bounds[dim];
            let mid = 0.5 * (lo + hi);
            let lower = pts.iter().filter(|p| p.values()[dim] < mid).count();
            assert_eq!(lower, 1, "dimension {dim}");
        }
    }

    #[test]
    fn stratification_and_determinism() {
        for &n in &[2usize, 10, 100, 600] {
            for state in [PhysioState::Rest, PhysioState::Hyperemia] {
                let a = lhs_sample(n, state, 42);
                assert!(is_latin_hypercube(&a, state));
                assert_eq!(a, lhs_sample(n, state, 42));
                assert!(a.iter().all(|p| p.check_range().is_ok()));
            }
        }
        assert_ne!(
            lhs_sample(10, PhysioState::Rest, 1),
            lhs_sample(10, PhysioState::Rest, 2)
        );
    }

    #[test]
    fn range_violation() {
        let p = DesignPoint::new(PhysioState::Hyperemia, 1.0, 5.5, 1.0, 0.0);
        assert!(matches!(p.check_range(), Err(Error::Range(_))));
        let p = DesignPoint::new(PhysioState::Hyperemia, 1.0, 5.0, 0.1, 1.0);
        assert!(p.check_range().is_ok());
    }
}

//! Reproducible trajectory fan-out and ordered ensemble statistics.

use contmeas_core::sse::Snapshot;
use contmeas_core::PhaseMoments;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::output::{num, Table};

/// Generator for trajectory `k`: the master seed picks the key, `k` the stream.
pub fn trajectory_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Runs `f(k, rng_k)` for `k` in `range` across the worker pool. Results come
/// back in index order whatever the scheduling.
pub fn fan_out<T, F>(seed: u64, range: std::ops::Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    range.into_par_iter().map(|k| f(k, &mut trajectory_rng(seed, k))).collect()
}

pub const OBSERVABLES: [&str; 6] = ["mean_x", "mean_p", "vx", "vp", "cxp", "total_variance"];

pub fn observables(m: &PhaseMoments) -> [f64; 6] {
    [m.mean_x, m.mean_p, m.vx, m.vp, m.cxp, m.total_variance()]
}

/// Running mean and variance (Welford) of the moment series, one column per
/// snapshot time. Trajectories must be added in a fixed order for
/// bit-identical output.
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator {
    times: Vec<f64>,
    count: usize,
    mean: Vec<[f64; 6]>,
    m2: Vec<[f64; 6]>,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn add(&mut self, snapshots: &[Snapshot]) {
        if self.count == 0 {
            self.times = snapshots.iter().map(|s| s.t).collect();
            self.mean = vec![[0.0; 6]; snapshots.len()];
            self.m2 = vec![[0.0; 6]; snapshots.len()];
        }
        assert_eq!(snapshots.len(), self.times.len(), "snapshot grids differ between trajectories");
        self.count += 1;
        let n = self.count as f64;
        for (i, snap) in snapshots.iter().enumerate() {
            let obs = observables(&snap.moments);
            for c in 0..6 {
                let delta = obs[c] - self.mean[i][c];
                self.mean[i][c] += delta / n;
                self.m2[i][c] += delta * (obs[c] - self.mean[i][c]);
            }
        }
    }

    pub fn mean(&self, i: usize) -> [f64; 6] {
        self.mean[i]
    }

    /// Standard error of the mean; zero for a single trajectory.
    pub fn stderr(&self, i: usize) -> [f64; 6] {
        let mut out = [0.0; 6];
        if self.count > 1 {
            let n = self.count as f64;
            for c in 0..6 {
                out[c] = (self.m2[i][c] / (n - 1.0) / n).sqrt();
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut header = vec!["t".to_string()];
        for name in OBSERVABLES {
            header.push(name.to_string());
            header.push(format!("{name}_se"));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Table::with_meta(&format!("trajectories = {}", self.count), &header);
        for (i, &t) in self.times.iter().enumerate() {
            let (m, se) = (self.mean(i), self.stderr(i));
            let mut row = vec![num(t)];
            for c in 0..6 {
                row.push(num(m[c]));
                row.push(num(se[c]));
            }
            table.row(&row);
        }
        table.into_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    fn snap(t: f64, x: f64) -> Snapshot {
        Snapshot {
            t,
            moments: PhaseMoments { mean_x: x, mean_p: -x, vx: 1.0, vp: 2.0, cxp: 0.0 },
            state: None,
        }
    }

    #[test]
    fn streams_are_independent_of_scheduling() {
        let a = fan_out(7, 0..64, |_, rng| rng.next_u64());
        let b: Vec<u64> = (0..64).map(|k| trajectory_rng(7, k).next_u64()).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(trajectory_rng(7, 0).next_u64(), trajectory_rng(8, 0).next_u64());
    }

    #[test]
    fn accumulator_matches_direct_formulas() {
        let xs = [0.5, 1.5, -0.25, 2.0];
        let mut acc = MomentAccumulator::new();
        for &x in &xs {
            acc.add(&[snap(0.0, 0.0), snap(0.1, x)]);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((acc.mean(1)[0] - mean).abs() < 1e-15);
        assert!((acc.stderr(1)[0] - (var / n).sqrt()).abs() < 1e-15);
        assert_eq!(acc.stderr(0), [0.0; 6]);
        assert_eq!(acc.mean(1)[5], 3.0);
        assert_eq!(acc.to_table().lines().count(), 4);
    }
}

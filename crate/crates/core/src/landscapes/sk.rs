use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::{check_coordinate_change, discrete_values, DeltaTracker, EnergyModel};
use crate::error::{ElmError, Result};
use crate::seeding::chain_rng;
use crate::state::{Palette, State, StateKind};

/// Sherrington-Kirkpatrick spin glass `E(σ) = -(1/T) Σ_{i<k} J_ik σ_i σ_k`.
///
/// Couplings are stored as a dense symmetric matrix with a zero diagonal.
#[derive(Debug, Clone)]
pub struct SkGlass {
    n: usize,
    temperature: f64,
    couplings: Vec<f64>,
    seed: Option<u64>,
    palette: Palette,
    name: String,
}

impl SkGlass {
    /// Couplings drawn i.i.d. from `N(0, 1/n)` in row-major upper-triangle order.
    pub fn seeded(n: usize, temperature: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(ElmError::invalid("SK glass needs at least one spin"));
        }
        let mut rng = chain_rng(seed, &[0x5c_61a5]);
        let normal = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("positive variance");
        let mut couplings = vec![0.0; n * n];
        for i in 0..n {
            for k in (i + 1)..n {
                let j = normal.sample(&mut rng);
                couplings[i * n + k] = j;
                couplings[k * n + i] = j;
            }
        }
        let mut glass = Self::from_matrix(n, temperature, couplings)?;
        glass.seed = Some(seed);
        glass.name = format!("sk-n{n}-seed{seed}");
        Ok(glass)
    }

    /// Builds from a full `n x n` coupling matrix; only the upper triangle is read.
    pub fn from_matrix(n: usize, temperature: f64, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(ElmError::invalid(format!("coupling matrix has {} entries, expected {}", matrix.len(), n * n)));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(ElmError::invalid("SK temperature must be positive"));
        }
        let mut couplings = vec![0.0; n * n];
        for i in 0..n {
            for k in (i + 1)..n {
                let j = matrix[i * n + k];
                if !j.is_finite() {
                    return Err(ElmError::invalid(format!("coupling ({i},{k}) is not finite")));
                }
                couplings[i * n + k] = j;
                couplings[k * n + i] = j;
            }
        }
        Ok(SkGlass {
            n,
            temperature,
            couplings,
            seed: None,
            palette: Palette::spins(),
            name: format!("sk-n{n}"),
        })
    }

    pub fn coupling(&self, i: usize, k: usize) -> f64 {
        self.couplings[i * self.n + k]
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Writes `i,j,J_ij` rows for `i < j` (zero-based indices).
    pub fn write_couplings_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,J_ij")?;
        for i in 0..self.n {
            for k in (i + 1)..self.n {
                writeln!(out, "{},{},{:e}", i, k, self.coupling(i, k))?;
            }
        }
        Ok(())
    }

    /// Reads couplings written by [`SkGlass::write_couplings_csv`]; missing pairs are zero.
    pub fn read_couplings_csv<R: BufRead>(n: usize, temperature: f64, input: R) -> Result<Self> {
        let mut matrix = vec![0.0; n * n];
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('i')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = (|| {
                if fields.len() != 3 {
                    return None;
                }
                Some((
                    fields[0].parse::<usize>().ok()?,
                    fields[1].parse::<usize>().ok()?,
                    fields[2].parse::<f64>().ok()?,
                ))
            })();
            let (i, k, j) = parsed.ok_or_else(|| ElmError::Config(format!("bad coupling row {}: {line}", lineno + 1)))?;
            if i >= n || k >= n || i == k {
                return Err(ElmError::Config(format!("coupling row {} has invalid indices ({i},{k})", lineno + 1)));
            }
            let (lo, hi) = (i.min(k), i.max(k));
            matrix[lo * n + hi] = j;
        }
        Self::from_matrix(n, temperature, matrix)
    }

    fn local_field(&self, spins: &[i32], i: usize) -> f64 {
        let row = &self.couplings[i * self.n..(i + 1) * self.n];
        row.iter().zip(spins).map(|(j, &s)| j * s as f64).sum()
    }

    /// Uniformly random spin configuration.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        State::Discrete((0..self.n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }
}

impl EnergyModel for SkGlass {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn kind(&self) -> StateKind {
        StateKind::Discrete
    }

    fn palette(&self) -> Option<&Palette> {
        Some(&self.palette)
    }

    fn energy(&self, s: &State) -> Result<f64> {
        let spins = discrete_values(self, s)?;
        let mut sum = 0.0;
        for i in 0..self.n {
            let row = &self.couplings[i * self.n..(i + 1) * self.n];
            let partial: f64 = row[(i + 1)..]
                .iter()
                .zip(&spins[(i + 1)..])
                .map(|(j, &sk)| j * sk as f64)
                .sum();
            sum += spins[i] as f64 * partial;
        }
        Ok(-sum / self.temperature)
    }

    fn coordinate_delta(&self, s: &State, i: usize, v: i32) -> Result<f64> {
        let spins = check_coordinate_change(self, s, i, v)?;
        let change = (v - spins[i]) as f64;
        Ok(-change * self.local_field(spins, i) / self.temperature)
    }

    fn tracker(&self, s: &State) -> Result<Box<dyn DeltaTracker + '_>> {
        let spins = discrete_values(self, s)?.to_vec();
        let fields = (0..self.n).map(|i| self.local_field(&spins, i)).collect();
        let energy = self.energy(s)?;
        Ok(Box::new(SkTracker {
            model: self,
            spins,
            fields,
            energy,
        }))
    }

    fn parameters(&self) -> serde_json::Value {
        json!({
            "family": "sk",
            "n": self.n,
            "temperature": self.temperature,
            "coupling_seed": self.seed,
        })
    }
}

struct SkTracker<'m> {
    model: &'m SkGlass,
    spins: Vec<i32>,
    fields: Vec<f64>,
    energy: f64,
}

impl DeltaTracker for SkTracker<'_> {
    fn values(&self) -> &[i32] {
        &self.spins
    }

    fn energy(&self) -> f64 {
        self.energy
    }

    fn delta(&self, i: usize, v: i32) -> f64 {
        -((v - self.spins[i]) as f64) * self.fields[i] / self.model.temperature
    }

    fn set(&mut self, i: usize, v: i32) {
        let change = v - self.spins[i];
        if change == 0 {
            return;
        }
        self.energy += self.delta(i, v);
        let n = self.model.n;
        let row = &self.model.couplings[i * n..(i + 1) * n];
        let c = change as f64;
        for (f, j) in self.fields.iter_mut().zip(row) {
            *f += j * c;
        }
        self.spins[i] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn all_states(n: usize) -> impl Iterator<Item = State> {
        (0..(1u32 << n)).map(move |code| {
            State::Discrete((0..n).map(|b| if code >> b & 1 == 1 { 1 } else { -1 }).collect())
        })
    }

    #[test]
    fn two_spin_energy_by_substitution() {
        let glass = SkGlass::from_matrix(2, 1.0, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(glass.energy(&State::Discrete(vec![1, 1])).unwrap(), -0.5);
    }

    #[test]
    fn three_spin_flip_delta_matches_algebra() {
        let (j12, j13, j23) = (0.3, -0.7, 0.4);
        let t = 0.5;
        let glass = SkGlass::from_matrix(3, t, vec![0.0, j12, j13, j12, 0.0, j23, j13, j23, 0.0]).unwrap();
        for s in all_states(3) {
            let v = s.as_discrete().unwrap().to_vec();
            let expected = (2.0 * v[0] as f64 / t) * (j12 * v[1] as f64 + j13 * v[2] as f64);
            let got = glass.coordinate_delta(&s, 0, -v[0]).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn no_op_flip_has_zero_delta() {
        let glass = SkGlass::seeded(5, 1.0, 3).unwrap();
        let s = State::Discrete(vec![1, -1, 1, 1, -1]);
        for i in 0..5 {
            let v = s.as_discrete().unwrap()[i];
            assert_eq!(glass.coordinate_delta(&s, i, v).unwrap(), 0.0);
        }
    }

    #[test]
    fn delta_matches_re_evaluation_on_random_flips() {
        let glass = SkGlass::seeded(16, 1.0, 11).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut s = glass.random_state(&mut rng);
        for _ in 0..100 {
            let i = rng.random_range(0..16);
            let v = -s.as_discrete().unwrap()[i];
            let delta = glass.coordinate_delta(&s, i, v).unwrap();
            let before = glass.energy(&s).unwrap();
            let mut values = s.as_discrete().unwrap().to_vec();
            values[i] = v;
            let next = State::Discrete(values);
            let after = glass.energy(&next).unwrap();
            assert!((after - before - delta).abs() <= 1e-9 * (1.0 + after.abs()));
            s = next;
        }
    }

    #[test]
    fn tracker_follows_full_evaluation() {
        let glass = SkGlass::seeded(20, 0.7, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let s = glass.random_state(&mut rng);
        let mut tracker = glass.tracker(&s).unwrap();
        for _ in 0..500 {
            let i = rng.random_range(0..20);
            let v = -tracker.values()[i];
            let predicted = tracker.delta(i, v);
            let direct = glass.coordinate_delta(&State::Discrete(tracker.values().to_vec()), i, v).unwrap();
            assert!((predicted - direct).abs() < 1e-9);
            tracker.set(i, v);
        }
        let fresh = glass.energy(&State::Discrete(tracker.values().to_vec())).unwrap();
        assert!((tracker.energy() - fresh).abs() < 1e-9);
    }

    #[test]
    fn mirror_symmetry_on_random_states() {
        let glass = SkGlass::seeded(30, 1.0, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let s = glass.random_state(&mut rng);
            let e = glass.energy(&s).unwrap();
            let m = glass.energy(&s.mirrored()).unwrap();
            assert_eq!(e, m);
        }
    }

    #[test]
    fn ground_state_of_sixteen_spins_by_enumeration() {
        // Independent route: full pairwise double sum with explicit i<k loops.
        let n = 16;
        let glass = SkGlass::seeded(n, 1.0, 2024).unwrap();
        let mut best = f64::INFINITY;
        let mut best_direct = f64::INFINITY;
        for s in all_states(n) {
            best = best.min(glass.energy(&s).unwrap());
            let v = s.as_discrete().unwrap();
            let mut e = 0.0;
            for i in 0..n {
                for k in (i + 1)..n {
                    e -= glass.coupling(i, k) * (v[i] * v[k]) as f64;
                }
            }
            best_direct = best_direct.min(e);
        }
        assert!((best - best_direct).abs() < 1e-9);
        // Ground energy of SK with variance 1/N sits near -0.76 N for large N;
        // at N=16 it is of the same order.
        assert!(best < -0.4 * n as f64 && best > -1.2 * n as f64, "{best}");
    }

    #[test]
    fn couplings_have_variance_one_over_n() {
        let n = 200;
        let glass = SkGlass::seeded(n, 1.0, 77).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for i in 0..n {
            for k in (i + 1)..n {
                let j = glass.coupling(i, k);
                sum += j;
                sum_sq += j * j;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let var = sum_sq / count - mean * mean;
        assert!(mean.abs() < 4.0 * (1.0 / n as f64 / count).sqrt());
        assert!((var * n as f64 - 1.0).abs() < 0.05, "{}", var * n as f64);
    }

    #[test]
    fn coupling_csv_round_trip() {
        let glass = SkGlass::seeded(6, 1.0, 8).unwrap();
        let mut buf = Vec::new();
        glass.write_couplings_csv(&mut buf).unwrap();
        let back = SkGlass::read_couplings_csv(6, 1.0, buf.as_slice()).unwrap();
        for i in 0..6 {
            for k in 0..6 {
                assert_eq!(glass.coupling(i, k), back.coupling(i, k));
            }
        }
    }

    #[test]
    fn rejects_off_palette_values() {
        let glass = SkGlass::seeded(3, 1.0, 1).unwrap();
        assert!(glass.energy(&State::Discrete(vec![1, 0, 1])).is_err());
        assert!(glass.coordinate_delta(&State::Discrete(vec![1, 1, 1]), 0, 2).is_err());
        assert!(glass.energy(&State::Continuous(vec![1.0, 1.0, 1.0])).is_err());
    }
}

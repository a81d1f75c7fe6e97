use serde_json::json;

use super::{check_coordinate_change, discrete_values, DeltaTracker, EnergyModel};
use crate::error::{ElmError, Result};
use crate::state::{Palette, State, StateKind};

/// Magnetized Ising model on a periodic `side x side` square lattice:
/// `E(σ) = -(1/T) Σ_<ij> σ_i σ_j - H Σ_i σ_i`.
#[derive(Debug, Clone)]
pub struct IsingModel {
    side: usize,
    temperature: f64,
    field: f64,
    palette: Palette,
    name: String,
}

impl IsingModel {
    pub fn new(side: usize, temperature: f64, field: f64) -> Result<Self> {
        if side < 3 {
            return Err(ElmError::invalid("periodic Ising lattice needs side >= 3"));
        }
        if !(temperature > 0.0 && temperature.is_finite()) || !field.is_finite() {
            return Err(ElmError::invalid("Ising temperature must be positive and field finite"));
        }
        Ok(IsingModel {
            side,
            temperature,
            field,
            palette: Palette::spins(),
            name: format!("ising-{side}x{side}"),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn all_up(&self) -> State {
        State::Discrete(vec![1; self.side * self.side])
    }

    pub fn all_down(&self) -> State {
        State::Discrete(vec![-1; self.side * self.side])
    }

    fn neighbors(&self, i: usize) -> [usize; 4] {
        let l = self.side;
        let (r, c) = (i / l, i % l);
        [
            r * l + (c + 1) % l,
            r * l + (c + l - 1) % l,
            ((r + 1) % l) * l + c,
            ((r + l - 1) % l) * l + c,
        ]
    }

    fn bond_sum(&self, spins: &[i32]) -> f64 {
        let l = self.side;
        let mut sum = 0i64;
        for r in 0..l {
            for c in 0..l {
                let s = spins[r * l + c] as i64;
                sum += s * spins[r * l + (c + 1) % l] as i64;
                sum += s * spins[((r + 1) % l) * l + c] as i64;
            }
        }
        sum as f64
    }

    fn neighbor_sum(&self, spins: &[i32], i: usize) -> i32 {
        self.neighbors(i).iter().map(|&k| spins[k]).sum()
    }

    /// Shifted form `-(1/T) Σ σ_i σ_j + |H| ||σ - σ^±||_1`, which equals
    /// `energy(σ) + N|H|` (σ^+ for H > 0, σ^- for H < 0).
    pub fn penalty_form_energy(&self, s: &State) -> Result<f64> {
        let spins = discrete_values(self, s)?;
        let target = if self.field >= 0.0 { 1 } else { -1 };
        let l1: i64 = spins.iter().map(|&x| (x - target).abs() as i64).sum();
        Ok(-self.bond_sum(spins) / self.temperature + self.field.abs() * l1 as f64)
    }
}

impl EnergyModel for IsingModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.side * self.side
    }

    fn kind(&self) -> StateKind {
        StateKind::Discrete
    }

    fn palette(&self) -> Option<&Palette> {
        Some(&self.palette)
    }

    fn energy(&self, s: &State) -> Result<f64> {
        let spins = discrete_values(self, s)?;
        let magnetization: i64 = spins.iter().map(|&x| x as i64).sum();
        Ok(-self.bond_sum(spins) / self.temperature - self.field * magnetization as f64)
    }

    fn coordinate_delta(&self, s: &State, i: usize, v: i32) -> Result<f64> {
        let spins = check_coordinate_change(self, s, i, v)?;
        let change = (v - spins[i]) as f64;
        Ok(-change * (self.neighbor_sum(spins, i) as f64 / self.temperature + self.field))
    }

    fn tracker(&self, s: &State) -> Result<Box<dyn DeltaTracker + '_>> {
        let spins = discrete_values(self, s)?.to_vec();
        let sums = (0..spins.len()).map(|i| self.neighbor_sum(&spins, i)).collect();
        let energy = self.energy(s)?;
        Ok(Box::new(IsingTracker {
            model: self,
            spins,
            sums,
            energy,
        }))
    }

    fn parameters(&self) -> serde_json::Value {
        json!({
            "family": "ising",
            "side": self.side,
            "temperature": self.temperature,
            "field": self.field,
        })
    }
}

struct IsingTracker<'m> {
    model: &'m IsingModel,
    spins: Vec<i32>,
    sums: Vec<i32>,
    energy: f64,
}

impl DeltaTracker for IsingTracker<'_> {
    fn values(&self) -> &[i32] {
        &self.spins
    }

    fn energy(&self) -> f64 {
        self.energy
    }

    fn delta(&self, i: usize, v: i32) -> f64 {
        -((v - self.spins[i]) as f64) * (self.sums[i] as f64 / self.model.temperature + self.model.field)
    }

    fn set(&mut self, i: usize, v: i32) {
        let change = v - self.spins[i];
        if change == 0 {
            return;
        }
        self.energy += self.delta(i, v);
        for k in self.model.neighbors(i) {
            self.sums[k] += change;
        }
        self.spins[i] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_states(n: usize) -> impl Iterator<Item = State> {
        (0..(1u32 << n)).map(move |code| {
            State::Discrete((0..n).map(|b| if code >> b & 1 == 1 { 1 } else { -1 }).collect())
        })
    }

    #[test]
    fn penalty_form_is_shift_by_n_h_on_three_by_three() {
        for &(t, h) in &[(1.0, 0.3), (2.5, 1.7), (0.4, 0.01)] {
            let model = IsingModel::new(3, t, h).unwrap();
            for s in all_states(9) {
                let shifted = model.energy(&s).unwrap() + 9.0 * h;
                let penalty = model.penalty_form_energy(&s).unwrap();
                assert!((shifted - penalty).abs() < 1e-12, "{shifted} vs {penalty}");
            }
        }
    }

    #[test]
    fn negative_field_penalizes_distance_to_all_down() {
        let model = IsingModel::new(3, 1.0, -0.5).unwrap();
        for s in all_states(9) {
            let shifted = model.energy(&s).unwrap() + 9.0 * 0.5;
            assert!((shifted - model.penalty_form_energy(&s).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_is_mirror_symmetric() {
        let model = IsingModel::new(4, 1.3, 0.0).unwrap();
        for s in all_states(16).step_by(37) {
            assert_eq!(model.energy(&s).unwrap(), model.energy(&s.mirrored()).unwrap());
        }
    }

    #[test]
    fn aligned_states_have_ground_energy() {
        let model = IsingModel::new(10, 1.5, 0.0).unwrap();
        let e = model.energy(&model.all_up()).unwrap();
        assert!((e + 200.0 / 1.5).abs() < 1e-9);
    }

    #[test]
    fn tracker_matches_coordinate_delta() {
        let model = IsingModel::new(5, 0.8, 0.2).unwrap();
        let s = State::Discrete((0..25).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect());
        let mut tracker = model.tracker(&s).unwrap();
        for step in 0..200 {
            let i = (step * 7) % 25;
            let v = -tracker.values()[i];
            let direct = model.coordinate_delta(&State::Discrete(tracker.values().to_vec()), i, v).unwrap();
            assert!((tracker.delta(i, v) - direct).abs() < 1e-12);
            tracker.set(i, v);
        }
        let fresh = model.energy(&State::Discrete(tracker.values().to_vec())).unwrap();
        assert!((fresh - tracker.energy()).abs() < 1e-9);
    }
}

//! Energy models and the built-in landscape families.

mod discretized;
mod double_well;
mod ising;
mod mixture;
mod quadratic;
pub mod relu;
mod sk;
mod spec;

use std::sync::Arc;

pub use discretized::Discretized;
pub use double_well::{DoubleWell, DoubleWellParams};
pub use ising::IsingModel;
pub use mixture::{GaussianComponent, GaussianMixture};
pub use quadratic::QuadraticBowl;
pub use relu::{Activation, ComposedLatentEnergy, DenseLayer, DescriptorEnergy, ReluNetworkSpec};
pub use sk::SkGlass;
pub use spec::LandscapeSpec;

use crate::error::{ElmError, Result};
use crate::state::{Palette, State, StateKind};

/// An immutable, evaluatable energy function over states of one kind and dim.
///
/// Implementations must be safe to evaluate from many threads at once.
pub trait EnergyModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn kind(&self) -> StateKind;

    /// Palette for discrete models, `None` for continuous ones.
    fn palette(&self) -> Option<&Palette> {
        None
    }

    fn energy(&self, s: &State) -> Result<f64>;

    fn has_gradient(&self) -> bool {
        false
    }

    fn gradient(&self, s: &State) -> Result<Vec<f64>> {
        let _ = s;
        Err(ElmError::unsupported(format!("{} has no gradient", self.name())))
    }

    /// `energy(s with s[i] = v) - energy(s)`.
    fn coordinate_delta(&self, s: &State, i: usize, v: i32) -> Result<f64> {
        let values = check_coordinate_change(self, s, i, v)?;
        if values[i] == v {
            return Ok(0.0);
        }
        let mut moved = values.to_vec();
        moved[i] = v;
        Ok(self.energy(&State::Discrete(moved))? - self.energy(s)?)
    }

    /// Incremental evaluator positioned at `s` (discrete models only).
    fn tracker(&self, s: &State) -> Result<Box<dyn DeltaTracker + '_>> {
        check_state(self, s)?;
        let values = s
            .as_discrete()
            .ok_or_else(|| ElmError::unsupported("delta tracking needs a discrete model"))?;
        let energy = self.energy(s)?;
        Ok(Box::new(NaiveTracker {
            model: self,
            values: values.to_vec(),
            energy,
        }))
    }

    /// Dimension of the latent space when the model is a latent-space composition.
    fn latent_dim(&self) -> Option<usize> {
        None
    }

    /// Parameter block echoed into run metadata.
    fn parameters(&self) -> serde_json::Value;
}

pub type SharedModel = Arc<dyn EnergyModel>;

/// Incremental single-coordinate evaluator for discrete models.
///
/// `energy()` is maintained by accumulation and may drift from a fresh
/// evaluation by rounding error.
pub trait DeltaTracker {
    fn values(&self) -> &[i32];
    fn energy(&self) -> f64;
    /// Energy change of setting coordinate `i` to `v`; inputs are not validated.
    fn delta(&self, i: usize, v: i32) -> f64;
    fn set(&mut self, i: usize, v: i32);
}

struct NaiveTracker<'m, M: ?Sized> {
    model: &'m M,
    values: Vec<i32>,
    energy: f64,
}

impl<M: EnergyModel + ?Sized> DeltaTracker for NaiveTracker<'_, M> {
    fn values(&self) -> &[i32] {
        &self.values
    }

    fn energy(&self) -> f64 {
        self.energy
    }

    fn delta(&self, i: usize, v: i32) -> f64 {
        if self.values[i] == v {
            return 0.0;
        }
        let mut moved = self.values.clone();
        moved[i] = v;
        // States handed to the tracker were validated; evaluation of a valid
        // palette state cannot fail for discrete built-ins.
        self.model.energy(&State::Discrete(moved)).map(|e| e - self.energy).unwrap_or(f64::INFINITY)
    }

    fn set(&mut self, i: usize, v: i32) {
        if self.values[i] == v {
            return;
        }
        self.values[i] = v;
        self.energy = self.model.energy(&State::Discrete(self.values.clone())).unwrap_or(f64::INFINITY);
    }
}

/// Checks kind, dim and palette membership of `s` against `model`.
pub fn check_state<M: EnergyModel + ?Sized>(model: &M, s: &State) -> Result<()> {
    if s.kind() != model.kind() {
        return Err(ElmError::invalid(format!(
            "{:?} state given to {:?} model {}",
            s.kind(),
            model.kind(),
            model.name()
        )));
    }
    if s.dim() != model.dim() {
        return Err(ElmError::invalid(format!(
            "state dim {} does not match model {} dim {}",
            s.dim(),
            model.name(),
            model.dim()
        )));
    }
    match s {
        State::Discrete(values) => {
            let palette = model
                .palette()
                .ok_or_else(|| ElmError::invalid("discrete model without palette"))?;
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !palette.contains(**v)) {
                return Err(ElmError::invalid(format!("coordinate {i} value {v} is not in the palette")));
            }
        }
        State::Continuous(values) => {
            if let Some(i) = values.iter().position(|x| !x.is_finite()) {
                return Err(ElmError::invalid(format!("coordinate {i} is not finite")));
            }
        }
    }
    Ok(())
}

fn check_coordinate_change<'s, M: EnergyModel + ?Sized>(
    model: &M,
    s: &'s State,
    i: usize,
    v: i32,
) -> Result<&'s [i32]> {
    check_state(model, s)?;
    let values = s
        .as_discrete()
        .ok_or_else(|| ElmError::unsupported("coordinate deltas need a discrete model"))?;
    if i >= values.len() {
        return Err(ElmError::invalid(format!("coordinate {i} out of range for dim {}", values.len())));
    }
    let palette = model.palette().expect("checked discrete");
    if !palette.contains(v) {
        return Err(ElmError::invalid(format!("value {v} is not in the palette")));
    }
    Ok(values)
}

/// Continuous coordinates of `s` after validating it against `model`.
pub(crate) fn continuous_values<'s, M: EnergyModel + ?Sized>(model: &M, s: &'s State) -> Result<&'s [f64]> {
    check_state(model, s)?;
    s.as_continuous()
        .ok_or_else(|| ElmError::invalid("continuous model given a discrete state"))
}

pub(crate) fn discrete_values<'s, M: EnergyModel + ?Sized>(model: &M, s: &'s State) -> Result<&'s [i32]> {
    check_state(model, s)?;
    s.as_discrete()
        .ok_or_else(|| ElmError::invalid("discrete model given a continuous state"))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Max relative error between the analytic gradient and central differences.
    pub fn gradient_fd_error(model: &dyn EnergyModel, x: &[f64], h: f64) -> f64 {
        let analytic = model.gradient(&State::Continuous(x.to_vec())).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            let fd = (model.energy(&State::Continuous(up)).unwrap()
                - model.energy(&State::Continuous(down)).unwrap())
                / (2.0 * h);
            let scale = analytic[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max((analytic[i] - fd).abs() / scale);
        }
        worst
    }
}

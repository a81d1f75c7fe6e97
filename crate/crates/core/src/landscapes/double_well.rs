use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{continuous_values, EnergyModel};
use crate::error::{ElmError, Result};
use crate::seeding::chain_rng;
use crate::state::{State, StateKind};

/// Parameters of the 1D noisy double well
/// `E(x) = ((x-m)² - a²)² / b + t·(x-m) + c·sin(ω x + φ)`.
///
/// The ripple `(c, ω, φ)` is drawn from `noise_seed`:
/// `c ∈ [amplitude/2, amplitude]`, `ω ∈ [0.75, 1.25]·frequency`, `φ ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellParams {
    /// Half distance between the two wells.
    pub half_width: f64,
    /// Divisor controlling the barrier height `a⁴ / b`.
    pub stiffness: f64,
    #[serde(default)]
    pub center: f64,
    /// Linear tilt; positive tilt deepens the left well.
    #[serde(default)]
    pub tilt: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default = "default_frequency")]
    pub noise_frequency: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

fn default_frequency() -> f64 {
    6.0
}

impl Default for DoubleWellParams {
    fn default() -> Self {
        DoubleWellParams {
            half_width: 1.0,
            stiffness: 1.0,
            center: 0.0,
            tilt: 0.0,
            noise_amplitude: 0.0,
            noise_frequency: default_frequency(),
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DoubleWell {
    params: DoubleWellParams,
    amplitude: f64,
    omega: f64,
    phase: f64,
}

impl DoubleWell {
    pub fn new(params: DoubleWellParams) -> Result<Self> {
        if !(params.half_width > 0.0) || !(params.stiffness > 0.0) || params.noise_amplitude < 0.0 {
            return Err(ElmError::invalid("double well needs positive half_width and stiffness"));
        }
        let mut rng = chain_rng(params.noise_seed, &[0xd0_0b1e]);
        let (amplitude, omega, phase) = if params.noise_amplitude > 0.0 {
            (
                params.noise_amplitude * rng.random_range(0.5..=1.0),
                params.noise_frequency * rng.random_range(0.75..=1.25),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        Ok(DoubleWell { params, amplitude, omega, phase })
    }

    pub fn params(&self) -> &DoubleWellParams {
        &self.params
    }

    pub fn energy_at(&self, x: f64) -> f64 {
        let p = &self.params;
        let u = x - p.center;
        let q = u * u - p.half_width * p.half_width;
        q * q / p.stiffness + p.tilt * u + self.amplitude * (self.omega * x + self.phase).sin()
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        let p = &self.params;
        let u = x - p.center;
        let q = u * u - p.half_width * p.half_width;
        4.0 * q * u / p.stiffness + p.tilt + self.amplitude * self.omega * (self.omega * x + self.phase).cos()
    }
}

impl EnergyModel for DoubleWell {
    fn name(&self) -> &str {
        "double-well"
    }

    fn dim(&self) -> usize {
        1
    }

    fn kind(&self) -> StateKind {
        StateKind::Continuous
    }

    fn energy(&self, s: &State) -> Result<f64> {
        Ok(self.energy_at(continuous_values(self, s)?[0]))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, s: &State) -> Result<Vec<f64>> {
        Ok(vec![self.derivative_at(continuous_values(self, s)?[0])])
    }

    fn parameters(&self) -> serde_json::Value {
        json!({
            "family": "double_well",
            "params": self.params,
            "ripple": { "amplitude": self.amplitude, "omega": self.omega, "phase": self.phase },
        })
    }
}

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{continuous_values, EnergyModel};
use crate::error::{ElmError, Result};
use crate::state::{State, StateKind};

/// One axis-aligned Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-coordinate standard deviations.
    pub scale: Vec<f64>,
}

/// Negative log density of a Gaussian mixture, `-log Σ w_i N(x; μ_i, diag(s_i²))`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
    // log w_i - Σ log s_i - (d/2) log 2π, per component
    log_norms: Vec<f64>,
    name: String,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| ElmError::invalid("mixture needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(ElmError::invalid("mixture components need dim >= 1"));
        }
        let mut log_norms = Vec::with_capacity(components.len());
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.scale.len() != dim {
                return Err(ElmError::invalid(format!("component {k} has inconsistent dimension")));
            }
            if !(c.weight > 0.0) || c.scale.iter().any(|s| !(*s > 0.0)) {
                return Err(ElmError::invalid(format!("component {k} needs positive weight and scales")));
            }
            let log_det: f64 = c.scale.iter().map(|s| s.ln()).sum();
            log_norms.push(c.weight.ln() - log_det - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln());
        }
        Ok(GaussianMixture {
            dim,
            components,
            log_norms,
            name: format!("gaussian-mixture-{dim}d"),
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    fn log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.log_norms)
            .map(|(c, norm)| {
                let quad: f64 = x
                    .iter()
                    .zip(&c.mean)
                    .zip(&c.scale)
                    .map(|((xi, m), s)| {
                        let z = (xi - m) / s;
                        z * z
                    })
                    .sum();
                norm - 0.5 * quad
            })
            .collect()
    }

    /// Energy at a raw coordinate slice, without state validation.
    pub fn energy_at(&self, x: &[f64]) -> f64 {
        let terms = self.log_terms(x);
        -log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

impl EnergyModel for GaussianMixture {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> StateKind {
        StateKind::Continuous
    }

    fn energy(&self, s: &State) -> Result<f64> {
        let x = continuous_values(self, s)?;
        Ok(self.energy_at(x))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, s: &State) -> Result<Vec<f64>> {
        let x = continuous_values(self, s)?;
        let terms = self.log_terms(x);
        let lse = log_sum_exp(&terms);
        let mut grad = vec![0.0; self.dim];
        for (c, t) in self.components.iter().zip(&terms) {
            let r = (t - lse).exp();
            for d in 0..self.dim {
                grad[d] += r * (x[d] - c.mean[d]) / (c.scale[d] * c.scale[d]);
            }
        }
        Ok(grad)
    }

    fn parameters(&self) -> serde_json::Value {
        json!({ "family": "gaussian_mixture", "components": self.components })
    }
}

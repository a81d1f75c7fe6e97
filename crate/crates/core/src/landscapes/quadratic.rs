use serde_json::json;

use super::{continuous_values, EnergyModel};
use crate::error::{ElmError, Result};
use crate::state::{State, StateKind};

/// `E(x) = ||x - c||² / (2σ²)`, a single convex bowl.
#[derive(Debug, Clone)]
pub struct QuadraticBowl {
    center: Vec<f64>,
    variance: f64,
}

impl QuadraticBowl {
    pub fn new(center: Vec<f64>, variance: f64) -> Result<Self> {
        if center.is_empty() || !(variance > 0.0) {
            return Err(ElmError::invalid("quadratic bowl needs dim >= 1 and positive variance"));
        }
        Ok(QuadraticBowl { center, variance })
    }

    pub fn centered(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], variance)
    }
}

impl EnergyModel for QuadraticBowl {
    fn name(&self) -> &str {
        "quadratic-bowl"
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    fn kind(&self) -> StateKind {
        StateKind::Continuous
    }

    fn energy(&self, s: &State) -> Result<f64> {
        let x = continuous_values(self, s)?;
        let sq: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        Ok(sq / (2.0 * self.variance))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, s: &State) -> Result<Vec<f64>> {
        let x = continuous_values(self, s)?;
        Ok(x.iter().zip(&self.center).map(|(a, c)| (a - c) / self.variance).collect())
    }

    fn parameters(&self) -> serde_json::Value {
        json!({ "family": "quadratic", "center": self.center, "variance": self.variance })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_is_x_over_variance() {
        let bowl = QuadraticBowl::centered(3, 2.0).unwrap();
        let g = bowl.gradient(&State::Continuous(vec![1.0, -4.0, 0.5])).unwrap();
        assert_eq!(g, vec![0.5, -2.0, 0.25]);
        let e = bowl.energy(&State::Continuous(vec![1.0, -4.0, 0.5])).unwrap();
        assert!((e - 17.25 / 4.0).abs() < 1e-12);
    }
}

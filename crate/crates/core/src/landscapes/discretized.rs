use serde_json::json;

use super::{discrete_values, EnergyModel, SharedModel};
use crate::error::{ElmError, Result};
use crate::state::{Palette, State, StateKind};

/// A continuous model restricted to palette values on every coordinate,
/// e.g. an image energy over 8 grey levels.
pub struct Discretized {
    inner: SharedModel,
    palette: Palette,
    name: String,
}

impl Discretized {
    pub fn new(inner: SharedModel, palette: Palette) -> Result<Self> {
        if inner.kind() != StateKind::Continuous {
            return Err(ElmError::invalid("only continuous models can be discretized"));
        }
        let name = format!("{}-discretized{}", inner.name(), palette.len());
        Ok(Discretized { inner, palette, name })
    }

    pub fn inner(&self) -> &SharedModel {
        &self.inner
    }
}

impl EnergyModel for Discretized {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn kind(&self) -> StateKind {
        StateKind::Discrete
    }

    fn palette(&self) -> Option<&Palette> {
        Some(&self.palette)
    }

    fn energy(&self, s: &State) -> Result<f64> {
        let values = discrete_values(self, s)?;
        self.inner.energy(&State::Continuous(values.iter().map(|&v| v as f64).collect()))
    }

    fn parameters(&self) -> serde_json::Value {
        json!({ "family": "discretized", "palette": self.palette.values(), "inner": self.inner.parameters() })
    }
}

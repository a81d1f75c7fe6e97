//! Points in a landscape.
//!
//! Discrete states hold integer palette values (spins as `±1`, pixel levels as
//! `0..=255`). Continuous states hold raw reals. Distances are always Euclidean
//! on the value vector, so a spin flip moves a discrete state by exactly 2.

use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Discrete,
    Continuous,
}

/// Finite set of values a discrete coordinate may take, shared by all coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Palette(Vec<i32>);

impl Palette {
    /// Builds a palette from distinct values; order is normalized to ascending.
    pub fn new(mut values: Vec<i32>) -> Result<Self> {
        if values.is_empty() {
            return Err(ElmError::invalid("palette must contain at least one value"));
        }
        values.sort_unstable();
        values.dedup();
        Ok(Palette(values))
    }

    pub fn spins() -> Self {
        Palette(vec![-1, 1])
    }

    /// `levels` grey values evenly spanning 0..=255, rounded to integers.
    pub fn pixel_levels(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(ElmError::invalid("pixel palette needs at least 2 levels"));
        }
        let step = 255.0 / (levels - 1) as f64;
        Palette::new((0..levels).map(|k| (k as f64 * step).round() as i32).collect())
    }

    pub fn values(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: i32) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn index_of(&self, v: i32) -> Option<usize> {
        self.0.binary_search(&v).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum State {
    Discrete(Vec<i32>),
    Continuous(Vec<f64>),
}

impl State {
    pub fn kind(&self) -> StateKind {
        match self {
            State::Discrete(_) => StateKind::Discrete,
            State::Continuous(_) => StateKind::Continuous,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            State::Discrete(v) => v.len(),
            State::Continuous(v) => v.len(),
        }
    }

    pub fn as_discrete(&self) -> Option<&[i32]> {
        match self {
            State::Discrete(v) => Some(v),
            State::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            State::Continuous(v) => Some(v),
            State::Discrete(_) => None,
        }
    }

    /// Value vector as reals, copying discrete values.
    pub fn to_reals(&self) -> Vec<f64> {
        match self {
            State::Discrete(v) => v.iter().map(|&x| x as f64).collect(),
            State::Continuous(v) => v.clone(),
        }
    }

    fn check_comparable(&self, other: &State) -> Result<()> {
        if self.kind() != other.kind() || self.dim() != other.dim() {
            return Err(ElmError::invalid(format!(
                "cannot compare {:?} state of dim {} with {:?} state of dim {}",
                self.kind(),
                self.dim(),
                other.kind(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn squared_distance(&self, other: &State) -> Result<f64> {
        self.check_comparable(other)?;
        Ok(match (self, other) {
            (State::Discrete(a), State::Discrete(b)) => discrete_sq_distance(a, b) as f64,
            (State::Continuous(a), State::Continuous(b)) => continuous_sq_distance(a, b),
            _ => unreachable!("kinds checked above"),
        })
    }

    /// Euclidean distance; errors when kinds or dims differ.
    pub fn distance(&self, other: &State) -> Result<f64> {
        Ok(self.squared_distance(other)?.sqrt())
    }

    /// Number of coordinates whose values differ.
    pub fn hamming(&self, other: &State) -> Result<usize> {
        self.check_comparable(other)?;
        Ok(match (self, other) {
            (State::Discrete(a), State::Discrete(b)) => a.iter().zip(b).filter(|(x, y)| x != y).count(),
            (State::Continuous(a), State::Continuous(b)) => a.iter().zip(b).filter(|(x, y)| x != y).count(),
            _ => unreachable!("kinds checked above"),
        })
    }

    /// Negated state (the mirror image of a spin configuration).
    pub fn mirrored(&self) -> State {
        match self {
            State::Discrete(v) => State::Discrete(v.iter().map(|x| -x).collect()),
            State::Continuous(v) => State::Continuous(v.iter().map(|x| -x).collect()),
        }
    }
}

pub(crate) fn discrete_sq_distance(a: &[i32], b: &[i32]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y) as i64;
            d * d
        })
        .sum()
}

pub(crate) fn continuous_sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

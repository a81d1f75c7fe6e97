//! Deterministic local minimization.

use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::landscapes::{check_state, DeltaTracker, EnergyModel};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeConfig {
    /// Gradient-norm tolerance for continuous descent.
    #[serde(default = "default_g_tol")]
    pub g_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_g_tol() -> f64 {
    1e-6
}

fn default_max_steps() -> usize {
    100_000
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig { g_tol: default_g_tol(), max_steps: default_max_steps() }
    }
}

/// Discrete models: best-improvement single-coordinate descent until no
/// change lowers the energy. Continuous models: gradient descent with a
/// backtracking line search until `||∇E|| < g_tol` or `max_steps`.
pub fn local_minimize(model: &dyn EnergyModel, s: &State, cfg: &MinimizeConfig) -> Result<State> {
    check_state(model, s)?;
    match s {
        State::Discrete(_) => {
            let mut tracker = model.tracker(s)?;
            greedy_descend(tracker.as_mut(), model.palette().expect("discrete").values());
            Ok(State::Discrete(tracker.values().to_vec()))
        }
        State::Continuous(x) => {
            if !model.has_gradient() {
                return Err(ElmError::unsupported(format!("{} has no gradient to descend", model.name())));
            }
            gradient_descent(model, x.clone(), cfg).map(State::Continuous)
        }
    }
}

/// Applies the most negative single-coordinate change until none is negative.
/// Ties go to the lowest coordinate, then the lowest palette value.
pub fn greedy_descend(tracker: &mut dyn DeltaTracker, palette: &[i32]) -> usize {
    let dim = tracker.values().len();
    let mut moves = 0;
    loop {
        let mut best = (0.0, usize::MAX, 0);
        for i in 0..dim {
            let current = tracker.values()[i];
            for &v in palette {
                if v == current {
                    continue;
                }
                let d = tracker.delta(i, v);
                if d < best.0 {
                    best = (d, i, v);
                }
            }
        }
        if best.1 == usize::MAX {
            return moves;
        }
        tracker.set(best.1, best.2);
        moves += 1;
    }
}

fn gradient_descent(model: &dyn EnergyModel, mut x: Vec<f64>, cfg: &MinimizeConfig) -> Result<Vec<f64>> {
    const ARMIJO: f64 = 1e-4;
    let eval = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let s = State::Continuous(x.to_vec());
        Ok((model.energy(&s)?, model.gradient(&s)?))
    };
    let (mut e, mut g) = eval(&x)?;
    let mut t = 1.0;
    for _ in 0..cfg.max_steps {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2.sqrt() < cfg.g_tol {
            break;
        }
        let mut accepted = false;
        while t > 1e-300 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let e_trial = model.energy(&State::Continuous(trial.clone()))?;
            if e_trial <= e - ARMIJO * t * g2 {
                x = trial;
                e = e_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        g = eval(&x)?.1;
        t *= 2.0;
    }
    Ok(x)
}

//! Local MCMC kernels on `E/T`, optionally augmented by the magnetization
//! penalty `α ||x - x*||₂`.
//!
//! One Gibbs iteration is a full sequential sweep over coordinates; one
//! Metropolis or Langevin iteration is a single proposal.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::landscapes::{check_state, DeltaTracker, EnergyModel};
use crate::seeding::ChainRng;
use crate::state::{continuous_sq_distance, discrete_sq_distance, State, StateKind};

/// Distance penalty pulling a chain toward `target` with strength `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Magnetization {
    pub target: State,
    pub alpha: f64,
}

impl Magnetization {
    pub fn new(target: State, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ElmError::invalid(format!("magnetization strength must be finite and >= 0, got {alpha}")));
        }
        Ok(Magnetization { target, alpha })
    }

    fn check<M: EnergyModel + ?Sized>(&self, model: &M) -> Result<()> {
        check_state(model, &self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Gibbs,
    RwMetropolis,
    Langevin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kernel: Kernel,
    pub temperature: f64,
    /// Proposal scale ε for the continuous kernels; ignored by Gibbs.
    #[serde(default = "default_step")]
    pub step_size: f64,
}

fn default_step() -> f64 {
    0.05
}

impl SamplerConfig {
    pub fn gibbs(temperature: f64) -> Self {
        SamplerConfig { kernel: Kernel::Gibbs, temperature, step_size: default_step() }
    }

    pub fn rw_metropolis(temperature: f64, step_size: f64) -> Self {
        SamplerConfig { kernel: Kernel::RwMetropolis, temperature, step_size }
    }

    pub fn langevin(temperature: f64, step_size: f64) -> Self {
        SamplerConfig { kernel: Kernel::Langevin, temperature, step_size }
    }

    pub fn validate<M: EnergyModel + ?Sized>(&self, model: &M) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ElmError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        match (self.kernel, model.kind()) {
            (Kernel::Gibbs, StateKind::Discrete) => Ok(()),
            (Kernel::Gibbs, StateKind::Continuous) => {
                Err(ElmError::unsupported("Gibbs sweeps need a discrete model"))
            }
            (_, StateKind::Discrete) => Err(ElmError::unsupported(format!("{:?} needs a continuous model", self.kernel))),
            (Kernel::Langevin, _) if !model.has_gradient() => {
                Err(ElmError::unsupported(format!("Langevin needs a gradient; {} has none", model.name())))
            }
            _ if !(self.step_size > 0.0 && self.step_size.is_finite()) => {
                Err(ElmError::Config(format!("step size must be positive, got {}", self.step_size)))
            }
            _ => Ok(()),
        }
    }
}

/// A state the chain moved to, reported to visit observers.
#[derive(Debug, Clone, Copy)]
pub enum Visit<'a> {
    Discrete(&'a [i32]),
    Continuous(&'a [f64]),
}

impl Visit<'_> {
    pub fn to_state(self) -> State {
        match self {
            Visit::Discrete(v) => State::Discrete(v.to_vec()),
            Visit::Continuous(v) => State::Continuous(v.to_vec()),
        }
    }
}

enum Position<'m> {
    Discrete {
        tracker: Box<dyn DeltaTracker + 'm>,
        // Squared distance to the magnetization target (exact for integer values).
        dist2: i64,
        weights: Vec<f64>,
    },
    Continuous {
        x: Vec<f64>,
        energy: f64,
        dist: f64,
    },
}

/// A single Markov chain owning its state and generator.
pub struct Chain<'m> {
    model: &'m dyn EnergyModel,
    config: SamplerConfig,
    mag: Option<Magnetization>,
    rng: ChainRng,
    position: Position<'m>,
}

impl<'m> Chain<'m> {
    pub fn new(
        model: &'m dyn EnergyModel,
        start: &State,
        config: SamplerConfig,
        mag: Option<Magnetization>,
        rng: ChainRng,
    ) -> Result<Self> {
        config.validate(model)?;
        check_state(model, start)?;
        if let Some(m) = &mag {
            m.check(model)?;
        }
        let position = match start {
            State::Discrete(values) => {
                let dist2 = mag
                    .as_ref()
                    .map(|m| discrete_sq_distance(values, m.target.as_discrete().expect("checked")))
                    .unwrap_or(0);
                let palette_len = model.palette().map_or(0, |p| p.len());
                Position::Discrete { tracker: model.tracker(start)?, dist2, weights: vec![0.0; palette_len] }
            }
            State::Continuous(x) => {
                let dist = mag
                    .as_ref()
                    .map(|m| continuous_sq_distance(x, m.target.as_continuous().expect("checked")).sqrt())
                    .unwrap_or(0.0);
                Position::Continuous { x: x.clone(), energy: model.energy(start)?, dist }
            }
        };
        Ok(Chain { model, config, mag, rng, position })
    }

    pub fn state(&self) -> State {
        match &self.position {
            Position::Discrete { tracker, .. } => State::Discrete(tracker.values().to_vec()),
            Position::Continuous { x, .. } => State::Continuous(x.clone()),
        }
    }

    /// Energy of the current state (incrementally tracked for discrete models).
    pub fn energy(&self) -> f64 {
        match &self.position {
            Position::Discrete { tracker, .. } => tracker.energy(),
            Position::Continuous { energy, .. } => *energy,
        }
    }

    /// Euclidean distance to the magnetization target, 0 without one.
    pub fn distance_to_target(&self) -> f64 {
        match &self.position {
            Position::Discrete { dist2, .. } => (*dist2 as f64).sqrt(),
            Position::Continuous { dist, .. } => *dist,
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// One iteration; `on_visit` sees every state the chain moves into, with its energy.
    /// Returns whether the state changed.
    pub fn step_with<F: FnMut(Visit<'_>, f64)>(&mut self, mut on_visit: F) -> Result<bool> {
        let temperature = self.config.temperature;
        let alpha = self.mag.as_ref().map_or(0.0, |m| m.alpha);
        match &mut self.position {
            Position::Discrete { tracker, dist2, weights } => {
                let target = self.mag.as_ref().and_then(|m| m.target.as_discrete());
                let palette = self.model.palette().expect("discrete model has palette").values();
                Ok(gibbs_sweep_tracked(
                    tracker.as_mut(),
                    palette,
                    temperature,
                    alpha,
                    target,
                    dist2,
                    weights,
                    &mut self.rng,
                    &mut on_visit,
                ))
            }
            Position::Continuous { x, energy, dist } => {
                let target = self.mag.as_ref().and_then(|m| m.target.as_continuous());
                let step = self.config.step_size;
                let moved = match self.config.kernel {
                    Kernel::RwMetropolis => {
                        metropolis_move(self.model, x, energy, dist, temperature, step, alpha, target, &mut self.rng)?
                    }
                    Kernel::Langevin => {
                        langevin_move(self.model, x, energy, dist, temperature, step, alpha, target, &mut self.rng)?;
                        true
                    }
                    Kernel::Gibbs => unreachable!("validated at construction"),
                };
                if moved {
                    on_visit(Visit::Continuous(x), *energy);
                }
                Ok(moved)
            }
        }
    }

    pub fn step(&mut self) -> Result<bool> {
        self.step_with(|_, _| {})
    }
}

#[allow(clippy::too_many_arguments)]
fn gibbs_sweep_tracked<R: Rng, F: FnMut(Visit<'_>, f64)>(
    tracker: &mut dyn DeltaTracker,
    palette: &[i32],
    temperature: f64,
    alpha: f64,
    target: Option<&[i32]>,
    dist2: &mut i64,
    weights: &mut [f64],
    rng: &mut R,
    on_visit: &mut F,
) -> bool {
    let dim = tracker.values().len();
    let mut changed = false;
    for i in 0..dim {
        let current = tracker.values()[i];
        let u: f64 = rng.random();
        if palette.len() < 2 {
            continue;
        }
        let (t_i, rest) = match target {
            Some(t) => {
                let d = (current - t[i]) as i64;
                (t[i], *dist2 - d * d)
            }
            None => (0, 0),
        };
        let mut min = f64::INFINITY;
        for (w, &v) in weights.iter_mut().zip(palette) {
            let mut e = tracker.delta(i, v) / temperature;
            if alpha != 0.0 {
                let d = (v - t_i) as i64;
                e += alpha * ((rest + d * d) as f64).sqrt();
            }
            *w = e;
            min = min.min(e);
        }
        let mut total = 0.0;
        for w in weights.iter_mut() {
            *w = (-(*w - min)).exp();
            total += *w;
        }
        let mut threshold = u * total;
        let mut chosen = palette.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if threshold < *w {
                chosen = k;
                break;
            }
            threshold -= w;
        }
        let v = palette[chosen];
        if v != current {
            tracker.set(i, v);
            if target.is_some() {
                let d = (v - t_i) as i64;
                *dist2 = rest + d * d;
            }
            changed = true;
            on_visit(Visit::Discrete(tracker.values()), tracker.energy());
        }
    }
    changed
}

fn distance_to(x: &[f64], target: Option<&[f64]>) -> f64 {
    target.map_or(0.0, |t| continuous_sq_distance(x, t).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn metropolis_move<R: Rng>(
    model: &dyn EnergyModel,
    x: &mut Vec<f64>,
    energy: &mut f64,
    dist: &mut f64,
    temperature: f64,
    step: f64,
    alpha: f64,
    target: Option<&[f64]>,
    rng: &mut R,
) -> Result<bool> {
    let proposal: Vec<f64> = x
        .iter()
        .map(|xi| {
            let g: f64 = rng.sample(StandardNormal);
            xi + step * g
        })
        .collect();
    let u: f64 = rng.random();
    let proposed_state = State::Continuous(proposal);
    let proposed_energy = model.energy(&proposed_state)?;
    let proposal = match proposed_state {
        State::Continuous(v) => v,
        State::Discrete(_) => unreachable!(),
    };
    let mut log_ratio = (proposed_energy - *energy) / temperature;
    let mut proposed_dist = 0.0;
    if alpha != 0.0 {
        proposed_dist = distance_to(&proposal, target);
        log_ratio += alpha * (proposed_dist - *dist);
    }
    if log_ratio <= 0.0 || u < (-log_ratio).exp() {
        *x = proposal;
        *energy = proposed_energy;
        if alpha != 0.0 {
            *dist = proposed_dist;
        } else if target.is_some() {
            *dist = distance_to(x, target);
        }
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Drift of the magnetization term: `α (x - x*) / ||x - x*||`, zero at the target.
fn magnetization_drift(x: &[f64], target: &[f64], alpha: f64) -> Vec<f64> {
    let norm = continuous_sq_distance(x, target).sqrt();
    if norm < 1e-12 {
        return vec![0.0; x.len()];
    }
    x.iter().zip(target).map(|(a, t)| alpha * (a - t) / norm).collect()
}

#[allow(clippy::too_many_arguments)]
fn langevin_move<R: Rng>(
    model: &dyn EnergyModel,
    x: &mut Vec<f64>,
    energy: &mut f64,
    dist: &mut f64,
    temperature: f64,
    step: f64,
    alpha: f64,
    target: Option<&[f64]>,
    rng: &mut R,
) -> Result<()> {
    let state = State::Continuous(std::mem::take(x));
    let grad = model.gradient(&state)?;
    let mut next = match state {
        State::Continuous(v) => v,
        State::Discrete(_) => unreachable!(),
    };
    let half = 0.5 * step * step;
    let mag = match target {
        Some(t) if alpha != 0.0 => Some(magnetization_drift(&next, t, alpha)),
        _ => None,
    };
    for (k, xi) in next.iter_mut().enumerate() {
        let mut drift = grad[k] / temperature;
        if let Some(m) = &mag {
            drift += m[k];
        }
        let g: f64 = rng.sample(StandardNormal);
        *xi = *xi - half * drift + step * g;
    }
    let moved = State::Continuous(next);
    *energy = model.energy(&moved)?;
    *x = match moved {
        State::Continuous(v) => v,
        State::Discrete(_) => unreachable!(),
    };
    *dist = distance_to(x, target);
    Ok(())
}

/// One sequential Gibbs sweep from `s`.
pub fn gibbs_sweep<R: Rng>(
    model: &dyn EnergyModel,
    s: &State,
    temperature: f64,
    mag: Option<&Magnetization>,
    rng: &mut R,
) -> Result<State> {
    SamplerConfig::gibbs(temperature).validate(model)?;
    check_state(model, s)?;
    let target = match mag {
        Some(m) => {
            m.check(model)?;
            m.target.as_discrete()
        }
        None => None,
    };
    let mut tracker = model.tracker(s)?;
    let mut dist2 = target.map_or(0, |t| discrete_sq_distance(s.as_discrete().expect("checked"), t));
    let palette = model.palette().expect("discrete").values();
    let mut weights = vec![0.0; palette.len()];
    gibbs_sweep_tracked(
        tracker.as_mut(),
        palette,
        temperature,
        mag.map_or(0.0, |m| m.alpha),
        target,
        &mut dist2,
        &mut weights,
        rng,
        &mut |_, _| {},
    );
    Ok(State::Discrete(tracker.values().to_vec()))
}

/// One random-walk Metropolis proposal; returns the new state and whether it was accepted.
pub fn rw_metropolis_step<R: Rng>(
    model: &dyn EnergyModel,
    s: &State,
    temperature: f64,
    step: f64,
    mag: Option<&Magnetization>,
    rng: &mut R,
) -> Result<(State, bool)> {
    SamplerConfig::rw_metropolis(temperature, step).validate(model)?;
    check_state(model, s)?;
    let target = match mag {
        Some(m) => {
            m.check(model)?;
            m.target.as_continuous()
        }
        None => None,
    };
    let mut x = s.as_continuous().expect("checked").to_vec();
    let mut energy = model.energy(s)?;
    let mut dist = distance_to(&x, target);
    let accepted = metropolis_move(
        model,
        &mut x,
        &mut energy,
        &mut dist,
        temperature,
        step,
        mag.map_or(0.0, |m| m.alpha),
        target,
        rng,
    )?;
    Ok((State::Continuous(x), accepted))
}

/// One unadjusted Langevin update
/// `x' = x - (ε²/2)(∇E/T + α (x-x*)/||x-x*||) + ε g`.
pub fn langevin_step<R: Rng>(
    model: &dyn EnergyModel,
    s: &State,
    temperature: f64,
    step: f64,
    mag: Option<&Magnetization>,
    rng: &mut R,
) -> Result<State> {
    SamplerConfig::langevin(temperature, step).validate(model)?;
    check_state(model, s)?;
    let target = match mag {
        Some(m) => {
            m.check(model)?;
            m.target.as_continuous()
        }
        None => None,
    };
    let mut x = s.as_continuous().expect("checked").to_vec();
    let mut energy = model.energy(s)?;
    let mut dist = distance_to(&x, target);
    langevin_move(
        model,
        &mut x,
        &mut energy,
        &mut dist,
        temperature,
        step,
        mag.map_or(0.0, |m| m.alpha),
        target,
        rng,
    )?;
    Ok(State::Continuous(x))
}

#[derive(Debug, Serialize)]
struct TraceLine {
    step: u64,
    energy: f64,
    distance: f64,
}

/// JSON-lines trace of `(step, energy, distance)` written every `stride` steps.
pub struct TraceWriter<W: Write> {
    out: W,
    stride: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, stride: u64) -> Self {
        TraceWriter { out, stride: stride.max(1) }
    }

    pub fn record(&mut self, step: u64, energy: f64, distance: f64) -> Result<()> {
        if step % self.stride == 0 {
            serde_json::to_writer(&mut self.out, &TraceLine { step, energy, distance })?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Runs `steps` iterations, optionally tracing; returns the final state.
pub fn run_chain<W: Write>(chain: &mut Chain<'_>, steps: u64, mut trace: Option<&mut TraceWriter<W>>) -> Result<State> {
    for step in 1..=steps {
        chain.step()?;
        if let Some(t) = trace.as_deref_mut() {
            t.record(step, chain.energy(), chain.distance_to_target())?;
        }
    }
    Ok(chain.state())
}

//! Attraction-Diffusion trials, metastable-boundary sweeps and AD paths.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::landscapes::{check_state, EnergyModel};
use crate::samplers::{Chain, Kernel, Magnetization, SamplerConfig};
use crate::seeding::{chain_rng, derive_seed, ChainRng};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdParams {
    pub temperature: f64,
    pub alpha: f64,
    /// Success radius in state-space distance.
    #[serde(default)]
    pub delta: f64,
    /// Iterations without a new best distance before giving up.
    pub improvement_limit: u64,
    /// Hard cap on iterations; `None` means `200 * improvement_limit`.
    #[serde(default)]
    pub max_iters: Option<u64>,
    pub kernel: Kernel,
    #[serde(default = "default_step")]
    pub step_size: f64,
}

fn default_step() -> f64 {
    0.05
}

impl AdParams {
    pub fn gibbs(temperature: f64, alpha: f64, improvement_limit: u64) -> Self {
        AdParams {
            temperature,
            alpha,
            delta: 0.0,
            improvement_limit,
            max_iters: None,
            kernel: Kernel::Gibbs,
            step_size: default_step(),
        }
    }

    pub fn continuous(kernel: Kernel, temperature: f64, alpha: f64, delta: f64, step_size: f64, improvement_limit: u64) -> Self {
        AdParams { temperature, alpha, delta, improvement_limit, max_iters: None, kernel, step_size }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        AdParams { alpha, ..self.clone() }
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        AdParams { temperature, ..self.clone() }
    }

    pub fn iteration_cap(&self) -> u64 {
        self.max_iters.unwrap_or(200 * self.improvement_limit)
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { kernel: self.kernel, temperature: self.temperature, step_size: self.step_size }
    }

    pub fn validate<M: EnergyModel + ?Sized>(&self, model: &M) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(ElmError::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.improvement_limit == 0 {
            return Err(ElmError::Config("improvement limit must be >= 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ElmError::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        self.sampler().validate(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub state: State,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdResult {
    pub success: bool,
    pub iterations: u64,
    pub best_distance: f64,
    /// Highest raw energy visited; set only on success.
    pub barrier: Option<f64>,
    /// Running maximum of raw energy, kept on failure too.
    pub max_energy: f64,
    /// Every visited state (discrete chains record each coordinate change),
    /// closed by the target on success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<PathPoint>>,
    pub terminal: State,
}

/// One AD trial from `start` toward `target`.
pub fn ad_trial(
    model: &dyn EnergyModel,
    start: &State,
    target: &State,
    params: &AdParams,
    rng: ChainRng,
    record_path: bool,
) -> Result<AdResult> {
    params.validate(model)?;
    check_state(model, target)?;
    let target_energy = model.energy(target)?;
    let mag = Magnetization::new(target.clone(), params.alpha)?;
    let mut chain = Chain::new(model, start, params.sampler(), Some(mag), rng)?;

    let mut max_energy = chain.energy();
    let mut path = record_path.then(|| vec![PathPoint { state: start.clone(), energy: max_energy }]);
    let mut best = chain.distance_to_target();
    let finish = |success: bool, iterations: u64, best: f64, max_energy: f64, mut path: Option<Vec<PathPoint>>, terminal: State| {
        let barrier = success.then(|| max_energy.max(target_energy));
        if success {
            if let Some(p) = path.as_mut() {
                if p.last().map(|pt| &pt.state) != Some(target) {
                    p.push(PathPoint { state: target.clone(), energy: target_energy });
                }
            }
        }
        AdResult { success, iterations, best_distance: best, barrier, max_energy, path, terminal }
    };
    if best <= params.delta {
        return Ok(finish(true, 0, best, max_energy, path, chain.state()));
    }

    let cap = params.iteration_cap();
    let mut stale = 0u64;
    let mut iterations = 0u64;
    while iterations < cap {
        chain.step_with(|visit, energy| {
            if energy > max_energy {
                max_energy = energy;
            }
            if let Some(p) = path.as_mut() {
                p.push(PathPoint { state: visit.to_state(), energy });
            }
        })?;
        iterations += 1;
        let d = chain.distance_to_target();
        if d <= params.delta {
            return Ok(finish(true, iterations, d.min(best), max_energy, path, chain.state()));
        }
        if d < best {
            best = d;
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.improvement_limit {
                break;
            }
        }
    }
    Ok(finish(false, iterations, best, max_energy, path, chain.state()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AToB,
    BToA,
}

impl Direction {
    pub fn tag(self) -> u64 {
        match self {
            Direction::AToB => 0,
            Direction::BToA => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::AToB => "a->b",
            Direction::BToA => "b->a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alpha_init: f64,
    #[serde(default = "default_decrement")]
    pub decrement: f64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// The descent stops (boundary below range) once α falls under this.
    #[serde(default = "default_alpha_floor")]
    pub alpha_floor: f64,
}

fn default_decrement() -> f64 {
    0.03
}

fn default_trials() -> u32 {
    20
}

fn default_alpha_floor() -> f64 {
    1e-4
}

impl SweepConfig {
    pub fn new(alpha_init: f64) -> Self {
        SweepConfig {
            alpha_init,
            decrement: default_decrement(),
            trials: default_trials(),
            alpha_floor: default_alpha_floor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "kebab-case")]
pub enum Boundary {
    /// Smallest α on the ladder with at least one success; the next rung had none.
    At(f64),
    /// No success even at the initial α.
    AboveRange,
    /// Successes persisted down to the floor; carries the smallest α tried.
    BelowRange(f64),
}

impl Boundary {
    pub fn alpha(self) -> Option<f64> {
        match self {
            Boundary::At(a) => Some(a),
            Boundary::BelowRange(_) => Some(0.0),
            Boundary::AboveRange => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub alpha: f64,
    pub successes: u32,
    pub min_barrier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub temperature: f64,
    pub direction: Direction,
    pub boundary: Boundary,
    /// Lowest barrier over all successful trials at any α.
    pub min_barrier: Option<f64>,
    pub ladder: Vec<LadderRung>,
}

impl SweepPoint {
    pub fn successes_at_boundary(&self) -> u32 {
        match self.boundary {
            Boundary::At(a) => self.ladder.iter().find(|r| r.alpha == a).map_or(0, |r| r.successes),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub points: Vec<SweepPoint>,
}

impl PhaseDiagram {
    pub fn point(&self, temperature: f64, direction: Direction) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.temperature == temperature && p.direction == direction)
    }

    /// Columns: `T,direction,alpha_star,min_barrier,successes`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "T,direction,alpha_star,min_barrier,successes")?;
        for p in &self.points {
            let alpha = match p.boundary {
                Boundary::At(a) => format!("{a:e}"),
                Boundary::AboveRange => "above-range".to_string(),
                Boundary::BelowRange(a) => format!("<{a:e}"),
            };
            let barrier = p.min_barrier.map_or(String::new(), |b| format!("{b:e}"));
            writeln!(out, "{:e},{},{},{},{}", p.temperature, p.direction.label(), alpha, barrier, p.successes_at_boundary())?;
        }
        Ok(())
    }
}

/// Seeds one trial of a batch. Tags: pair id, direction, trial index, temperature index, ladder step.
pub fn trial_seed(master: u64, pair: u64, direction: Direction, trial: u64, t_index: u64, step: u64) -> u64 {
    derive_seed(master, &[pair, direction.tag(), trial, t_index, step])
}

/// Runs `trials` independent AD trials in parallel; results come back in trial order.
pub fn ad_trials(
    model: &dyn EnergyModel,
    start: &State,
    target: &State,
    params: &AdParams,
    trials: u32,
    seed_of: impl Fn(u64) -> u64 + Sync,
    record_path: bool,
) -> Result<Vec<AdResult>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|k| ad_trial(model, start, target, params, chain_rng(seed_of(k), &[]), record_path))
        .collect()
}

/// For each temperature and direction, lowers α geometrically until every trial fails.
pub fn phase_sweep(
    model: &dyn EnergyModel,
    min_a: &State,
    min_b: &State,
    temperatures: &[f64],
    base: &AdParams,
    sweep: &SweepConfig,
    master_seed: u64,
    pair_id: u64,
) -> Result<PhaseDiagram> {
    if min_a == min_b {
        return Err(ElmError::invalid("phase sweep needs two distinct minima"));
    }
    if !(sweep.decrement > 0.0 && sweep.decrement < 1.0) || sweep.trials == 0 || !(sweep.alpha_init > 0.0) {
        return Err(ElmError::Config("sweep needs alpha_init > 0, 0 < decrement < 1, trials >= 1".into()));
    }
    let mut points = Vec::new();
    for (t_index, &temperature) in temperatures.iter().enumerate() {
        for direction in [Direction::AToB, Direction::BToA] {
            let (start, target) = match direction {
                Direction::AToB => (min_a, min_b),
                Direction::BToA => (min_b, min_a),
            };
            let mut ladder = Vec::new();
            let mut alpha = sweep.alpha_init;
            let mut boundary = None;
            let mut step = 0u64;
            while boundary.is_none() {
                let params = base.with_temperature(temperature).with_alpha(alpha);
                let results = ad_trials(
                    model,
                    start,
                    target,
                    &params,
                    sweep.trials,
                    |k| trial_seed(master_seed, pair_id, direction, k, t_index as u64, step),
                    false,
                )?;
                let successes = results.iter().filter(|r| r.success).count() as u32;
                let min_barrier = results.iter().filter_map(|r| r.barrier).min_by(f64::total_cmp);
                ladder.push(LadderRung { alpha, successes, min_barrier });
                if successes == 0 {
                    boundary = Some(match ladder.len() {
                        1 => Boundary::AboveRange,
                        n => Boundary::At(ladder[n - 2].alpha),
                    });
                } else {
                    let next = alpha * (1.0 - sweep.decrement);
                    if next < sweep.alpha_floor {
                        boundary = Some(Boundary::BelowRange(alpha));
                    }
                    alpha = next;
                    step += 1;
                }
            }
            let min_barrier = ladder.iter().filter_map(|r| r.min_barrier).min_by(f64::total_cmp);
            log::debug!("sweep T={temperature} {}: {:?}", direction.label(), boundary);
            points.push(SweepPoint { temperature, direction, boundary: boundary.expect("set"), min_barrier, ladder });
        }
    }
    Ok(PhaseDiagram { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    /// Lowest-barrier successful trial with its full path; `None` when every retry failed.
    pub best: Option<AdResult>,
    pub attempts: u32,
    pub successes: u32,
}

impl Interpolation {
    pub fn barrier(&self) -> Option<f64> {
        self.best.as_ref().and_then(|r| r.barrier)
    }

    pub fn path(&self) -> Option<&[PathPoint]> {
        self.best.as_ref().and_then(|r| r.path.as_deref())
    }
}

/// AD path from `a` to `b`; α should sit just above the metastable boundary.
pub fn ad_interpolate(
    model: &dyn EnergyModel,
    a: &State,
    b: &State,
    params: &AdParams,
    retries: u32,
    seed: u64,
) -> Result<Interpolation> {
    let results = ad_trials(model, a, b, params, retries.max(1), |k| derive_seed(seed, &[0x1a7e, k]), true)?;
    let successes = results.iter().filter(|r| r.success).count() as u32;
    let best = results
        .into_iter()
        .filter(|r| r.success)
        .min_by(|x, y| x.barrier.unwrap_or(f64::INFINITY).total_cmp(&y.barrier.unwrap_or(f64::INFINITY)));
    Ok(Interpolation { best, attempts: retries.max(1), successes })
}

/// One JSON object `{"state": ..., "energy": ...}` per line.
pub fn write_path_jsonl<W: Write>(path: &[PathPoint], mut out: W) -> Result<()> {
    for point in path {
        serde_json::to_writer(&mut out, point)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

//! Barrier estimators between minima and pairwise matrix assembly.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attraction_diffusion::{ad_interpolate, phase_sweep, AdParams, Boundary, Direction, SweepConfig};
use crate::error::{ElmError, Result};
use crate::gwl::TransitionPair;
use crate::landscapes::{check_state, EnergyModel};
use crate::minimize::greedy_descend;
use crate::oracle::{enumerate, GridOracle, GridSpec};
use crate::seeding::derive_seed;
use crate::state::{State, StateKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Linear1d,
    GreedyDiscrete,
    Ridge,
    Neb,
    Dneb,
    Ad,
    /// Exhaustive enumeration (discrete) or dense-grid widest path (continuous).
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Linear1d => "linear1d",
            Method::GreedyDiscrete => "greedy-discrete",
            Method::Ridge => "ridge",
            Method::Neb => "neb",
            Method::Dneb => "dneb",
            Method::Ad => "ad",
            Method::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub states: Vec<State>,
    pub energies: Vec<f64>,
    pub barrier: f64,
    pub method: Method,
}

impl PathTrace {
    pub fn new(model: &dyn EnergyModel, states: Vec<State>, method: Method) -> Result<Self> {
        let energies = states.iter().map(|s| model.energy(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(states, energies, method))
    }

    fn from_parts(states: Vec<State>, energies: Vec<f64>, method: Method) -> Self {
        let barrier = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        PathTrace { states, energies, barrier, method }
    }

    /// One `{"state", "energy"}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (s, e) in self.states.iter().zip(&self.energies) {
            serde_json::to_writer(&mut out, &serde_json::json!({ "state": s, "energy": e }))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn require_continuous(model: &dyn EnergyModel, what: &str) -> Result<()> {
    if model.kind() != StateKind::Continuous {
        return Err(ElmError::unsupported(format!("{what} needs a continuous model; {} is discrete", model.name())));
    }
    Ok(())
}

fn require_discrete(model: &dyn EnergyModel, what: &str) -> Result<()> {
    if model.kind() != StateKind::Discrete {
        return Err(ElmError::unsupported(format!("{what} needs a discrete model; {} is continuous", model.name())));
    }
    Ok(())
}

/// `n + 1` evenly spaced states from `a` to `b`, endpoints included.
pub fn linear_path(a: &[f64], b: &[f64], n: usize) -> Vec<State> {
    let n = n.max(1);
    (0..=n)
        .map(|k| {
            if k == n {
                return State::Continuous(b.to_vec());
            }
            let t = k as f64 / n as f64;
            State::Continuous(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect())
        })
        .collect()
}

/// Max energy over `n_points + 1` evenly spaced points of the segment.
pub fn linear_1d_barrier(model: &dyn EnergyModel, a: &State, b: &State, n_points: usize) -> Result<PathTrace> {
    require_continuous(model, "linear interpolation")?;
    check_state(model, a)?;
    check_state(model, b)?;
    let (xa, xb) = (a.as_continuous().expect("checked"), b.as_continuous().expect("checked"));
    if a == b {
        return PathTrace::new(model, vec![a.clone()], Method::Linear1d);
    }
    PathTrace::new(model, linear_path(xa, xb, n_points), Method::Linear1d)
}

fn greedy_one_way(model: &dyn EnergyModel, from: &State, to: &State) -> Result<PathTrace> {
    let target = to.as_discrete().expect("checked");
    let mut tracker = model.tracker(from)?;
    let mut states = vec![from.clone()];
    let mut energies = vec![tracker.energy()];
    loop {
        let values = tracker.values();
        let best = (0..values.len())
            .filter(|&i| values[i] != target[i])
            .map(|i| (tracker.delta(i, target[i]), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, i)) = best else { break };
        tracker.set(i, target[i]);
        states.push(State::Discrete(tracker.values().to_vec()));
        energies.push(tracker.energy());
    }
    // Endpoint energies exact; interior ones are tracked.
    let last = energies.len() - 1;
    energies[last] = model.energy(to)?;
    energies[0] = model.energy(from)?;
    Ok(PathTrace::from_parts(states, energies, Method::GreedyDiscrete))
}

/// Greedy move-toward-target interpolation in both directions; returns the
/// lower-barrier path, oriented from `sigma` to `tau`.
pub fn greedy_discrete_interpolate(model: &dyn EnergyModel, sigma: &State, tau: &State) -> Result<PathTrace> {
    require_discrete(model, "greedy interpolation")?;
    check_state(model, sigma)?;
    check_state(model, tau)?;
    let forward = greedy_one_way(model, sigma, tau)?;
    let mut backward = greedy_one_way(model, tau, sigma)?;
    if backward.barrier < forward.barrier {
        backward.states.reverse();
        backward.energies.reverse();
        Ok(backward)
    } else {
        Ok(forward)
    }
}

fn descend(model: &dyn EnergyModel, s: &State) -> Result<Vec<i32>> {
    let mut tracker = model.tracker(s)?;
    greedy_descend(tracker.as_mut(), model.palette().expect("discrete").values());
    Ok(tracker.values().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeResult {
    /// Final adjacent pair, in the input's basin order.
    pub pair: (State, State),
    /// Higher-energy state of the final pair.
    pub saddle: State,
    pub barrier: f64,
    pub moves: usize,
    /// Minima reached by descent from the two sides.
    pub basins: (State, State),
}

/// Lowers the peak of an adjacent pair straddling two basins. Moves: replace
/// the higher state by another neighbour of the lower one, or change the
/// same coordinate in both states. A move is taken only if it strictly lowers
/// `max(E(a), E(b))` and the two sides still descend to the original minima;
/// the best such move is applied until none remains.
pub fn ridge_descent_refine(model: &dyn EnergyModel, s_a: &State, s_b: &State) -> Result<RidgeResult> {
    require_discrete(model, "ridge descent")?;
    check_state(model, s_a)?;
    check_state(model, s_b)?;
    if s_a.hamming(s_b)? != 1 {
        return Err(ElmError::invalid("ridge descent needs states differing in exactly one coordinate"));
    }
    let basin_a = descend(model, s_a)?;
    let basin_b = descend(model, s_b)?;
    if basin_a == basin_b {
        return Err(ElmError::invalid("transition pair descends into a single basin"));
    }
    let palette = model.palette().expect("discrete").values().to_vec();
    let (mut a, mut b) = (s_a.as_discrete().expect("checked").to_vec(), s_b.as_discrete().expect("checked").to_vec());
    let (mut ea, mut eb) = (model.energy(s_a)?, model.energy(s_b)?);
    let mut moves = 0;
    let mut memo: HashMap<Vec<i32>, Vec<i32>> = HashMap::new();
    let mut basin_of = |v: &[i32]| -> Result<Vec<i32>> {
        if let Some(m) = memo.get(v) {
            return Ok(m.clone());
        }
        let m = descend(model, &State::Discrete(v.to_vec()))?;
        memo.insert(v.to_vec(), m.clone());
        Ok(m)
    };
    loop {
        let peak = ea.max(eb);
        let ta = model.tracker(&State::Discrete(a.clone()))?;
        let tb = model.tracker(&State::Discrete(b.clone()))?;
        let k = (0..a.len()).find(|&i| a[i] != b[i]).expect("adjacent");
        // (new peak, a', b', E(a'), E(b'))
        let mut candidates: Vec<(f64, Vec<i32>, Vec<i32>, f64, f64)> = Vec::new();
        for i in 0..a.len() {
            for &v in &palette {
                // Same change on both sides.
                if i != k && v != a[i] {
                    let (na, nb) = (ea + ta.delta(i, v), eb + tb.delta(i, v));
                    let mut va = a.clone();
                    let mut vb = b.clone();
                    va[i] = v;
                    vb[i] = v;
                    candidates.push((na.max(nb), va, vb, na, nb));
                }
                // New partner for the lower side.
                if ea <= eb {
                    if v != a[i] && !(i == k && v == b[k]) {
                        let ne = ea + ta.delta(i, v);
                        let mut vb = a.clone();
                        vb[i] = v;
                        candidates.push((ea.max(ne), a.clone(), vb, ea, ne));
                    }
                } else if v != b[i] && !(i == k && v == a[k]) {
                    let ne = eb + tb.delta(i, v);
                    let mut va = b.clone();
                    va[i] = v;
                    candidates.push((ne.max(eb), va, b.clone(), ne, eb));
                }
            }
        }
        candidates.retain(|c| c.0 < peak);
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut applied = false;
        for (_, va, vb, na, nb) in candidates {
            if basin_of(&va)? == basin_a && basin_of(&vb)? == basin_b {
                a = va;
                b = vb;
                ea = na;
                eb = nb;
                moves += 1;
                applied = true;
                break;
            }
        }
        if !applied {
            break;
        }
    }
    let (sa, sb) = (State::Discrete(a), State::Discrete(b));
    let (ea, eb) = (model.energy(&sa)?, model.energy(&sb)?);
    let saddle = if ea >= eb { sa.clone() } else { sb.clone() };
    Ok(RidgeResult {
        pair: (sa, sb),
        saddle,
        barrier: ea.max(eb),
        moves,
        basins: (State::Discrete(basin_a), State::Discrete(basin_b)),
    })
}

/// Adjacent pairs along a path whose descents reach different minima.
pub fn path_transitions(model: &dyn EnergyModel, path: &PathTrace) -> Result<Vec<(State, State)>> {
    require_discrete(model, "transition extraction")?;
    let basins = path.states.iter().map(|s| descend(model, s)).collect::<Result<Vec<_>>>()?;
    Ok((1..path.states.len())
        .filter(|&i| basins[i] != basins[i - 1])
        .map(|i| (path.states[i - 1].clone(), path.states[i].clone()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NebConfig {
    #[serde(default)]
    pub doubly_nudged: bool,
    #[serde(default = "default_neb_steps")]
    pub steps: usize,
    #[serde(default = "default_neb_step")]
    pub step_size: f64,
    /// Spring constant; `None` balances spring and gradient magnitudes at start.
    #[serde(default)]
    pub spring: Option<f64>,
    #[serde(default = "default_images")]
    pub images: usize,
    /// Stop when the largest image force falls below this.
    #[serde(default = "default_force_tol")]
    pub force_tol: f64,
}

fn default_neb_steps() -> usize {
    20_000
}

fn default_neb_step() -> f64 {
    0.01
}

fn default_images() -> usize {
    32
}

fn default_force_tol() -> f64 {
    1e-6
}

impl Default for NebConfig {
    fn default() -> Self {
        NebConfig {
            doubly_nudged: false,
            steps: default_neb_steps(),
            step_size: default_neb_step(),
            spring: None,
            images: default_images(),
            force_tol: default_force_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NebReport {
    pub trace: PathTrace,
    pub spring: f64,
    pub steps: usize,
    pub max_force: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Nudged elastic band descent with pinned endpoints.
pub fn neb_refine(model: &dyn EnergyModel, init: &PathTrace, cfg: &NebConfig) -> Result<NebReport> {
    require_continuous(model, "NEB")?;
    if !model.has_gradient() {
        return Err(ElmError::unsupported(format!("NEB needs a gradient; {} has none", model.name())));
    }
    if init.states.len() < 3 {
        return Err(ElmError::invalid("NEB needs at least three images"));
    }
    let mut x: Vec<Vec<f64>> = init
        .states
        .iter()
        .map(|s| {
            check_state(model, s)?;
            Ok(s.as_continuous().expect("checked").to_vec())
        })
        .collect::<Result<_>>()?;
    let n = x.len();
    let init_max = init.barrier;
    let limit = if init_max > 0.0 { 10.0 * init_max } else { init_max + 10.0 * init_max.abs().max(1.0) };
    let grad_at = |p: &[f64]| model.gradient(&State::Continuous(p.to_vec()));

    let spring = match cfg.spring {
        Some(k) => k,
        None => {
            let mut g_sum = 0.0;
            for p in &x[1..n - 1] {
                g_sum += norm(&grad_at(p)?);
            }
            let seg: f64 = (1..n).map(|i| norm(&sub(&x[i], &x[i - 1]))).sum::<f64>() / (n - 1) as f64;
            let g_mean = g_sum / (n - 2) as f64;
            if seg > 0.0 && g_mean > 0.0 {
                g_mean / seg
            } else {
                1.0
            }
        }
    };

    let mut max_force = f64::INFINITY;
    let mut steps = 0;
    while steps < cfg.steps {
        let mut forces = Vec::with_capacity(n - 2);
        max_force = 0.0f64;
        for i in 1..n - 1 {
            let g = grad_at(&x[i])?;
            let mut tau = sub(&x[i + 1], &x[i - 1]);
            let tn = norm(&tau);
            if tn > 0.0 {
                tau.iter_mut().for_each(|t| *t /= tn);
            }
            let g_par = dot(&g, &tau);
            let g_perp: Vec<f64> = g.iter().zip(&tau).map(|(gi, ti)| gi - g_par * ti).collect();
            let fwd = sub(&x[i + 1], &x[i]);
            let back = sub(&x[i], &x[i - 1]);
            let spring_par = spring * (norm(&fwd) - norm(&back));
            let mut f: Vec<f64> = g_perp.iter().zip(&tau).map(|(gp, ti)| -gp + spring_par * ti).collect();
            if cfg.doubly_nudged {
                let fs: Vec<f64> = fwd.iter().zip(&back).map(|(a, b)| spring * (a - b)).collect();
                let fs_par = dot(&fs, &tau);
                let fs_perp: Vec<f64> = fs.iter().zip(&tau).map(|(a, t)| a - fs_par * t).collect();
                let gpn = norm(&g_perp);
                if gpn > 0.0 {
                    let unit: Vec<f64> = g_perp.iter().map(|v| v / gpn).collect();
                    let proj = dot(&fs_perp, &unit);
                    for ((fi, s), u) in f.iter_mut().zip(&fs_perp).zip(&unit) {
                        *fi += s - proj * u;
                    }
                }
            }
            max_force = max_force.max(norm(&f));
            forces.push(f);
        }
        if max_force < cfg.force_tol {
            break;
        }
        for (i, f) in forces.iter().enumerate() {
            for (xi, fi) in x[i + 1].iter_mut().zip(f) {
                *xi += cfg.step_size * fi;
            }
        }
        steps += 1;
        if steps % 100 == 0 || steps == cfg.steps {
            for p in &x[1..n - 1] {
                let e = model.energy(&State::Continuous(p.clone()))?;
                if !(e <= limit) {
                    return Err(ElmError::Divergence(format!(
                        "image energy {e} exceeds {limit} after {steps} NEB steps; use a smaller step size (now {})",
                        cfg.step_size
                    )));
                }
            }
        }
    }
    let mut states: Vec<State> = x.into_iter().map(State::Continuous).collect();
    states[0] = init.states[0].clone();
    states[n - 1] = init.states[n - 1].clone();
    let method = if cfg.doubly_nudged { Method::Dneb } else { Method::Neb };
    let trace = PathTrace::new(model, states, method)?;
    for e in &trace.energies {
        if !(*e <= limit) {
            return Err(ElmError::Divergence(format!("image energy {e} exceeds {limit}; use a smaller step size")));
        }
    }
    Ok(NebReport { trace, spring, steps, max_force, converged: max_force < cfg.force_tol })
}

/// AD settings for matrix entries. With `sweep`, each direction first
/// locates its metastable boundary at `params.temperature` and interpolates
/// at the smallest α that still connected; barriers seen during the sweep
/// count too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdMethod {
    pub params: AdParams,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_retries() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    #[serde(default = "default_linear_points")]
    pub linear_points: usize,
    #[serde(default)]
    pub neb: NebConfig,
    #[serde(default)]
    pub ad: Option<AdMethod>,
    /// Extra adjacent pairs (e.g. from GWL) fed to ridge refinement.
    #[serde(default)]
    pub transitions: Vec<TransitionPair>,
    /// Lattice for the oracle on continuous models.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: u64,
}

fn default_linear_points() -> usize {
    256
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            linear_points: default_linear_points(),
            neb: NebConfig::default(),
            ad: None,
            transitions: Vec::new(),
            grid: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub barrier: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierMatrix {
    pub representatives: Vec<State>,
    pub energies: Vec<f64>,
    /// Upper triangle is mirrored; `None` marks pairs no method resolved.
    pub entries: Vec<Vec<Option<MatrixEntry>>>,
    /// `(i, j, method, reason)` for estimates that were skipped.
    #[serde(default)]
    pub skipped: Vec<(usize, usize, Method, String)>,
}

impl BarrierMatrix {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    /// Dense barriers with `+inf` for missing pairs and energies on the diagonal.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                (0..self.len())
                    .map(|j| if i == j { self.energies[i] } else { self.entries[i][j].map_or(f64::INFINITY, |e| e.barrier) })
                    .collect()
            })
            .collect()
    }

    /// Builds a matrix from energies and a dense table, tagging every entry with `method`.
    pub fn from_dense(representatives: Vec<State>, energies: Vec<f64>, dense: &[Vec<f64>], method: Method) -> Self {
        let k = energies.len();
        let entries = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| (i != j && dense[i][j].is_finite()).then(|| MatrixEntry { barrier: dense[i][j], method }))
                    .collect()
            })
            .collect();
        BarrierMatrix { representatives, energies, entries, skipped: Vec::new() }
    }

    /// Columns `i,j,barrier,method` for `i < j`; missing pairs are omitted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,barrier,method")?;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if let Some(e) = self.entries[i][j] {
                    writeln!(out, "{i},{j},{},{}", e.barrier, e.method)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(representatives: Vec<State>, energies: Vec<f64>, input: R) -> Result<Self> {
        let k = energies.len();
        let mut entries = vec![vec![None; k]; k];
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || ElmError::invalid(format!("bad barrier matrix row {n}: {line}"));
            if cols.len() != 4 {
                return Err(bad());
            }
            let i: usize = cols[0].parse().map_err(|_| bad())?;
            let j: usize = cols[1].parse().map_err(|_| bad())?;
            let barrier: f64 = cols[2].parse().map_err(|_| bad())?;
            let method: Method = serde_json::from_value(serde_json::Value::String(cols[3].to_string())).map_err(|_| bad())?;
            if i >= k || j >= k {
                return Err(bad());
            }
            entries[i][j] = Some(MatrixEntry { barrier, method });
            entries[j][i] = Some(MatrixEntry { barrier, method });
        }
        Ok(BarrierMatrix { representatives, energies, entries, skipped: Vec::new() })
    }
}

struct Sets(Vec<usize>);

impl Sets {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        self.0[x] = r;
        r
    }
}

/// Minimax barriers between `reps` over a graph of minima joined by refined
/// transition pairs.
fn ridge_network(model: &dyn EnergyModel, reps: &[State], pairs: Vec<(State, State)>) -> Result<Vec<Vec<f64>>> {
    let refined: Vec<Option<RidgeResult>> = pairs
        .par_iter()
        .map(|(a, b)| match ridge_descent_refine(model, a, b) {
            Ok(r) => Ok(Some(r)),
            Err(ElmError::InvalidInput(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut ids: HashMap<Vec<i32>, usize> = HashMap::new();
    for r in reps {
        let key = descend(model, r)?;
        let next = ids.len();
        ids.entry(key).or_insert(next);
    }
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for r in refined.into_iter().flatten() {
        let next = ids.len();
        let a = *ids.entry(r.basins.0.as_discrete().expect("discrete").to_vec()).or_insert(next);
        let next = ids.len();
        let b = *ids.entry(r.basins.1.as_discrete().expect("discrete").to_vec()).or_insert(next);
        edges.push((r.barrier, a, b));
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let rep_ids: Vec<usize> = reps.iter().map(|r| Ok(ids[&descend(model, r)?])).collect::<Result<_>>()?;
    let k = reps.len();
    let mut out = vec![vec![f64::INFINITY; k]; k];
    let mut sets = Sets((0..ids.len()).collect());
    for (w, a, b) in edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra == rb {
            continue;
        }
        sets.0[ra] = rb;
        for i in 0..k {
            for j in 0..k {
                if i != j && out[i][j].is_infinite() && sets.find(rep_ids[i]) == sets.find(rep_ids[j]) {
                    out[i][j] = w;
                }
            }
        }
    }
    Ok(out)
}

fn ad_barrier(model: &dyn EnergyModel, a: &State, b: &State, cfg: &AdMethod, seed: u64, pair: u64) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for direction in [Direction::AToB, Direction::BToA] {
        let (start, target) = match direction {
            Direction::AToB => (a, b),
            Direction::BToA => (b, a),
        };
        let alpha = match &cfg.sweep {
            Some(sweep) => {
                // A ladder that fails at its first rung restarts 4x higher, up to three times.
                let mut sweep = sweep.clone();
                let mut found = None;
                for attempt in 0..4u64 {
                    let diagram = phase_sweep(
                        model,
                        start,
                        target,
                        &[cfg.params.temperature],
                        &cfg.params,
                        &sweep,
                        derive_seed(seed, &[attempt]),
                        pair,
                    )?;
                    let point = diagram.point(cfg.params.temperature, Direction::AToB).expect("one temperature");
                    if let Some(barrier) = point.min_barrier {
                        best = Some(best.map_or(barrier, |x: f64| x.min(barrier)));
                    }
                    match point.boundary {
                        Boundary::At(alpha) | Boundary::BelowRange(alpha) => {
                            found = Some(alpha);
                            break;
                        }
                        Boundary::AboveRange => sweep.alpha_init *= 4.0,
                    }
                }
                match found {
                    Some(alpha) => alpha,
                    None => continue,
                }
            }
            None => cfg.params.alpha,
        };
        let run = ad_interpolate(
            model,
            start,
            target,
            &cfg.params.with_alpha(alpha),
            cfg.retries,
            derive_seed(seed, &[pair, direction.tag()]),
        )?;
        if let Some(barrier) = run.barrier() {
            best = Some(best.map_or(barrier, |x: f64| x.min(barrier)));
        }
    }
    Ok(best)
}

fn is_unsupported(e: &ElmError) -> bool {
    matches!(e, ElmError::Unsupported(_))
}

/// Pairwise barriers keeping, for each pair, the lowest estimate over `methods`.
pub fn barrier_matrix(
    model: &dyn EnergyModel,
    representatives: &[State],
    methods: &[Method],
    opts: &BarrierOptions,
) -> Result<BarrierMatrix> {
    let k = representatives.len();
    if k < 2 {
        return Err(ElmError::invalid("a barrier matrix needs at least two representatives"));
    }
    let energies = representatives.iter().map(|s| model.energy(s)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let mut skipped = Vec::new();
    let mut entries: Vec<Vec<Option<MatrixEntry>>> = vec![vec![None; k]; k];
    let mut offer = |i: usize, j: usize, barrier: f64, method: Method| {
        let better = entries[i][j].is_none_or(|e: MatrixEntry| barrier < e.barrier);
        if better {
            entries[i][j] = Some(MatrixEntry { barrier, method });
            entries[j][i] = Some(MatrixEntry { barrier, method });
        }
    };

    let mut greedy_paths: Option<Vec<Result<PathTrace>>> = None;
    for &method in methods {
        match method {
            Method::Ridge | Method::GreedyDiscrete if model.kind() != StateKind::Discrete => {
                log::warn!("skipping {method}: {} is continuous", model.name());
                skipped.push((0, 0, method, "continuous model".to_string()));
                continue;
            }
            Method::Linear1d | Method::Neb | Method::Dneb if model.kind() != StateKind::Continuous => {
                log::warn!("skipping {method}: {} is discrete", model.name());
                skipped.push((0, 0, method, "discrete model".to_string()));
                continue;
            }
            Method::Oracle if model.kind() == StateKind::Continuous && opts.grid.is_none() => {
                log::warn!("skipping oracle: no grid given for a continuous model");
                skipped.push((0, 0, method, "no grid".to_string()));
                continue;
            }
            Method::Ad if opts.ad.is_none() => {
                log::warn!("skipping ad: no AD parameters given");
                skipped.push((0, 0, method, "no AD parameters".to_string()));
                continue;
            }
            _ => {}
        }
        let results: Vec<Result<Option<f64>>> = match method {
            Method::Linear1d => pairs
                .par_iter()
                .map(|&(i, j)| {
                    linear_1d_barrier(model, &representatives[i], &representatives[j], opts.linear_points).map(|t| Some(t.barrier))
                })
                .collect(),
            Method::GreedyDiscrete | Method::Ridge => {
                let paths = greedy_paths.get_or_insert_with(|| {
                    pairs
                        .par_iter()
                        .map(|&(i, j)| greedy_discrete_interpolate(model, &representatives[i], &representatives[j]))
                        .collect()
                });
                if method == Method::GreedyDiscrete {
                    paths.iter().map(|p| p.as_ref().map(|t| Some(t.barrier)).map_err(clone_error)).collect()
                } else {
                    let mut transitions = Vec::new();
                    for p in paths.iter() {
                        transitions.extend(path_transitions(model, p.as_ref().map_err(clone_error)?)?);
                    }
                    transitions.extend(opts.transitions.iter().map(|t| t.states.clone()));
                    let network = ridge_network(model, representatives, transitions)?;
                    pairs.iter().map(|&(i, j)| Ok(network[i][j].is_finite().then_some(network[i][j]))).collect()
                }
            }
            Method::Neb | Method::Dneb => {
                let cfg = NebConfig { doubly_nudged: method == Method::Dneb, ..opts.neb.clone() };
                pairs
                    .par_iter()
                    .map(|&(i, j)| {
                        let (a, b) = (&representatives[i], &representatives[j]);
                        let init = PathTrace::new(
                            model,
                            linear_path(a.as_continuous().expect("continuous"), b.as_continuous().expect("continuous"), cfg.images - 1),
                            Method::Linear1d,
                        )?;
                        neb_refine(model, &init, &cfg).map(|r| Some(r.trace.barrier))
                    })
                    .collect()
            }
            Method::Oracle => {
                let dense = oracle_barriers(model, representatives, opts.grid.as_ref())?;
                pairs.iter().map(|&(i, j)| Ok(dense[i][j].is_finite().then_some(dense[i][j]))).collect()
            }
            Method::Ad => {
                let cfg = opts.ad.as_ref().expect("checked");
                pairs
                    .par_iter()
                    .map(|&(i, j)| {
                        ad_barrier(model, &representatives[i], &representatives[j], cfg, opts.seed, (i * k + j) as u64)
                    })
                    .collect()
            }
        };
        for (&(i, j), r) in pairs.iter().zip(results) {
            match r {
                Ok(Some(b)) => offer(i, j, b, method),
                Ok(None) => {}
                Err(e) if is_unsupported(&e) || matches!(e, ElmError::Divergence(_)) => {
                    log::warn!("skipping {method} for pair ({i}, {j}): {e}");
                    skipped.push((i, j, method, e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(BarrierMatrix { representatives: representatives.to_vec(), energies, entries, skipped })
}

/// Exact barriers between representatives; discrete ones are matched to
/// enumerated minima after descent, unmatched pairs come back `+inf`.
pub fn oracle_barriers(model: &dyn EnergyModel, representatives: &[State], grid: Option<&GridSpec>) -> Result<Vec<Vec<f64>>> {
    match model.kind() {
        StateKind::Discrete => {
            let report = enumerate(model)?;
            let idx: Vec<Option<usize>> = representatives
                .iter()
                .map(|r| Ok(report.index_of(&State::Discrete(descend(model, r)?))))
                .collect::<Result<_>>()?;
            let k = representatives.len();
            Ok((0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| match (idx[i], idx[j]) {
                            (Some(a), Some(b)) => report.barriers[a][b],
                            _ => f64::INFINITY,
                        })
                        .collect()
                })
                .collect())
        }
        StateKind::Continuous => {
            let grid = grid.ok_or_else(|| ElmError::unsupported("the continuous oracle needs a grid"))?;
            let oracle = GridOracle::new(model, grid.clone())?;
            let points: Vec<Vec<f64>> = representatives
                .iter()
                .map(|r| {
                    check_state(model, r)?;
                    Ok(r.as_continuous().expect("checked").to_vec())
                })
                .collect::<Result<_>>()?;
            Ok(oracle.barrier_matrix(&points))
        }
    }
}

fn clone_error(e: &ElmError) -> ElmError {
    match e {
        ElmError::Unsupported(m) => ElmError::Unsupported(m.clone()),
        other => ElmError::InvalidInput(other.to_string()),
    }
}

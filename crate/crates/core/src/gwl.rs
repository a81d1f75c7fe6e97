//! Generalized Wang-Landau mapping over (basin, energy bin) cells.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::num::NonZeroUsize;

use lru::LruCache;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::landscapes::{DeltaTracker, EnergyModel};
use crate::minimize::greedy_descend;
use crate::seeding::{chain_rng, ChainRng};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwlConfig {
    pub e_lo: f64,
    pub e_hi: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub gamma: f64,
    pub iterations: u64,
    /// Steps between flatness diagnostics.
    #[serde(default = "default_stride")]
    pub flatness_stride: u64,
    /// Temperature of the target density `exp(-E/T)`.
    #[serde(default = "one")]
    pub temperature: f64,
    /// Energies are divided by this before binning (e.g. N for per-spin units).
    #[serde(default = "one")]
    pub energy_scale: f64,
    /// Number of lowest minima reported.
    #[serde(default = "default_keep")]
    pub keep_lowest: usize,
    #[serde(default = "default_memo")]
    pub memo_capacity: usize,
}

fn default_bins() -> usize {
    50
}

fn default_stride() -> u64 {
    100_000
}

fn one() -> f64 {
    1.0
}

fn default_keep() -> usize {
    500
}

fn default_memo() -> usize {
    1_000_000
}

impl GwlConfig {
    pub fn new(e_lo: f64, e_hi: f64, gamma: f64, iterations: u64) -> Self {
        GwlConfig {
            e_lo,
            e_hi,
            bins: default_bins(),
            gamma,
            iterations,
            flatness_stride: default_stride(),
            temperature: 1.0,
            energy_scale: 1.0,
            keep_lowest: default_keep(),
            memo_capacity: default_memo(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_lo < self.e_hi) || self.bins == 0 {
            return Err(ElmError::Config(format!("GWL spectrum needs e_lo < e_hi and bins >= 1 ({}, {})", self.e_lo, self.e_hi)));
        }
        if !(self.gamma >= 0.0) || !(self.temperature > 0.0) || !(self.energy_scale > 0.0) || self.memo_capacity == 0 {
            return Err(ElmError::Config("GWL needs gamma >= 0, temperature > 0, energy_scale > 0, memo_capacity >= 1".into()));
        }
        Ok(())
    }

    /// Bin 0 and `bins + 1` collect energies below and above the spectrum.
    pub fn bin_of(&self, energy: f64) -> usize {
        let e = energy / self.energy_scale;
        if e < self.e_lo {
            return 0;
        }
        if e >= self.e_hi {
            return if e == self.e_hi { self.bins } else { self.bins + 1 };
        }
        1 + (((e - self.e_lo) / (self.e_hi - self.e_lo) * self.bins as f64) as usize).min(self.bins - 1)
    }

    pub fn in_spectrum(&self, energy: f64) -> bool {
        let e = energy / self.energy_scale;
        e >= self.e_lo && e <= self.e_hi
    }
}

/// `min(1, exp(log_target_ratio + γ (N_cur - N_prop)))`.
pub fn gwl_acceptance(current_visits: u64, proposed_visits: u64, log_target_ratio: f64, gamma: f64) -> f64 {
    let penalty = gamma * (current_visits as f64 - proposed_visits as f64);
    (log_target_ratio + penalty).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwlMinimum {
    pub state: State,
    pub energy: f64,
    pub first_seen: u64,
}

/// Adjacent chain states whose descents reach different minima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    pub basins: (usize, usize),
    pub states: (State, State),
    pub energies: (f64, f64),
}

impl TransitionPair {
    pub fn peak(&self) -> f64 {
        self.energies.0.max(self.energies.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessSample {
    pub step: u64,
    /// Max over min of nonzero in-spectrum cell counts.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwlResult {
    /// Every basin found, indexed by basin id (discovery order).
    pub minima: Vec<GwlMinimum>,
    /// Visit counts keyed by (basin id, bin).
    #[serde(with = "cell_list")]
    pub histogram: BTreeMap<(usize, usize), u64>,
    /// Lowest-peak transition pair per unordered basin pair.
    pub transitions: Vec<TransitionPair>,
    pub steps: u64,
    pub accepted: u64,
    pub in_spectrum_visits: u64,
    pub flatness: Vec<FlatnessSample>,
    pub memo_hits: u64,
    pub memo_misses: u64,
}

impl GwlResult {
    /// The `k` lowest minima by energy, ties by basin id.
    pub fn lowest(&self, k: usize) -> Vec<&GwlMinimum> {
        let mut v: Vec<&GwlMinimum> = self.minima.iter().collect();
        v.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        v.truncate(k);
        v
    }

    pub fn histogram_total(&self) -> u64 {
        self.histogram.values().sum()
    }

    /// Union of minima (by state) and sum of histograms; transitions keep the lower peak.
    pub fn merge(mut self, other: GwlResult) -> GwlResult {
        let key = |m: &GwlMinimum| m.state.as_discrete().expect("discrete").to_vec();
        let mut index: HashMap<Vec<i32>, usize> = self.minima.iter().enumerate().map(|(i, m)| (key(m), i)).collect();
        let mut remap = Vec::with_capacity(other.minima.len());
        for m in other.minima {
            let id = *index.entry(key(&m)).or_insert_with(|| {
                self.minima.push(m.clone());
                self.minima.len() - 1
            });
            remap.push(id);
        }
        for ((b, bin), c) in other.histogram {
            *self.histogram.entry((remap[b], bin)).or_insert(0) += c;
        }
        let mut best: BTreeMap<(usize, usize), TransitionPair> =
            self.transitions.drain(..).map(|t| (ordered(t.basins), t)).collect();
        for mut t in other.transitions {
            t.basins = (remap[t.basins.0], remap[t.basins.1]);
            offer_transition(&mut best, t);
        }
        self.transitions = best.into_values().collect();
        self.steps += other.steps;
        self.accepted += other.accepted;
        self.in_spectrum_visits += other.in_spectrum_visits;
        self.memo_hits += other.memo_hits;
        self.memo_misses += other.memo_misses;
        self
    }

    /// `energy,state` with the state written as space-separated values, lowest first.
    pub fn write_minima_csv<W: Write>(&self, k: usize, mut out: W) -> Result<()> {
        writeln!(out, "energy,state")?;
        for m in self.lowest(k) {
            writeln!(out, "{:e},{}", m.energy, state_cell(&m.state))?;
        }
        Ok(())
    }

    pub fn write_transitions_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.transitions {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

mod cell_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<(usize, usize), u64>, ser: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<(usize, usize, u64)> = map.iter().map(|(&(b, bin), &c)| (b, bin, c)).collect();
        cells.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<(usize, usize), u64>, D::Error> {
        let cells = Vec::<(usize, usize, u64)>::deserialize(de)?;
        Ok(cells.into_iter().map(|(b, bin, c)| ((b, bin), c)).collect())
    }
}

pub(crate) fn state_cell(s: &State) -> String {
    match s {
        State::Discrete(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
        State::Continuous(v) => v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" "),
    }
}

fn ordered((a, b): (usize, usize)) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn offer_transition(best: &mut BTreeMap<(usize, usize), TransitionPair>, t: TransitionPair) {
    let key = ordered(t.basins);
    match best.get(&key) {
        Some(old) if old.peak() <= t.peak() => {}
        _ => {
            best.insert(key, t);
        }
    }
}

/// A persistent single-flip GWL chain, usable as a stream of proposals.
pub struct GwlSampler<'m> {
    model: &'m dyn EnergyModel,
    cfg: GwlConfig,
    rng: ChainRng,
    palette: Vec<i32>,
    tracker: Box<dyn DeltaTracker + 'm>,
    basin: usize,
    memo: LruCache<Vec<i32>, usize>,
    basin_ids: HashMap<Vec<i32>, usize>,
    minima: Vec<GwlMinimum>,
    histogram: HashMap<(usize, usize), u64>,
    transitions: BTreeMap<(usize, usize), TransitionPair>,
    steps: u64,
    accepted: u64,
    in_spectrum_visits: u64,
    flatness: Vec<FlatnessSample>,
    memo_hits: u64,
    memo_misses: u64,
}

impl<'m> GwlSampler<'m> {
    /// Starts from a uniformly random state drawn from `seed`.
    pub fn new(model: &'m dyn EnergyModel, cfg: GwlConfig, seed: u64) -> Result<Self> {
        let palette = model
            .palette()
            .ok_or_else(|| ElmError::unsupported("GWL runs on discrete models only"))?
            .values()
            .to_vec();
        let mut rng = chain_rng(seed, &[0x6e1]);
        let start: Vec<i32> = (0..model.dim()).map(|_| palette[rng.random_range(0..palette.len())]).collect();
        Self::from_state(model, cfg, &State::Discrete(start), rng)
    }

    pub fn from_state(model: &'m dyn EnergyModel, cfg: GwlConfig, start: &State, rng: ChainRng) -> Result<Self> {
        cfg.validate()?;
        let palette = model
            .palette()
            .ok_or_else(|| ElmError::unsupported("GWL runs on discrete models only"))?
            .values()
            .to_vec();
        if palette.len() < 2 {
            return Err(ElmError::invalid("GWL needs at least two palette values"));
        }
        let capacity = NonZeroUsize::new(cfg.memo_capacity).expect("validated");
        let tracker = model.tracker(start)?;
        let mut sampler = GwlSampler {
            model,
            cfg,
            rng,
            palette,
            tracker,
            basin: 0,
            memo: LruCache::new(capacity),
            basin_ids: HashMap::new(),
            minima: Vec::new(),
            histogram: HashMap::new(),
            transitions: BTreeMap::new(),
            steps: 0,
            accepted: 0,
            in_spectrum_visits: 0,
            flatness: Vec::new(),
            memo_hits: 0,
            memo_misses: 0,
        };
        let values = sampler.tracker.values().to_vec();
        sampler.basin = sampler.basin_of(&values)?;
        Ok(sampler)
    }

    pub fn current(&self) -> State {
        State::Discrete(self.tracker.values().to_vec())
    }

    pub fn current_energy(&self) -> f64 {
        self.tracker.energy()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Basin id of `values` via memoized greedy descent.
    pub fn basin_of(&mut self, values: &[i32]) -> Result<usize> {
        if let Some(&id) = self.memo.get(values) {
            self.memo_hits += 1;
            return Ok(id);
        }
        self.memo_misses += 1;
        let minimum = descend(self.model, values, &self.palette)?;
        let id = match self.basin_ids.get(&minimum) {
            Some(&id) => id,
            None => {
                let id = self.minima.len();
                let state = State::Discrete(minimum.clone());
                let energy = self.model.energy(&state)?;
                self.minima.push(GwlMinimum { state, energy, first_seen: self.steps });
                self.basin_ids.insert(minimum, id);
                id
            }
        };
        self.memo.put(values.to_vec(), id);
        Ok(id)
    }

    pub fn minimum(&self, basin: usize) -> &GwlMinimum {
        &self.minima[basin]
    }

    /// One single-coordinate proposal with the GWL acceptance rule.
    pub fn step(&mut self) -> Result<bool> {
        let dim = self.tracker.values().len();
        let i = self.rng.random_range(0..dim);
        let current_value = self.tracker.values()[i];
        let cur_idx = self.palette.iter().position(|&p| p == current_value).expect("on palette");
        let mut k = self.rng.random_range(0..self.palette.len() - 1);
        if k >= cur_idx {
            k += 1;
        }
        let v = self.palette[k];
        let u: f64 = self.rng.random();

        let energy = self.tracker.energy();
        let delta = self.tracker.delta(i, v);
        let proposed_energy = energy + delta;
        let mut proposed = self.tracker.values().to_vec();
        proposed[i] = v;
        let proposed_basin = self.basin_of(&proposed)?;
        let cur_cell = (self.basin, self.cfg.bin_of(energy));
        let prop_cell = (proposed_basin, self.cfg.bin_of(proposed_energy));
        let n_cur = self.histogram.get(&cur_cell).copied().unwrap_or(0);
        let n_prop = self.histogram.get(&prop_cell).copied().unwrap_or(0);
        let p = gwl_acceptance(n_cur, n_prop, -delta / self.cfg.temperature, self.cfg.gamma);
        let accept = u < p;
        if accept {
            if proposed_basin != self.basin {
                let from = self.current();
                offer_transition(
                    &mut self.transitions,
                    TransitionPair {
                        basins: (self.basin, proposed_basin),
                        states: (from, State::Discrete(proposed)),
                        energies: (energy, proposed_energy),
                    },
                );
            }
            self.tracker.set(i, v);
            self.basin = proposed_basin;
            self.accepted += 1;
        }
        self.steps += 1;
        let e_now = self.tracker.energy();
        let cell = (self.basin, self.cfg.bin_of(e_now));
        *self.histogram.entry(cell).or_insert(0) += 1;
        if self.cfg.in_spectrum(e_now) {
            self.in_spectrum_visits += 1;
        }
        if self.steps % self.cfg.flatness_stride == 0 {
            self.flatness.push(FlatnessSample { step: self.steps, ratio: self.flatness_ratio() });
        }
        Ok(accept)
    }

    pub fn advance(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Max/min over nonzero cells whose bin lies inside the spectrum.
    pub fn flatness_ratio(&self) -> f64 {
        let counts = self.histogram.iter().filter(|((_, bin), _)| *bin >= 1 && *bin <= self.cfg.bins).map(|(_, &c)| c);
        let (mut lo, mut hi) = (u64::MAX, 0);
        for c in counts {
            lo = lo.min(c);
            hi = hi.max(c);
        }
        if hi == 0 {
            f64::INFINITY
        } else {
            hi as f64 / lo as f64
        }
    }

    pub fn result(&self) -> GwlResult {
        GwlResult {
            minima: self.minima.clone(),
            histogram: self.histogram.iter().map(|(&k, &v)| (k, v)).collect(),
            transitions: self.transitions.values().cloned().collect(),
            steps: self.steps,
            accepted: self.accepted,
            in_spectrum_visits: self.in_spectrum_visits,
            flatness: self.flatness.clone(),
            memo_hits: self.memo_hits,
            memo_misses: self.memo_misses,
        }
    }
}

fn descend(model: &dyn EnergyModel, values: &[i32], palette: &[i32]) -> Result<Vec<i32>> {
    let mut tracker = model.tracker(&State::Discrete(values.to_vec()))?;
    greedy_descend(tracker.as_mut(), palette);
    Ok(tracker.values().to_vec())
}

/// Runs `cfg.iterations` GWL steps from a seeded random start.
pub fn gwl_run(model: &dyn EnergyModel, cfg: &GwlConfig, seed: u64) -> Result<GwlResult> {
    let mut sampler = GwlSampler::new(model, cfg.clone(), seed)?;
    let probe = cfg.iterations.min(10_000);
    sampler.advance(probe)?;
    if probe > 0 && sampler.in_spectrum_visits == 0 {
        return Err(ElmError::Spectrum(format!(
            "no state within [{}, {}] (scaled by {}) after a {probe}-step probe; lowest basin energy seen {:.6}",
            cfg.e_lo,
            cfg.e_hi,
            cfg.energy_scale,
            sampler.minima.iter().map(|m| m.energy).fold(f64::INFINITY, f64::min) / cfg.energy_scale
        )));
    }
    sampler.advance(cfg.iterations - probe)?;
    let result = sampler.result();
    log::info!(
        "gwl: {} steps, {} basins, acceptance {:.3}, flatness {:.2}",
        result.steps,
        result.minima.len(),
        result.accepted as f64 / result.steps.max(1) as f64,
        sampler.flatness_ratio()
    );
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::SkGlass;
    use crate::oracle::enumerate;

    #[test]
    fn acceptance_rule_arithmetic() {
        assert_eq!(gwl_acceptance(3, 7, -0.5, 0.0), (-0.5f64).exp());
        assert_eq!(gwl_acceptance(4, 4, -0.5, 0.3), (-0.5f64).exp());
        assert_eq!(gwl_acceptance(10, 0, 0.0, 0.1), 1.0);
        assert_eq!(gwl_acceptance(0, 10, 0.0, 0.1), (-1.0f64).exp());
    }

    #[test]
    fn bins_clamp_outside_spectrum() {
        let mut cfg = GwlConfig::new(-1.0, 1.0, 0.1, 0);
        cfg.bins = 4;
        assert_eq!(cfg.bin_of(-2.0), 0);
        assert_eq!(cfg.bin_of(-1.0), 1);
        assert_eq!(cfg.bin_of(-0.01), 2);
        assert_eq!(cfg.bin_of(0.99), 4);
        assert_eq!(cfg.bin_of(1.0), 4);
        assert_eq!(cfg.bin_of(1.5), 5);
    }

    #[test]
    fn histogram_counts_every_step_and_memo_agrees_with_descent() {
        let glass = SkGlass::seeded(10, 1.0, 3).unwrap();
        let mut sampler = GwlSampler::new(&glass, GwlConfig::new(-1.0, 0.0, 0.05, 0), 4).unwrap();
        let palette = [-1, 1];
        for k in 0..20_000u64 {
            sampler.step().unwrap();
            if k % 100 == 0 {
                let cur = sampler.current();
                let values = cur.as_discrete().unwrap().to_vec();
                let id = sampler.basin_of(&values).unwrap();
                let fresh = descend(&glass, &values, &palette).unwrap();
                assert_eq!(sampler.minimum(id).state.as_discrete().unwrap(), &fresh[..]);
            }
        }
        assert_eq!(sampler.result().histogram_total(), 20_000);
    }

    #[test]
    fn transition_pairs_straddle_basins() {
        let glass = SkGlass::seeded(10, 1.0, 5).unwrap();
        let mut cfg = GwlConfig::new(-0.9, 0.0, 0.05, 50_000);
        cfg.energy_scale = 10.0;
        let result = gwl_run(&glass, &cfg, 1).unwrap();
        assert!(!result.transitions.is_empty());
        for t in &result.transitions {
            assert_eq!(t.states.0.hamming(&t.states.1).unwrap(), 1);
            let a = descend(&glass, t.states.0.as_discrete().unwrap(), &[-1, 1]).unwrap();
            let b = descend(&glass, t.states.1.as_discrete().unwrap(), &[-1, 1]).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn discovers_every_minimum_of_small_glass() {
        let glass = SkGlass::seeded(10, 1.0, 6).unwrap();
        let oracle = enumerate(&glass).unwrap();
        let mut cfg = GwlConfig::new(-2.0, 0.5, 0.1, 200_000);
        cfg.energy_scale = 10.0;
        let result = gwl_run(&glass, &cfg, 2).unwrap();
        for m in &oracle.minima {
            assert!(result.minima.iter().any(|g| g.state == m.state));
        }
        assert_eq!(result.minima.len(), oracle.minima.len());
    }

    #[test]
    fn zero_gamma_is_metropolis_with_boltzmann_stationary_law() {
        let n = 8;
        let glass = SkGlass::seeded(n, 1.0, 12).unwrap();
        let mut cfg = GwlConfig::new(-10.0, 10.0, 0.0, 0);
        cfg.temperature = 1.0;
        let mut sampler = GwlSampler::new(&glass, cfg, 9).unwrap();
        let mut counts = vec![0u64; 1 << n];
        let steps = 1_000_000;
        for _ in 0..steps {
            sampler.step().unwrap();
            let code = sampler
                .current()
                .as_discrete()
                .unwrap()
                .iter()
                .enumerate()
                .fold(0usize, |acc, (b, &v)| acc | (usize::from(v == 1) << b));
            counts[code] += 1;
        }
        let weights: Vec<f64> = (0..1usize << n)
            .map(|c| {
                let s = State::Discrete((0..n).map(|b| if c >> b & 1 == 1 { 1 } else { -1 }).collect());
                (-glass.energy(&s).unwrap()).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        let tv: f64 = counts.iter().zip(&weights).map(|(&c, w)| (c as f64 / steps as f64 - w / z).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.05, "tv = {tv}");
    }

    #[test]
    fn empty_spectrum_is_diagnosed() {
        let glass = SkGlass::seeded(8, 1.0, 1).unwrap();
        let cfg = GwlConfig::new(100.0, 200.0, 0.1, 20_000);
        assert!(matches!(gwl_run(&glass, &cfg, 0), Err(ElmError::Spectrum(_))));
    }

    #[test]
    fn merged_chains_union_minima_and_sum_histograms() {
        let glass = SkGlass::seeded(10, 1.0, 7).unwrap();
        let mut cfg = GwlConfig::new(-2.0, 0.5, 0.1, 20_000);
        cfg.energy_scale = 10.0;
        let a = gwl_run(&glass, &cfg, 1).unwrap();
        let b = gwl_run(&glass, &cfg, 2).unwrap();
        let (na, nb) = (a.histogram_total(), b.histogram_total());
        let states: std::collections::HashSet<Vec<i32>> =
            a.minima.iter().chain(&b.minima).map(|m| m.state.as_discrete().unwrap().to_vec()).collect();
        let merged = a.merge(b);
        assert_eq!(merged.histogram_total(), na + nb);
        assert_eq!(merged.minima.len(), states.len());
        let json = serde_json::to_string(&merged).unwrap();
        assert_eq!(serde_json::from_str::<GwlResult>(&json).unwrap(), merged);
    }
}

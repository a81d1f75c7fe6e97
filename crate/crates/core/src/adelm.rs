//! ADELM: proposal, local minimization and AD grouping of minima into
//! metastable basins, with burn-in, consolidation and a testing phase.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attraction_diffusion::{ad_trial, AdParams, Direction};
use crate::error::{ElmError, Result};
use crate::gwl::{GwlConfig, GwlSampler};
use crate::landscapes::EnergyModel;
pub use crate::minimize::{local_minimize, MinimizeConfig};
use crate::seeding::{chain_rng, derive_seed, ChainRng};
use crate::state::{State, StateKind};

const TAG_PROPOSAL: u64 = 0xad_e1_01;
const TAG_GROUPING: u64 = 0xad_e1_02;
const TAG_CONSOLIDATION: u64 = 0xad_e1_03;
const TAG_TUNING: u64 = 0xad_e1_04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum ProposalStrategy {
    /// Each discrete coordinate uniform over the palette; continuous
    /// coordinates uniform in `[lo, hi]`.
    UniformRandom {
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
    /// Standard normal draws in the latent space of a composed model.
    LatentGaussian,
    /// Current state of a persistent GWL chain advanced between proposals.
    GwlChain { gwl: GwlConfig, steps_between: u64 },
}

/// Stream of starting points for minima searches.
pub struct Proposer<'m> {
    model: &'m dyn EnergyModel,
    strategy: ProposalStrategy,
    rng: ChainRng,
    gwl: Option<GwlSampler<'m>>,
}

impl<'m> Proposer<'m> {
    pub fn new(model: &'m dyn EnergyModel, strategy: ProposalStrategy, seed: u64) -> Result<Self> {
        let gwl = match &strategy {
            ProposalStrategy::UniformRandom { lo, hi } => {
                if model.kind() == StateKind::Continuous {
                    match (lo, hi) {
                        (Some(l), Some(h)) if l < h => {}
                        _ => return Err(ElmError::Config("uniform proposals on a continuous model need lo < hi".into())),
                    }
                }
                None
            }
            ProposalStrategy::LatentGaussian => {
                if model.latent_dim().is_none() {
                    return Err(ElmError::Config(format!("latent-gaussian proposals need a latent model; {} has none", model.name())));
                }
                None
            }
            ProposalStrategy::GwlChain { gwl, .. } => {
                if model.kind() != StateKind::Discrete {
                    return Err(ElmError::Config("gwl-chain proposals need a discrete model".into()));
                }
                Some(GwlSampler::new(model, gwl.clone(), derive_seed(seed, &[TAG_PROPOSAL, 1]))?)
            }
        };
        Ok(Proposer { model, strategy, rng: chain_rng(seed, &[TAG_PROPOSAL]), gwl })
    }

    pub fn propose(&mut self) -> Result<State> {
        let dim = self.model.dim();
        match &self.strategy {
            ProposalStrategy::UniformRandom { lo, hi } => Ok(match self.model.palette() {
                Some(p) => State::Discrete((0..dim).map(|_| p.values()[self.rng.random_range(0..p.len())]).collect()),
                None => {
                    let (l, h) = (lo.expect("validated"), hi.expect("validated"));
                    State::Continuous((0..dim).map(|_| self.rng.random_range(l..h)).collect())
                }
            }),
            ProposalStrategy::LatentGaussian => {
                let latent = self.model.latent_dim().expect("validated");
                Ok(State::Continuous((0..latent).map(|_| self.rng.sample(StandardNormal)).collect()))
            }
            ProposalStrategy::GwlChain { steps_between, .. } => {
                let sampler = self.gwl.as_mut().expect("validated");
                sampler.advance(*steps_between)?;
                Ok(sampler.current())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdelmConfig {
    pub burn_in: usize,
    pub testing: usize,
    pub ad: AdParams,
    pub proposal: ProposalStrategy,
    /// AD trials per direction for each representative pair during consolidation.
    #[serde(default = "default_budget")]
    pub consolidation_trials: u32,
    /// Also consolidate once more after the testing phase.
    #[serde(default)]
    pub consolidate_after_testing: bool,
    /// Abort when more basins than this exist; `None` means `10 * sqrt(proposals)`.
    #[serde(default)]
    pub basin_ceiling: Option<usize>,
    #[serde(default)]
    pub minimize: MinimizeConfig,
}

fn default_budget() -> u32 {
    1
}

impl AdelmConfig {
    pub fn new(burn_in: usize, testing: usize, ad: AdParams, proposal: ProposalStrategy) -> Self {
        AdelmConfig {
            burn_in,
            testing,
            ad,
            proposal,
            consolidation_trials: default_budget(),
            consolidate_after_testing: false,
            basin_ceiling: None,
            minimize: MinimizeConfig::default(),
        }
    }

    pub fn ceiling(&self) -> usize {
        self.basin_ceiling
            .unwrap_or_else(|| (10.0 * ((self.burn_in + self.testing) as f64).sqrt()).ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    BurnIn,
    Testing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBarrier {
    /// Basin label at assignment time.
    pub label: usize,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumRecord {
    pub index: usize,
    pub phase: Phase,
    pub state: State,
    pub energy: f64,
    /// Current basin label (1-based), after any consolidation.
    pub label: usize,
    /// Label given when the record was processed.
    pub assigned_label: usize,
    /// Successful groupings `G_n` with barriers `B_j`, in labels of the time.
    pub group: Vec<GroupBarrier>,
    pub founded_basin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub label: usize,
    pub state: State,
    pub energy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Labels before the merge; `kept` holds the lower-energy representative.
    pub kept: usize,
    pub absorbed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinCatalog {
    pub records: Vec<MinimumRecord>,
    pub representatives: Vec<Representative>,
    pub new_basins_in_testing: usize,
    pub merges: Vec<Merge>,
    pub master_seed: u64,
    pub ad: AdParams,
}

impl BasinCatalog {
    pub fn basin_count(&self) -> usize {
        self.representatives.len()
    }

    pub fn representative(&self, label: usize) -> &Representative {
        &self.representatives[label - 1]
    }

    /// Representatives sorted by energy, ties by label.
    pub fn by_energy(&self) -> Vec<&Representative> {
        let mut v: Vec<&Representative> = self.representatives.iter().collect();
        v.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.label.cmp(&b.label)));
        v
    }

    /// One `MinimumRecord` per line.
    pub fn write_records_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "basins": self.basin_count(),
            "records": self.records.len(),
            "new_basins_in_testing": self.new_basins_in_testing,
            "merges": self.merges,
            "representatives": self.representatives,
            "master_seed": self.master_seed,
            "ad": self.ad,
        })
    }

    fn recount(&mut self) {
        for r in &mut self.representatives {
            r.count = 0;
        }
        for rec in &self.records {
            self.representatives[rec.label - 1].count += 1;
        }
    }
}

/// AD in both directions between `y` and `z`; returns the lower successful barrier.
fn connect(
    model: &dyn EnergyModel,
    y: &State,
    z: &State,
    params: &AdParams,
    trials: u32,
    seed_of: impl Fn(Direction, u64) -> u64,
) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for direction in [Direction::AToB, Direction::BToA] {
        let (start, target) = match direction {
            Direction::AToB => (y, z),
            Direction::BToA => (z, y),
        };
        for k in 0..trials as u64 {
            let r = ad_trial(model, start, target, params, chain_rng(seed_of(direction, k), &[]), false)?;
            if let Some(b) = r.barrier {
                best = Some(best.map_or(b, |x: f64| x.min(b)));
            }
        }
    }
    Ok(best)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }
}

/// Runs AD between every pair of representatives and merges connected
/// basins; each merged group keeps its lowest-energy representative and
/// labels are renumbered by the smallest old label in each group.
pub fn consolidate(
    model: &dyn EnergyModel,
    catalog: &BasinCatalog,
    params: &AdParams,
    trials: u32,
    seed: u64,
) -> Result<BasinCatalog> {
    let reps = &catalog.representatives;
    let l = reps.len();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| (i + 1..l).map(move |j| (i, j))).collect();
    let connected: Vec<bool> = pairs
        .par_iter()
        .map(|&(i, j)| {
            connect(model, &reps[i].state, &reps[j].state, params, trials, |d, k| {
                derive_seed(seed, &[TAG_CONSOLIDATION, i as u64, j as u64, d.tag(), k])
            })
            .map(|b| b.is_some())
        })
        .collect::<Result<_>>()?;

    let mut uf = UnionFind((0..l).collect());
    for (&(i, j), &c) in pairs.iter().zip(&connected) {
        if c {
            let (a, b) = (uf.find(i), uf.find(j));
            if a != b {
                uf.0[a.max(b)] = a.min(b);
            }
        }
    }
    // Groups ordered by their smallest member (= root after min-linking).
    let mut new_label = vec![0usize; l];
    let mut roots = Vec::new();
    for i in 0..l {
        let r = uf.find(i);
        if r == i {
            roots.push(i);
        }
    }
    for i in 0..l {
        let r = uf.find(i);
        new_label[i] = roots.iter().position(|&x| x == r).expect("root") + 1;
    }
    let mut representatives: Vec<Representative> = Vec::with_capacity(roots.len());
    let mut merges = catalog.merges.clone();
    for (g, &root) in roots.iter().enumerate() {
        let members: Vec<usize> = (0..l).filter(|&i| uf.find(i) == root).collect();
        let kept = *members
            .iter()
            .min_by(|&&a, &&b| reps[a].energy.total_cmp(&reps[b].energy).then(a.cmp(&b)))
            .expect("nonempty");
        for &m in &members {
            if m != kept {
                merges.push(Merge { kept: reps[kept].label, absorbed: reps[m].label });
            }
        }
        representatives.push(Representative {
            label: g + 1,
            state: reps[kept].state.clone(),
            energy: reps[kept].energy,
            count: 0,
        });
    }
    let mut out = BasinCatalog {
        records: catalog.records.clone(),
        representatives,
        new_basins_in_testing: catalog.new_basins_in_testing,
        merges,
        master_seed: catalog.master_seed,
        ad: catalog.ad.clone(),
    };
    for rec in &mut out.records {
        rec.label = new_label[rec.label - 1];
    }
    out.recount();
    log::info!("consolidation: {l} -> {} basins", out.basin_count());
    Ok(out)
}

/// Algorithm-1 grouping of one new minimum against the current representatives.
fn group_minimum(
    model: &dyn EnergyModel,
    y: &State,
    reps: &[Representative],
    params: &AdParams,
    seed: u64,
    n: usize,
) -> Result<Vec<GroupBarrier>> {
    let outcomes: Vec<Option<f64>> = reps
        .par_iter()
        .map(|rep| {
            connect(model, y, &rep.state, params, 1, |d, k| {
                derive_seed(seed, &[TAG_GROUPING, n as u64, rep.label as u64, d.tag(), k])
            })
        })
        .collect::<Result<_>>()?;
    Ok(reps
        .iter()
        .zip(outcomes)
        .filter_map(|(rep, b)| b.map(|barrier| GroupBarrier { label: rep.label, barrier }))
        .collect())
}

/// Label chosen from a membership set: lowest barrier, ties to the lowest label.
pub fn assignment(group: &[GroupBarrier]) -> Option<usize> {
    group
        .iter()
        .min_by(|a, b| a.barrier.total_cmp(&b.barrier).then(a.label.cmp(&b.label)))
        .map(|g| g.label)
}

/// Runs the full ADELM schedule.
pub fn adelm_run(model: &dyn EnergyModel, cfg: &AdelmConfig, seed: u64) -> Result<BasinCatalog> {
    cfg.ad.validate(model)?;
    let mut proposer = Proposer::new(model, cfg.proposal.clone(), seed)?;
    let ceiling = cfg.ceiling();
    let mut catalog = BasinCatalog {
        records: Vec::new(),
        representatives: Vec::new(),
        new_basins_in_testing: 0,
        merges: Vec::new(),
        master_seed: seed,
        ad: cfg.ad.clone(),
    };
    let total = cfg.burn_in + cfg.testing;
    for n in 0..total {
        let phase = if n < cfg.burn_in { Phase::BurnIn } else { Phase::Testing };
        if n == cfg.burn_in && !catalog.representatives.is_empty() {
            catalog = consolidate(model, &catalog, &cfg.ad, cfg.consolidation_trials, derive_seed(seed, &[0]))?;
        }
        let x = proposer.propose()?;
        let y = local_minimize(model, &x, &cfg.minimize)?;
        let energy = model.energy(&y)?;
        let group = if catalog.representatives.is_empty() {
            Vec::new()
        } else {
            group_minimum(model, &y, &catalog.representatives, &cfg.ad, seed, n)?
        };
        let (label, founded) = match assignment(&group) {
            Some(label) => {
                let rep = &mut catalog.representatives[label - 1];
                if energy < rep.energy {
                    rep.state = y.clone();
                    rep.energy = energy;
                }
                rep.count += 1;
                (label, false)
            }
            None => {
                let label = catalog.representatives.len() + 1;
                catalog.representatives.push(Representative { label, state: y.clone(), energy, count: 1 });
                if phase == Phase::Testing {
                    catalog.new_basins_in_testing += 1;
                }
                (label, true)
            }
        };
        catalog.records.push(MinimumRecord {
            index: n,
            phase,
            state: y,
            energy,
            label,
            assigned_label: label,
            group,
            founded_basin: founded,
        });
        if catalog.representatives.len() > ceiling {
            return Err(ElmError::TuningFailure(format!(
                "{} basins after {} proposals exceed the ceiling {ceiling}; AD rarely succeeds, so T or alpha is likely too low",
                catalog.representatives.len(),
                n + 1
            )));
        }
        log::debug!("proposal {n}: E={energy:.6} label={label} |G|={}", catalog.records[n].group.len());
    }
    if cfg.consolidate_after_testing && cfg.testing > 0 {
        let new_in_testing = catalog.new_basins_in_testing;
        catalog = consolidate(model, &catalog, &cfg.ad, cfg.consolidation_trials, derive_seed(seed, &[1]))?;
        catalog.new_basins_in_testing = new_in_testing;
    }
    log::info!(
        "adelm: {} basins from {} minima, {} new in testing",
        catalog.basin_count(),
        catalog.records.len(),
        catalog.new_basins_in_testing
    );
    Ok(catalog)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCell {
    pub temperature: f64,
    pub alpha: f64,
    pub a_to_relative: bool,
    pub b_to_relative: bool,
    pub a_to_b: bool,
    pub in_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningWindow {
    pub relative_a: State,
    pub relative_b: State,
    pub cells: Vec<TuningCell>,
}

impl TuningWindow {
    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|c| c.in_window)
    }

    /// Largest α inside the window at temperature `t`.
    pub fn alpha_upper_edge(&self, t: f64) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.temperature == t && c.in_window)
            .map(|c| c.alpha)
            .max_by(f64::total_cmp)
    }
}

/// Random displacement of `s` by `scale` (coordinates flipped for discrete
/// models, Gaussian noise otherwise) followed by local minimization.
pub fn perturbed_relative(
    model: &dyn EnergyModel,
    s: &State,
    scale: f64,
    minimize: &MinimizeConfig,
    rng: &mut ChainRng,
) -> Result<State> {
    if scale == 0.0 {
        return Ok(s.clone());
    }
    let moved = match s {
        State::Discrete(v) => {
            let palette = model.palette().expect("discrete").values();
            let mut v = v.clone();
            let flips = (scale.round() as usize).min(v.len());
            let mut idx: Vec<usize> = (0..v.len()).collect();
            for k in 0..flips {
                let j = rng.random_range(k..idx.len());
                idx.swap(k, j);
                let i = idx[k];
                let others: Vec<i32> = palette.iter().copied().filter(|&p| p != v[i]).collect();
                v[i] = others[rng.random_range(0..others.len())];
            }
            State::Discrete(v)
        }
        State::Continuous(x) => State::Continuous(
            x.iter()
                .map(|xi| {
                    let g: f64 = rng.sample(StandardNormal);
                    xi + scale * g
                })
                .collect(),
        ),
    };
    local_minimize(model, &moved, minimize)
}

/// Coarse `(T, α)` scan for settings where each minimum connects with a
/// perturbed relative while the two minima stay separated in both directions.
/// At each temperature the window stops below the smallest α at which the
/// minima connected.
#[allow(clippy::too_many_arguments)]
pub fn tune_heuristic(
    model: &dyn EnergyModel,
    min_a: &State,
    min_b: &State,
    perturbation: f64,
    temperatures: &[f64],
    alphas: &[f64],
    base: &AdParams,
    trials: u32,
    seed: u64,
) -> Result<TuningWindow> {
    let minimize = MinimizeConfig::default();
    let mut rng = chain_rng(seed, &[TAG_TUNING]);
    let relative_a = perturbed_relative(model, min_a, perturbation, &minimize, &mut rng)?;
    let relative_b = perturbed_relative(model, min_b, perturbation, &minimize, &mut rng)?;
    let mut cells = Vec::new();
    let mut alphas = alphas.to_vec();
    alphas.sort_by(f64::total_cmp);
    for (ti, &t) in temperatures.iter().enumerate() {
        let mut crossed = false;
        for (ai, &alpha) in alphas.iter().enumerate() {
            let params = base.with_temperature(t).with_alpha(alpha);
            let probe = |x: &State, y: &State, which: u64| -> Result<bool> {
                Ok(connect(model, x, y, &params, trials, |d, k| {
                    derive_seed(seed, &[TAG_TUNING, ti as u64, ai as u64, which, d.tag(), k])
                })?
                .is_some())
            };
            let a_to_relative = probe(min_a, &relative_a, 0)?;
            let b_to_relative = probe(min_b, &relative_b, 1)?;
            let a_to_b = min_a == min_b || probe(min_a, min_b, 2)?;
            crossed |= a_to_b;
            let in_window = min_a != min_b && a_to_relative && b_to_relative && !crossed;
            cells.push(TuningCell { temperature: t, alpha, a_to_relative, b_to_relative, a_to_b, in_window });
        }
    }
    Ok(TuningWindow { relative_a, relative_b, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{DoubleWell, DoubleWellParams, QuadraticBowl, SkGlass};
    use crate::samplers::Kernel;

    fn well() -> DoubleWell {
        DoubleWell::new(DoubleWellParams { half_width: 2.0, stiffness: 4.0, ..Default::default() }).unwrap()
    }

    fn well_params(alpha: f64) -> AdParams {
        AdParams::continuous(Kernel::RwMetropolis, 0.2, alpha, 0.05, 0.05, 100)
    }

    fn uniform(lo: f64, hi: f64) -> ProposalStrategy {
        ProposalStrategy::UniformRandom { lo: Some(lo), hi: Some(hi) }
    }

    #[test]
    fn convex_bowl_has_one_basin() {
        let bowl = QuadraticBowl::centered(2, 1.0).unwrap();
        let cfg = AdelmConfig::new(10, 10, well_params(5.0), uniform(-3.0, 3.0));
        let cat = adelm_run(&bowl, &cfg, 1).unwrap();
        assert_eq!(cat.basin_count(), 1);
        assert_eq!(cat.new_basins_in_testing, 0);
        assert_eq!(cat.representatives[0].count, 20);
    }

    #[test]
    fn symmetric_double_well_two_basins_or_one() {
        let w = well();
        let cat = adelm_run(&w, &AdelmConfig::new(15, 15, well_params(2.0), uniform(-4.0, 4.0)), 2).unwrap();
        assert_eq!(cat.basin_count(), 2);
        let mut xs: Vec<f64> = cat.representatives.iter().map(|r| r.state.as_continuous().unwrap()[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 2.0).abs() < 1e-3 && (xs[1] - 2.0).abs() < 1e-3, "{xs:?}");
        let merged = adelm_run(&w, &AdelmConfig::new(15, 15, well_params(200.0), uniform(-4.0, 4.0)), 2).unwrap();
        assert_eq!(merged.basin_count(), 1);
    }

    #[test]
    fn catalog_invariants_hold_on_small_glass() {
        let glass = SkGlass::seeded(12, 1.0, 4).unwrap();
        let cfg = AdelmConfig::new(30, 30, AdParams::gibbs(0.1, 1.0, 50), ProposalStrategy::UniformRandom { lo: None, hi: None });
        let cat = adelm_run(&glass, &cfg, 3).unwrap();
        let counts: usize = cat.representatives.iter().map(|r| r.count).sum();
        assert_eq!(counts, cat.records.len());
        for rep in &cat.representatives {
            let min = cat.records.iter().filter(|r| r.label == rep.label).map(|r| r.energy).fold(f64::INFINITY, f64::min);
            assert_eq!(rep.energy, min);
        }
        for rec in &cat.records {
            assert_eq!(rec.energy, glass.energy(&rec.state).unwrap());
            if !rec.group.is_empty() {
                assert_eq!(assignment(&rec.group), Some(rec.assigned_label));
            }
        }
        let again = adelm_run(&glass, &cfg, 3).unwrap();
        assert_eq!(again, cat);
    }

    #[test]
    fn consolidation_merges_duplicates_and_same_basin_plants() {
        let w = well();
        let base = |states: &[(f64, usize)]| BasinCatalog {
            records: states
                .iter()
                .enumerate()
                .map(|(i, &(x, label))| MinimumRecord {
                    index: i,
                    phase: Phase::BurnIn,
                    state: State::Continuous(vec![x]),
                    energy: w.energy_at(x),
                    label,
                    assigned_label: label,
                    group: Vec::new(),
                    founded_basin: true,
                })
                .collect(),
            representatives: states
                .iter()
                .map(|&(x, label)| Representative { label, state: State::Continuous(vec![x]), energy: w.energy_at(x), count: 1 })
                .collect(),
            new_basins_in_testing: 0,
            merges: Vec::new(),
            master_seed: 0,
            ad: well_params(2.0),
        };
        let planted = base(&[(1.9, 1), (-2.0, 2), (2.0, 3), (2.0, 4)]);
        let out = consolidate(&w, &planted, &well_params(2.0), 1, 9).unwrap();
        assert_eq!(out.basin_count(), 2);
        assert_eq!(out.representatives[0].state, State::Continuous(vec![2.0]));
        assert_eq!(out.representatives[1].state, State::Continuous(vec![-2.0]));
        assert_eq!(out.records.iter().map(|r| r.label).collect::<Vec<_>>(), vec![1, 2, 1, 1]);

        let separated = base(&[(-2.0, 1), (2.0, 2)]);
        let same = consolidate(&w, &separated, &well_params(2.0), 1, 9).unwrap();
        assert_eq!(same.representatives, separated.representatives);
        assert_eq!(same.records, separated.records);
    }

    #[test]
    fn latent_proposals_need_latent_model_and_are_standard_normal() {
        let bowl = QuadraticBowl::centered(2, 1.0).unwrap();
        assert!(matches!(Proposer::new(&bowl, ProposalStrategy::LatentGaussian, 0), Err(ElmError::Config(_))));
    }

    #[test]
    fn uniform_spin_proposals_are_unbiased() {
        let glass = SkGlass::seeded(16, 1.0, 0).unwrap();
        let mut p = Proposer::new(&glass, ProposalStrategy::UniformRandom { lo: None, hi: None }, 5).unwrap();
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let s = p.propose().unwrap();
            total += s.as_discrete().unwrap().iter().map(|&v| v as f64).sum::<f64>() / 16.0;
        }
        assert!((total / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn gwl_chain_proposals_move_locally() {
        let glass = SkGlass::seeded(12, 1.0, 0).unwrap();
        let strategy = ProposalStrategy::GwlChain { gwl: GwlConfig::new(-1.0, 0.0, 0.1, 0), steps_between: 5 };
        let mut p = Proposer::new(&glass, strategy, 5).unwrap();
        let mut prev = p.propose().unwrap();
        for _ in 0..100 {
            let next = p.propose().unwrap();
            assert!(next.hamming(&prev).unwrap() <= 5);
            prev = next;
        }
    }

    #[test]
    fn tuning_window_sits_below_cross_boundary() {
        use crate::attraction_diffusion::{phase_sweep, SweepConfig};
        let w = well();
        let (a, b) = (State::Continuous(vec![-2.0]), State::Continuous(vec![2.0]));
        let alphas: Vec<f64> = (1..=12).map(|k| 2.0 * k as f64).collect();
        let win = tune_heuristic(&w, &a, &b, 0.3, &[0.2], &alphas, &well_params(1.0), 20, 4).unwrap();
        assert!(!win.is_empty());
        let sweep = SweepConfig { decrement: 0.1, ..SweepConfig::new(24.0) };
        let diagram = phase_sweep(&w, &a, &b, &[0.2], &well_params(1.0), &sweep, 4, 0).unwrap();
        let boundary = diagram.points.iter().filter_map(|p| p.boundary.alpha()).fold(f64::INFINITY, f64::min);
        assert!(win.alpha_upper_edge(0.2).unwrap() < boundary, "{:?} vs {boundary}", win.alpha_upper_edge(0.2));

        let same = tune_heuristic(&w, &a, &a, 0.3, &[0.2], &alphas, &well_params(1.0), 1, 4).unwrap();
        assert!(same.is_empty());

        let zero = tune_heuristic(&w, &a, &b, 0.0, &[0.2], &alphas, &well_params(1.0), 1, 4).unwrap();
        assert_eq!(zero.relative_a, a);
        let mut crossed = false;
        for c in &zero.cells {
            assert!(c.a_to_relative && c.b_to_relative);
            crossed |= c.a_to_b;
            assert_eq!(c.in_window, !crossed);
        }
    }

    #[test]
    fn ceiling_aborts_with_tuning_failure() {
        let glass = SkGlass::seeded(12, 1.0, 4).unwrap();
        let mut cfg = AdelmConfig::new(40, 0, AdParams::gibbs(0.01, 0.0, 5), ProposalStrategy::UniformRandom { lo: None, hi: None });
        cfg.basin_ceiling = Some(2);
        assert!(matches!(adelm_run(&glass, &cfg, 1), Err(ElmError::TuningFailure(_))));
    }
}

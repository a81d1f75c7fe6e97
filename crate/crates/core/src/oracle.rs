//! Exhaustive references for small instances: every local minimum of an
//! enumerable discrete model and exact minimax barriers over the
//! single-coordinate move graph; widest paths on dense grids for
//! continuous landscapes.

use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::landscapes::{check_state, EnergyModel};
use crate::state::{State, StateKind};

/// Enumeration is refused above this many states.
pub const MAX_ENUMERATED_STATES: usize = 1 << 24;

/// True when no single-coordinate change lowers the energy.
pub fn is_coordinate_stable(model: &dyn EnergyModel, s: &State) -> Result<bool> {
    check_state(model, s)?;
    let palette = model
        .palette()
        .ok_or_else(|| ElmError::unsupported("coordinate stability needs a discrete model"))?;
    let tracker = model.tracker(s)?;
    for i in 0..model.dim() {
        for &v in palette.values() {
            if tracker.delta(i, v) < 0.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMinimum {
    pub state: State,
    pub energy: f64,
}

/// All coordinate-stable states and their pairwise minimax barriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Sorted by energy, ties by enumeration index.
    pub minima: Vec<OracleMinimum>,
    /// `barriers[i][j]`: lowest possible maximum energy over move paths;
    /// the diagonal holds the minimum energies.
    pub barriers: Vec<Vec<f64>>,
    pub states_enumerated: usize,
}

impl OracleReport {
    pub fn index_of(&self, s: &State) -> Option<usize> {
        self.minima.iter().position(|m| &m.state == s)
    }

    /// Minima with energy inside `[lo, hi]`.
    pub fn minima_in(&self, lo: f64, hi: f64) -> Vec<&OracleMinimum> {
        self.minima.iter().filter(|m| m.energy >= lo && m.energy <= hi).collect()
    }
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }
}

/// Adds nodes in ascending energy and joins each to its already-added
/// neighbours; two marked nodes get barrier `e` when their components first
/// meet while adding a node of energy `e`.
fn minimax_sweep(
    energies: &[f64],
    marked: &[usize],
    mut neighbours: impl FnMut(usize, &mut Vec<usize>),
) -> Vec<Vec<f64>> {
    let n = energies.len();
    let k = marked.len();
    let mut barriers = vec![vec![f64::INFINITY; k]; k];
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| energies[a as usize].total_cmp(&energies[b as usize]).then(a.cmp(&b)));
    let mut sets = DisjointSets::new(n);
    let mut added = vec![false; n];
    // Marked nodes held by each root.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (slot, &node) in marked.iter().enumerate() {
        members[node].push(slot);
        barriers[slot][slot] = energies[node];
    }
    let mut scratch = Vec::new();
    for &node in &order {
        let node = node as usize;
        added[node] = true;
        let level = energies[node];
        scratch.clear();
        neighbours(node, &mut scratch);
        for &other in &scratch {
            if !added[other] {
                continue;
            }
            let ra = sets.find(node as u32) as usize;
            let rb = sets.find(other as u32) as usize;
            if ra == rb {
                continue;
            }
            let (keep, gone) = if members[ra].len() >= members[rb].len() { (ra, rb) } else { (rb, ra) };
            let moving = std::mem::take(&mut members[gone]);
            for &x in &members[keep] {
                for &y in &moving {
                    barriers[x][y] = level;
                    barriers[y][x] = level;
                }
            }
            members[keep].extend(moving);
            sets.parent[gone] = keep as u32;
        }
    }
    barriers
}

/// Enumerates every state of a discrete model.
pub fn enumerate(model: &dyn EnergyModel) -> Result<OracleReport> {
    let palette = model
        .palette()
        .ok_or_else(|| ElmError::unsupported("enumeration needs a discrete model"))?
        .values()
        .to_vec();
    let dim = model.dim();
    let q = palette.len();
    let total = (q as f64).powi(dim as i32);
    if total > MAX_ENUMERATED_STATES as f64 {
        return Err(ElmError::invalid(format!("{q}^{dim} states exceed the enumeration limit")));
    }
    let total = total as usize;
    // Mixed-radix code, coordinate 0 least significant.
    let decode = |mut code: usize| -> Vec<i32> {
        (0..dim)
            .map(|_| {
                let v = palette[code % q];
                code /= q;
                v
            })
            .collect()
    };
    let mut energies = Vec::with_capacity(total);
    let mut stable = Vec::new();
    for code in 0..total {
        let state = State::Discrete(decode(code));
        let tracker = model.tracker(&state)?;
        energies.push(tracker.energy());
        let is_min = (0..dim).all(|i| palette.iter().all(|&v| tracker.delta(i, v) >= 0.0));
        if is_min {
            stable.push(code);
        }
    }
    // Exact energies for the reported minima; tracked ones may carry rounding.
    let mut minima: Vec<(usize, f64)> = Vec::with_capacity(stable.len());
    for &code in &stable {
        minima.push((code, model.energy(&State::Discrete(decode(code)))?));
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let marked: Vec<usize> = minima.iter().map(|m| m.0).collect();
    let mut strides = vec![1usize; dim];
    for i in 1..dim {
        strides[i] = strides[i - 1] * q;
    }
    let barriers = minimax_sweep(&energies, &marked, |node, out| {
        for &stride in &strides {
            let digit = (node / stride) % q;
            for d in 0..q {
                if d != digit {
                    out.push(node - digit * stride + d * stride);
                }
            }
        }
    });
    let mut barriers = barriers;
    for (slot, m) in minima.iter().enumerate() {
        barriers[slot][slot] = m.1;
    }
    Ok(OracleReport {
        minima: minima
            .into_iter()
            .map(|(code, energy)| OracleMinimum { state: State::Discrete(decode(code)), energy })
            .collect(),
        barriers,
        states_enumerated: total,
    })
}

/// Axis-aligned box sampled with `points` nodes per axis (endpoints included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

/// Energies of a continuous model on a dense lattice, with nearest-node
/// widest-path barriers between arbitrary points.
pub struct GridOracle {
    spec: GridSpec,
    energies: Vec<f64>,
}

impl GridOracle {
    pub fn new(model: &dyn EnergyModel, spec: GridSpec) -> Result<Self> {
        if model.kind() != StateKind::Continuous {
            return Err(ElmError::unsupported("grid oracle needs a continuous model"));
        }
        let dim = model.dim();
        if spec.lo.len() != dim || spec.hi.len() != dim || spec.points < 2 {
            return Err(ElmError::invalid("grid bounds must match the model dimension, with >= 2 points per axis"));
        }
        if spec.lo.iter().zip(&spec.hi).any(|(l, h)| !(l < h)) {
            return Err(ElmError::invalid("grid needs lo < hi on every axis"));
        }
        let total = (spec.points as f64).powi(dim as i32);
        if total > MAX_ENUMERATED_STATES as f64 {
            return Err(ElmError::invalid("grid too large"));
        }
        let mut oracle = GridOracle { spec, energies: Vec::new() };
        let total = total as usize;
        let mut energies = Vec::with_capacity(total);
        for node in 0..total {
            energies.push(model.energy(&State::Continuous(oracle.coordinates(node)))?);
        }
        oracle.energies = energies;
        Ok(oracle)
    }

    fn dim(&self) -> usize {
        self.spec.lo.len()
    }

    fn coordinates(&self, mut node: usize) -> Vec<f64> {
        let n = self.spec.points;
        (0..self.dim())
            .map(|a| {
                let k = node % n;
                node /= n;
                self.spec.lo[a] + (self.spec.hi[a] - self.spec.lo[a]) * k as f64 / (n - 1) as f64
            })
            .collect()
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let n = self.spec.points;
        let mut node = 0;
        let mut stride = 1;
        for a in 0..self.dim() {
            let t = (x[a] - self.spec.lo[a]) / (self.spec.hi[a] - self.spec.lo[a]) * (n - 1) as f64;
            let k = t.round().clamp(0.0, (n - 1) as f64) as usize;
            node += k * stride;
            stride *= n;
        }
        node
    }

    pub fn node_energy(&self, node: usize) -> f64 {
        self.energies[node]
    }

    /// Lowest grid node reachable by coordinate descent on the lattice from `x`.
    pub fn lattice_minimum(&self, x: &[f64]) -> Vec<f64> {
        let mut node = self.nearest_node(x);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            self.neighbours(node, &mut buf);
            let best = buf.iter().copied().min_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
            match best {
                Some(b) if self.energies[b] < self.energies[node] => node = b,
                _ => return self.coordinates(node),
            }
        }
    }

    fn neighbours(&self, node: usize, out: &mut Vec<usize>) {
        let n = self.spec.points;
        let mut stride = 1;
        for _ in 0..self.dim() {
            let k = (node / stride) % n;
            if k > 0 {
                out.push(node - stride);
            }
            if k + 1 < n {
                out.push(node + stride);
            }
            stride *= n;
        }
    }

    /// Pairwise widest-path barriers between the nodes nearest to `points`.
    pub fn barrier_matrix(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let marked: Vec<usize> = points.iter().map(|p| self.nearest_node(p)).collect();
        let mut distinct = marked.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let inner = minimax_sweep(&self.energies, &distinct, |node, out| self.neighbours(node, out));
        let slot = |node: usize| distinct.binary_search(&node).expect("marked");
        marked
            .iter()
            .map(|&a| marked.iter().map(|&b| inner[slot(a)][slot(b)]).collect())
            .collect()
    }

    pub fn barrier(&self, a: &[f64], b: &[f64]) -> f64 {
        self.barrier_matrix(&[a.to_vec(), b.to_vec()])[0][1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{GaussianComponent, GaussianMixture, SkGlass};

    fn sk3() -> SkGlass {
        // J12 = 1, J13 = -0.5, J23 = 0.25
        SkGlass::from_matrix(3, 1.0, vec![0.0, 1.0, -0.5, 1.0, 0.0, 0.25, -0.5, 0.25, 0.0]).unwrap()
    }

    #[test]
    fn hand_enumerable_three_spin_glass() {
        let g = sk3();
        let report = enumerate(&g).unwrap();
        assert_eq!(report.states_enumerated, 8);
        // E = -(J12 s1 s2 + J13 s1 s3 + J23 s2 s3):
        // (+,+,+) -0.75  (+,+,-) -1.25  (+,-,+) 1.75  (+,-,-) 0.25
        // (-,+,+)  0.25  (-,+,-)  1.75  (-,-,+) -1.25 (-,-,-) -0.75
        // Only the -1.25 pair is stable; both routes between them peak at 0.25.
        assert_eq!(report.minima.len(), 2);
        assert_eq!(report.minima[0].energy, -1.25);
        assert_eq!(report.minima[1].energy, -1.25);
        let pair: Vec<&State> = report.minima.iter().map(|m| &m.state).collect();
        assert_eq!(pair[0], &pair[1].mirrored());
        assert_eq!(report.barriers[0][1], 0.25);
        assert_eq!(report.barriers[1][0], 0.25);
    }

    #[test]
    fn minima_match_flip_stability_and_barriers_are_ultrametric() {
        let g = SkGlass::seeded(10, 1.0, 8).unwrap();
        let report = enumerate(&g).unwrap();
        for m in &report.minima {
            assert!(is_coordinate_stable(&g, &m.state).unwrap());
        }
        let k = report.minima.len();
        for i in 0..k {
            for j in 0..k {
                let b = report.barriers[i][j];
                assert!(b >= report.minima[i].energy.max(report.minima[j].energy));
                for l in 0..k {
                    assert!(b <= report.barriers[i][l].max(report.barriers[l][j]));
                }
            }
        }
    }

    #[test]
    fn grid_barrier_between_two_gaussians() {
        let mixture = GaussianMixture::new(vec![
            GaussianComponent { weight: 0.5, mean: vec![-2.0], scale: vec![1.0] },
            GaussianComponent { weight: 0.5, mean: vec![2.0], scale: vec![1.0] },
        ])
        .unwrap();
        let grid = GridOracle::new(&mixture, GridSpec { lo: vec![-6.0], hi: vec![6.0], points: 1201 }).unwrap();
        let b = grid.barrier(&[-2.0], &[2.0]);
        assert!((b - mixture.energy_at(&[0.0])).abs() < 1e-12);
        let low = grid.lattice_minimum(&[-1.0]);
        assert!((low[0] + 2.0).abs() < 0.02);
    }
}

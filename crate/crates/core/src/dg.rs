//! Disconnectivity graphs: single-linkage merge trees over barrier matrices.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::barriers::BarrierMatrix;
use crate::error::{ElmError, Result};

/// Non-finite energies travel through JSON as `null`.
mod energy_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &f64, s: S) -> Result<S::Ok, S::Error> {
        if e.is_finite() {
            s.serialize_f64(*e)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgNode {
    /// Leaf energy, or the barrier at which the children merge.
    #[serde(with = "energy_or_null")]
    pub energy: f64,
    /// Basin id for leaves.
    pub basin: Option<usize>,
    pub children: Vec<usize>,
    /// Number of minima represented below this node.
    pub count: u64,
}

impl DgNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Leaves occupy node slots `0..leaf_count` in basin order; internal nodes
/// follow in merge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgTree {
    pub nodes: Vec<DgNode>,
    pub root: usize,
    pub leaf_count: usize,
}

/// One agglomeration step: the two leaf sets joined at `energy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub energy: f64,
    pub left: BTreeSet<usize>,
    pub right: BTreeSet<usize>,
}

impl MergeStep {
    /// The merge as an unordered pair of leaf sets.
    pub fn bipartition(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        if self.left.first() <= self.right.first() {
            (self.left.clone(), self.right.clone())
        } else {
            (self.right.clone(), self.left.clone())
        }
    }
}

/// Single-linkage agglomeration. Merges come in order of (barrier, smaller
/// leaf id, larger leaf id) of the joining pair. Missing pairs never merge;
/// leftover clusters hang from a virtual root at `+inf`.
pub fn build_dg(matrix: &BarrierMatrix, counts: Option<&[u64]>) -> Result<DgTree> {
    let k = matrix.energies.len();
    if k == 0 {
        return Err(ElmError::invalid("a disconnectivity graph needs at least one representative"));
    }
    if let Some(c) = counts {
        if c.len() != k {
            return Err(ElmError::invalid(format!("{} counts for {k} representatives", c.len())));
        }
    }
    let dense = matrix.dense();
    let mut nodes: Vec<DgNode> = (0..k)
        .map(|i| DgNode { energy: matrix.energies[i], basin: Some(i), children: Vec::new(), count: counts.map_or(1, |c| c[i]) })
        .collect();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let b = dense[i][j].min(dense[j][i]);
            if b.is_finite() {
                edges.push((b, i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut parent: Vec<usize> = (0..k).collect();
    let mut top: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for (b, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri == rj {
            continue;
        }
        let (ni, nj) = (top[ri], top[rj]);
        let energy = b.max(nodes[ni].energy).max(nodes[nj].energy);
        nodes.push(DgNode { energy, basin: None, children: vec![ni, nj], count: nodes[ni].count + nodes[nj].count });
        parent[rj] = ri;
        top[ri] = nodes.len() - 1;
    }
    let mut roots: Vec<usize> = (0..k).filter(|&i| find(&mut parent, i) == i).map(|i| top[i]).collect();
    let root = if roots.len() == 1 {
        roots[0]
    } else {
        roots.sort_unstable();
        let count = roots.iter().map(|&r| nodes[r].count).sum();
        nodes.push(DgNode { energy: f64::INFINITY, basin: None, children: roots, count });
        nodes.len() - 1
    };
    Ok(DgTree { nodes, root, leaf_count: k })
}

impl DgTree {
    pub fn leaves_under(&self, node: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match self.nodes[n].basin {
                Some(b) => {
                    out.insert(b);
                }
                None => stack.extend(&self.nodes[n].children),
            }
        }
        out
    }

    /// Internal binary merges in creation order; the virtual root is excluded.
    pub fn merges(&self) -> Vec<MergeStep> {
        self.nodes[self.leaf_count..]
            .iter()
            .filter(|n| n.energy.is_finite() && n.children.len() == 2)
            .map(|n| MergeStep {
                energy: n.energy,
                left: self.leaves_under(n.children[0]),
                right: self.leaves_under(n.children[1]),
            })
            .collect()
    }

    /// The last `n` merges, highest first, as unordered leaf-set pairs.
    pub fn top_merges(&self, n: usize) -> Vec<(BTreeSet<usize>, BTreeSet<usize>)> {
        self.merges().iter().rev().take(n).map(MergeStep::bipartition).collect()
    }

    /// Energy of the lowest common ancestor of two leaves.
    pub fn merge_energy(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.nodes[a].energy;
        }
        let mut parent = vec![usize::MAX; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                parent[c] = i;
            }
        }
        let mut seen = BTreeSet::new();
        let mut x = a;
        while x != usize::MAX {
            seen.insert(x);
            x = parent[x];
        }
        let mut y = b;
        while !seen.contains(&y) {
            y = parent[y];
        }
        self.nodes[y].energy
    }

    /// Leaves left to right: children ordered by their own energy, ties by
    /// smallest leaf id.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.leaf_count);
        self.order_into(self.root, &mut out);
        out
    }

    fn order_into(&self, node: usize, out: &mut Vec<usize>) {
        let n = &self.nodes[node];
        if let Some(b) = n.basin {
            out.push(b);
            return;
        }
        let mut children = n.children.clone();
        children.sort_by(|&x, &y| {
            self.nodes[x]
                .energy
                .total_cmp(&self.nodes[y].energy)
                .then(self.leaves_under(x).first().cmp(&self.leaves_under(y).first()))
        });
        for c in children {
            self.order_into(c, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Scale leaf radii by `sqrt(count)`; otherwise all leaves share one radius.
    #[serde(default = "yes")]
    pub size_by_count: bool,
    #[serde(default = "yes")]
    pub labels: bool,
    /// Radius of a single-member leaf in SVG pixels.
    #[serde(default = "default_radius")]
    pub base_radius: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn yes() -> bool {
    true
}

fn default_radius() -> f64 {
    4.0
}

fn default_width() -> f64 {
    640.0
}

fn default_height() -> f64 {
    480.0
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            size_by_count: true,
            labels: true,
            base_radius: default_radius(),
            width: default_width(),
            height: default_height(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub dot: String,
    pub svg: String,
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN: f64 = 30.0;

struct Layout {
    x: Vec<f64>,
    /// SVG y; smaller is higher energy.
    y: Vec<f64>,
    e_lo: f64,
    e_hi: f64,
    top: f64,
    bottom: f64,
}

impl Layout {
    fn new(tree: &DgTree, opts: &RenderOptions) -> Layout {
        let finite: Vec<f64> = tree.nodes.iter().map(|n| n.energy).filter(|e| e.is_finite()).collect();
        let e_lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let mut e_hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if e_hi <= e_lo {
            e_hi = e_lo + 1.0;
        }
        let (top, bottom) = (MARGIN * 2.0, opts.height - MARGIN);
        let order = tree.leaf_order();
        let span = opts.width - MARGIN_LEFT - MARGIN;
        let mut x = vec![0.0; tree.nodes.len()];
        for (pos, &leaf) in order.iter().enumerate() {
            x[leaf] = MARGIN_LEFT + span * (pos as f64 + 0.5) / order.len() as f64;
        }
        for i in tree.leaf_count..tree.nodes.len() {
            let c = &tree.nodes[i].children;
            x[i] = c.iter().map(|&j| x[j]).sum::<f64>() / c.len() as f64;
        }
        let mut layout = Layout { x, y: Vec::new(), e_lo, e_hi, top, bottom };
        layout.y = tree
            .nodes
            .iter()
            .map(|n| if n.energy.is_finite() { layout.y_of(n.energy) } else { MARGIN })
            .collect();
        layout
    }

    fn y_of(&self, e: f64) -> f64 {
        self.bottom - (e - self.e_lo) / (self.e_hi - self.e_lo) * (self.bottom - self.top)
    }
}

fn radius(node: &DgNode, opts: &RenderOptions) -> f64 {
    if opts.size_by_count {
        opts.base_radius * (node.count as f64).sqrt()
    } else {
        opts.base_radius
    }
}

fn fmt_energy(e: f64) -> String {
    if e.is_finite() {
        format!("{e:.4}")
    } else {
        "inf".to_string()
    }
}

/// DOT (pinned positions, y up with energy) and standalone SVG renderings.
pub fn render_dg(tree: &DgTree, opts: &RenderOptions) -> Rendered {
    let layout = Layout::new(tree, opts);
    let mut dot = String::new();
    writeln!(dot, "graph dg {{").unwrap();
    writeln!(dot, "  node [shape=circle, fixedsize=true];").unwrap();
    for (i, n) in tree.nodes.iter().enumerate() {
        // Points, 72 per inch; DOT y grows upward.
        let (px, py) = (layout.x[i], opts.height - layout.y[i]);
        match n.basin {
            Some(b) => {
                let label = if opts.labels { b.to_string() } else { String::new() };
                writeln!(
                    dot,
                    "  n{i} [label=\"{label}\", pos=\"{px:.2},{py:.2}!\", width={:.4}, energy=\"{}\", count={}];",
                    2.0 * radius(n, opts) / 72.0,
                    fmt_energy(n.energy),
                    n.count
                )
                .unwrap();
            }
            None => {
                let style = if n.energy.is_finite() { "solid" } else { "dashed" };
                writeln!(
                    dot,
                    "  n{i} [shape=point, label=\"\", pos=\"{px:.2},{py:.2}!\", energy=\"{}\", style={style}];",
                    fmt_energy(n.energy)
                )
                .unwrap();
            }
        }
    }
    for (i, n) in tree.nodes.iter().enumerate() {
        for &c in &n.children {
            writeln!(dot, "  n{i} -- n{c};").unwrap();
        }
    }
    writeln!(dot, "}}").unwrap();

    let mut svg = String::new();
    let (w, h) = (opts.width, opts.height);
    writeln!(svg, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">").unwrap();
    writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>").unwrap();
    let axis_x = MARGIN_LEFT - 20.0;
    writeln!(
        svg,
        "<line class=\"axis\" x1=\"{axis_x:.2}\" y1=\"{:.2}\" x2=\"{axis_x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        layout.top, layout.bottom
    )
    .unwrap();
    for t in 0..=4 {
        let e = layout.e_lo + (layout.e_hi - layout.e_lo) * t as f64 / 4.0;
        let y = layout.y_of(e);
        writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{axis_x:.2}\" y2=\"{y:.2}\" stroke=\"black\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            axis_x - 4.0,
            axis_x - 6.0,
            y + 3.0,
            fmt_energy(e)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"12\" y=\"{:.2}\" font-size=\"11\" transform=\"rotate(-90 12 {:.2})\" text-anchor=\"middle\">energy</text>",
        (layout.top + layout.bottom) / 2.0,
        (layout.top + layout.bottom) / 2.0
    )
    .unwrap();
    for (i, n) in tree.nodes.iter().enumerate() {
        if n.is_leaf() {
            continue;
        }
        let dash = if n.energy.is_finite() { "" } else { " stroke-dasharray=\"4 3\"" };
        let xs: Vec<f64> = n.children.iter().map(|&c| layout.x[c]).collect();
        let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        writeln!(
            svg,
            "<line x1=\"{x0:.2}\" y1=\"{:.2}\" x2=\"{x1:.2}\" y2=\"{:.2}\" stroke=\"black\"{dash}/>",
            layout.y[i], layout.y[i]
        )
        .unwrap();
        for &c in &n.children {
            writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"{dash}/>",
                layout.x[c], layout.y[c], layout.x[c], layout.y[i]
            )
            .unwrap();
        }
        if !n.energy.is_finite() {
            writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"0\" stroke=\"black\"{dash}/>",
                layout.x[i], layout.y[i], layout.x[i]
            )
            .unwrap();
        }
    }
    for (i, n) in tree.nodes.iter().enumerate() {
        let Some(b) = n.basin else { continue };
        writeln!(
            svg,
            "<circle class=\"leaf\" data-basin=\"{b}\" data-count=\"{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.4}\" fill=\"steelblue\"/>",
            n.count,
            layout.x[i],
            layout.y[i],
            radius(n, opts)
        )
        .unwrap();
        if opts.labels {
            writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{b}</text>",
                layout.x[i],
                layout.y[i] + radius(n, opts) + 11.0
            )
            .unwrap();
        }
    }
    writeln!(svg, "</svg>").unwrap();
    Rendered { dot, svg }
}

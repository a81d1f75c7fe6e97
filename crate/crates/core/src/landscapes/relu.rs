//! Dense feed-forward networks used as image energies and latent generators.
//!
//! Weight files start with a text header followed by a binary payload:
//!
//! ```text
//! ELMNET 1
//! sigma2 <prior variance>
//! layers <count>
//! <in> <out> <relu|tanh|identity>     (one line per layer)
//! end
//! ```
//!
//! The payload is, for each layer in order, the `out x in` weight matrix in
//! row-major order and then the `out` biases, all as little-endian IEEE-754
//! `f32`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{continuous_values, EnergyModel};
use crate::error::{ElmError, Result};
use crate::seeding::chain_rng;
use crate::state::{State, StateKind};

const MAGIC: &str = "ELMNET 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative with the subgradient 0 at a ReLU kink.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    fn parse(word: &str) -> Option<Self> {
        match word {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(ElmError::invalid("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(ElmError::invalid(format!(
                "layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(DenseLayer { inputs, outputs, weights, bias, activation })
    }

    /// Square identity map with zero bias and no activation.
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        DenseLayer { inputs: dim, outputs: dim, weights, bias: vec![0.0; dim], activation: Activation::Identity }
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias[o]
            })
            .collect()
    }
}

/// Ordered dense layers plus the prior variance used by descriptor energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluNetworkSpec {
    pub layers: Vec<DenseLayer>,
    pub prior_variance: f64,
}

/// Per-layer pre-activations kept for the backward pass.
struct ForwardPass {
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ReluNetworkSpec {
    pub fn new(layers: Vec<DenseLayer>, prior_variance: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(ElmError::invalid("network needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(ElmError::invalid(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(ElmError::invalid("prior variance must be positive"));
        }
        Ok(ReluNetworkSpec { layers, prior_variance })
    }

    /// Gaussian-initialized network with weights of standard deviation
    /// `scale / sqrt(fan_in)`; every value is exactly representable as `f32`.
    pub fn random(widths: &[usize], activations: &[Activation], scale: f64, prior_variance: f64, seed: u64) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(ElmError::invalid("need one activation per layer and at least two widths"));
        }
        let mut rng = chain_rng(seed, &[0x4e_e7]);
        let mut layers = Vec::new();
        for (k, act) in activations.iter().enumerate() {
            let (inputs, outputs) = (widths[k], widths[k + 1]);
            let normal = Normal::new(0.0, scale / (inputs as f64).sqrt()).map_err(|e| ElmError::invalid(e.to_string()))?;
            let weights = (0..inputs * outputs).map(|_| normal.sample(&mut rng) as f32 as f64).collect();
            let bias = (0..outputs).map(|_| (rng.random_range(-0.5..0.5) * scale) as f32 as f64).collect();
            layers.push(DenseLayer::new(inputs, outputs, weights, bias, *act)?);
        }
        Self::new(layers, prior_variance)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    fn forward_pass(&self, x: &[f64]) -> Result<ForwardPass> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.pre_activation(&a);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(ElmError::Numeric { layer: k, detail: "pre-activation overflow".into() });
            }
            a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
        }
        Ok(ForwardPass { pre, output: a })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(ElmError::invalid(format!("network input dim {} != {}", x.len(), self.input_dim())));
        }
        Ok(self.forward_pass(x)?.output)
    }

    /// `J(x)ᵀ · upstream`, the gradient of `upstream · f(x)` with respect to `x`.
    fn vector_jacobian(&self, pass: &ForwardPass, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut delta = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            for (d, &z) in delta.iter_mut().zip(&pass.pre[k]) {
                *d *= layer.activation.derivative(z);
            }
            let mut next = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += w * delta[o];
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(ElmError::Numeric { layer: k, detail: "gradient overflow".into() });
            }
            delta = next;
        }
        Ok(delta)
    }

    /// On/off pattern of every ReLU unit at `x`, layer by layer.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        let pass = self.forward_pass(x)?;
        Ok(self
            .layers
            .iter()
            .zip(&pass.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect())
    }

    /// Smallest |pre-activation| over all ReLU units at `x`.
    pub fn kink_margin(&self, x: &[f64]) -> Result<f64> {
        let pass = self.forward_pass(x)?;
        Ok(self
            .layers
            .iter()
            .zip(&pass.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC}\nsigma2 {:e}\nlayers {}\n", self.prior_variance, self.layers.len());
        for l in &self.layers {
            header.push_str(&format!("{} {} {}\n", l.inputs, l.outputs, l.activation.keyword()));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for l in &self.layers {
            for &w in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&(w as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = HeaderCursor { bytes, pos: 0 };
        let magic_at = cursor.pos;
        if cursor.line()? != MAGIC {
            return Err(parse_error(magic_at, format!("expected `{MAGIC}`")));
        }
        let at = cursor.pos;
        let sigma2 = match cursor.line()?.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["sigma2", v] => v.parse::<f64>().map_err(|_| parse_error(at, "bad sigma2 value"))?,
            _ => return Err(parse_error(at, "expected `sigma2 <value>`")),
        };
        let at = cursor.pos;
        let count = match cursor.line()?.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["layers", v] => v.parse::<usize>().map_err(|_| parse_error(at, "bad layer count"))?,
            _ => return Err(parse_error(at, "expected `layers <count>`")),
        };
        if count == 0 {
            return Err(parse_error(at, "layer count must be positive"));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let at = cursor.pos;
            let line = cursor.line()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let shape = match parts.as_slice() {
                [i, o, a] => (|| Some((i.parse::<usize>().ok()?, o.parse::<usize>().ok()?, Activation::parse(a)?)))(),
                _ => None,
            };
            let shape = shape.ok_or_else(|| parse_error(at, format!("bad layer line `{line}`")))?;
            if shape.0 == 0 || shape.1 == 0 {
                return Err(parse_error(at, "layer dimensions must be positive"));
            }
            shapes.push(shape);
        }
        let at = cursor.pos;
        if cursor.line()? != "end" {
            return Err(parse_error(at, "expected `end`"));
        }
        let payload_start = cursor.pos;
        let needed: usize = shapes.iter().map(|(i, o, _)| (i * o + o) * 4).sum();
        let available = bytes.len() - payload_start;
        if available != needed {
            return Err(parse_error(
                payload_start + available.min(needed),
                format!("payload has {available} bytes, layer shapes need {needed}"),
            ));
        }
        let mut floats = bytes[payload_start..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut layers = Vec::with_capacity(count);
        for (k, (i, o, act)) in shapes.into_iter().enumerate() {
            let weights: Vec<f64> = floats.by_ref().take(i * o).collect();
            let bias: Vec<f64> = floats.by_ref().take(o).collect();
            if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
                return Err(ElmError::Numeric { layer: k, detail: "non-finite weight in file".into() });
            }
            layers.push(DenseLayer::new(i, o, weights, bias, act)?);
        }
        Self::new(layers, sigma2).map_err(|e| parse_error(magic_at, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

fn parse_error(offset: usize, message: impl Into<String>) -> ElmError {
    ElmError::Parse { offset, message: message.into() }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_error(self.pos, "unterminated header line"))?;
        let text = std::str::from_utf8(&rest[..end]).map_err(|e| parse_error(self.pos + e.valid_up_to(), "header is not UTF-8"))?;
        self.pos += end + 1;
        Ok(text.trim_end_matches('\r').trim())
    }
}

/// Image energy `E(I) = -F(I) + ||I||² / (2σ²)` with scalar score network `F`.
#[derive(Debug, Clone)]
pub struct DescriptorEnergy {
    net: ReluNetworkSpec,
    name: String,
}

impl DescriptorEnergy {
    pub fn new(net: ReluNetworkSpec) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(ElmError::invalid(format!("descriptor network must output a scalar, got {}", net.output_dim())));
        }
        let name = format!("relu-descriptor-{}d", net.input_dim());
        Ok(DescriptorEnergy { net, name })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ReluNetworkSpec::load(path)?)
    }

    pub fn network(&self) -> &ReluNetworkSpec {
        &self.net
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        let score = self.net.forward_pass(x)?.output[0];
        let norm: f64 = x.iter().map(|v| v * v).sum();
        let e = -score + norm / (2.0 * self.net.prior_variance);
        if !e.is_finite() {
            return Err(ElmError::Numeric { layer: self.net.layers.len() - 1, detail: "energy overflow".into() });
        }
        Ok(e)
    }

    fn gradient_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pass = self.net.forward_pass(x)?;
        let score_grad = self.net.vector_jacobian(&pass, &[1.0])?;
        Ok(x.iter()
            .zip(score_grad)
            .map(|(xi, g)| -g + xi / self.net.prior_variance)
            .collect())
    }
}

impl EnergyModel for DescriptorEnergy {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn kind(&self) -> StateKind {
        StateKind::Continuous
    }

    fn energy(&self, s: &State) -> Result<f64> {
        self.energy_at(continuous_values(self, s)?)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, s: &State) -> Result<Vec<f64>> {
        self.gradient_at(continuous_values(self, s)?)
    }

    fn parameters(&self) -> serde_json::Value {
        json!({
            "family": "relu_descriptor",
            "input_dim": self.net.input_dim(),
            "layers": self.net.layers.iter().map(|l| json!([l.inputs, l.outputs, l.activation])).collect::<Vec<_>>(),
            "prior_variance": self.net.prior_variance,
        })
    }
}

/// Latent-space energy `E(g(Z))` of a descriptor composed with a generator.
#[derive(Debug, Clone)]
pub struct ComposedLatentEnergy {
    generator: ReluNetworkSpec,
    descriptor: DescriptorEnergy,
    name: String,
}

impl ComposedLatentEnergy {
    pub fn new(generator: ReluNetworkSpec, descriptor: ReluNetworkSpec) -> Result<Self> {
        if generator.output_dim() != descriptor.input_dim() {
            return Err(ElmError::Composition {
                generator_out: generator.output_dim(),
                descriptor_in: descriptor.input_dim(),
            });
        }
        let descriptor = DescriptorEnergy::new(descriptor)?;
        let name = format!("latent-{}d-to-{}d", generator.input_dim(), generator.output_dim());
        Ok(ComposedLatentEnergy { generator, descriptor, name })
    }

    /// Image `g(Z)` for a latent state.
    pub fn generate(&self, z: &State) -> Result<Vec<f64>> {
        self.generator.forward(continuous_values(self, z)?)
    }

    pub fn descriptor(&self) -> &DescriptorEnergy {
        &self.descriptor
    }
}

/// Composes a generator with a descriptor network into a latent-space energy.
pub fn compose(generator: ReluNetworkSpec, descriptor: ReluNetworkSpec) -> Result<ComposedLatentEnergy> {
    ComposedLatentEnergy::new(generator, descriptor)
}

impl EnergyModel for ComposedLatentEnergy {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.generator.input_dim()
    }

    fn kind(&self) -> StateKind {
        StateKind::Continuous
    }

    fn energy(&self, s: &State) -> Result<f64> {
        let image = self.generator.forward_pass(continuous_values(self, s)?)?.output;
        self.descriptor.energy_at(&image)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, s: &State) -> Result<Vec<f64>> {
        let pass = self.generator.forward_pass(continuous_values(self, s)?)?;
        let image_grad = self.descriptor.gradient_at(&pass.output)?;
        self.generator.vector_jacobian(&pass, &image_grad)
    }

    fn latent_dim(&self) -> Option<usize> {
        Some(self.generator.input_dim())
    }

    fn parameters(&self) -> serde_json::Value {
        json!({
            "family": "relu_latent",
            "latent_dim": self.generator.input_dim(),
            "image_dim": self.generator.output_dim(),
            "descriptor": self.descriptor.parameters(),
        })
    }
}

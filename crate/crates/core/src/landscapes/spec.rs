use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    relu, DescriptorEnergy, Discretized, DoubleWell, DoubleWellParams, GaussianComponent, GaussianMixture, IsingModel,
    QuadraticBowl, ReluNetworkSpec, SharedModel, SkGlass,
};
use crate::error::{ElmError, Result};
use crate::state::Palette;

fn one() -> f64 {
    1.0
}

/// Declarative description of a landscape, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LandscapeSpec {
    Sk {
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        temperature: f64,
        /// Coupling dump to load instead of drawing from `seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        couplings_csv: Option<PathBuf>,
    },
    Ising {
        side: usize,
        #[serde(default = "one")]
        temperature: f64,
        #[serde(default)]
        field: f64,
    },
    GaussianMixture {
        components: Vec<GaussianComponent>,
    },
    DoubleWell(DoubleWellParams),
    Quadratic {
        center: Vec<f64>,
        #[serde(default = "one")]
        variance: f64,
    },
    Relu {
        descriptor: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generator: Option<PathBuf>,
        /// Restrict image coordinates to this many grey levels over 0..=255.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        palette_levels: Option<usize>,
    },
}

impl LandscapeSpec {
    /// Builds the model, resolving relative file paths against `base`.
    pub fn build(&self, base: &Path) -> Result<SharedModel> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        Ok(match self {
            LandscapeSpec::Sk { n, seed, temperature, couplings_csv } => match couplings_csv {
                Some(path) => {
                    let file = File::open(resolve(path))?;
                    Arc::new(SkGlass::read_couplings_csv(*n, *temperature, BufReader::new(file))?)
                }
                None => Arc::new(SkGlass::seeded(*n, *temperature, *seed)?),
            },
            LandscapeSpec::Ising { side, temperature, field } => Arc::new(IsingModel::new(*side, *temperature, *field)?),
            LandscapeSpec::GaussianMixture { components } => Arc::new(GaussianMixture::new(components.clone())?),
            LandscapeSpec::DoubleWell(p) => Arc::new(DoubleWell::new(p.clone())?),
            LandscapeSpec::Quadratic { center, variance } => Arc::new(QuadraticBowl::new(center.clone(), *variance)?),
            LandscapeSpec::Relu { descriptor, generator, palette_levels } => {
                let desc = ReluNetworkSpec::load(&resolve(descriptor))?;
                let model: SharedModel = match generator {
                    Some(g) => Arc::new(relu::compose(ReluNetworkSpec::load(&resolve(g))?, desc)?),
                    None => Arc::new(DescriptorEnergy::new(desc)?),
                };
                match palette_levels {
                    Some(levels) => {
                        if generator.is_some() {
                            return Err(ElmError::Config("latent landscapes cannot be discretized".into()));
                        }
                        Arc::new(Discretized::new(model, Palette::pixel_levels(*levels)?)?)
                    }
                    None => model,
                }
            }
        })
    }

    /// File paths this spec reads.
    pub fn referenced_files(&self) -> Vec<&Path> {
        match self {
            LandscapeSpec::Sk { couplings_csv: Some(p), .. } => vec![p.as_path()],
            LandscapeSpec::Relu { descriptor, generator, .. } => {
                let mut v = vec![descriptor.as_path()];
                v.extend(generator.as_deref());
                v
            }
            _ => Vec::new(),
        }
    }
}

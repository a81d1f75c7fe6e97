use std::fs;
use std::path::{Path, PathBuf};

use adelm_core::adelm::{AdelmConfig, MinimizeConfig, ProposalStrategy, Representative};
use adelm_core::attraction_diffusion::{AdParams, SweepConfig};
use adelm_core::barriers::{AdMethod, BarrierOptions, Method, NebConfig};
use adelm_core::dg::RenderOptions;
use adelm_core::gwl::{GwlConfig, TransitionPair};
use adelm_core::landscapes::LandscapeSpec;
use adelm_core::oracle::GridSpec;
use adelm_core::State;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub landscape: LandscapeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad: Option<AdParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gwl: Option<GwlSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barriers: Option<BarrierSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolate: Option<InterpolateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dg: Option<DgSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
}

fn one_u32() -> u32 {
    1
}

fn yes() -> bool {
    true
}

fn default_retries() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub burn_in: usize,
    pub testing: usize,
    pub proposal: ProposalStrategy,
    #[serde(default = "one_u32")]
    pub consolidation_trials: u32,
    #[serde(default)]
    pub consolidate_after_testing: bool,
    #[serde(default)]
    pub basin_ceiling: Option<usize>,
    #[serde(default)]
    pub minimize: MinimizeConfig,
}

impl MapSection {
    pub fn adelm(&self, ad: AdParams) -> AdelmConfig {
        AdelmConfig {
            burn_in: self.burn_in,
            testing: self.testing,
            ad,
            proposal: self.proposal.clone(),
            consolidation_trials: self.consolidation_trials,
            consolidate_after_testing: self.consolidate_after_testing,
            basin_ceiling: self.basin_ceiling,
            minimize: self.minimize.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwlSection {
    #[serde(flatten)]
    pub config: GwlConfig,
    /// Independent chains, merged afterwards.
    #[serde(default = "one_usize")]
    pub runs: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub temperatures: Vec<f64>,
    pub a: State,
    pub b: State,
    #[serde(flatten)]
    pub sweep: SweepConfig,
    /// Replace the endpoints by their local minima first.
    #[serde(default = "yes")]
    pub minimize_endpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateSection {
    pub a: State,
    pub b: State,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "yes")]
    pub minimize_endpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RepSource {
    States {
        states: Vec<State>,
    },
    /// A `representatives.json` written by `map`, `gwl-map` or `oracle`.
    File {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lowest: Option<usize>,
    },
}

impl RepSource {
    fn files(&self) -> Vec<&Path> {
        match self {
            RepSource::States { .. } => Vec::new(),
            RepSource::File { file, .. } => vec![file.as_path()],
        }
    }

    pub fn load(&self, base: &Path) -> Result<Vec<Representative>, CliError> {
        match self {
            RepSource::States { states } => Ok(states
                .iter()
                .enumerate()
                .map(|(i, s)| Representative { label: i + 1, state: s.clone(), energy: f64::NAN, count: 1 })
                .collect()),
            RepSource::File { file, lowest } => {
                let mut reps = read_representatives(&resolve(base, file))?;
                if let Some(k) = lowest {
                    reps.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.label.cmp(&b.label)));
                    reps.truncate(*k);
                }
                Ok(reps)
            }
        }
    }
}

pub fn read_representatives(path: &Path) -> Result<Vec<Representative>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub representatives: RepSource,
    pub methods: Vec<Method>,
    #[serde(default = "default_linear_points")]
    pub linear_points: usize,
    #[serde(default)]
    pub neb: NebConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// AD entries use `[ad]` with these retries and an optional boundary sweep.
    #[serde(default = "default_retries")]
    pub ad_retries: u32,
    #[serde(default)]
    pub ad_sweep: Option<SweepConfig>,
    /// Transition pairs from `gwl-map` for ridge refinement.
    #[serde(default)]
    pub transitions: Option<PathBuf>,
}

fn default_linear_points() -> usize {
    256
}

impl BarrierSection {
    pub fn options(&self, ad: Option<&AdParams>, base: &Path, seed: u64) -> Result<BarrierOptions, CliError> {
        let transitions = match &self.transitions {
            Some(p) => {
                let path = resolve(base, p);
                let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| serde_json::from_str::<TransitionPair>(l))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Vec::new(),
        };
        if self.methods.contains(&Method::Ad) && ad.is_none() {
            return Err(CliError::Config("barrier method `ad` needs an [ad] section".into()));
        }
        Ok(BarrierOptions {
            linear_points: self.linear_points,
            neb: self.neb.clone(),
            ad: ad.map(|p| AdMethod { params: p.clone(), retries: self.ad_retries, sweep: self.ad_sweep.clone() }),
            transitions,
            grid: self.grid.clone(),
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgSection {
    /// `matrix.json` written by `barriers` or `oracle`.
    pub matrix: PathBuf,
    /// Membership counts from a `representatives.json`, aligned with the matrix rows.
    #[serde(default)]
    pub counts: Option<PathBuf>,
    #[serde(default)]
    pub render: RenderOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Required for continuous landscapes.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Points whose barriers are wanted; continuous landscapes only.
    #[serde(default)]
    pub representatives: Option<RepSource>,
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A parsed configuration plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

/// Reads a TOML run configuration, or the `config` echoed in a manifest JSON.
pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config = serde_json::from_value(manifest.get("config").cloned().unwrap_or_default())
            .map_err(|e| CliError::Config(format!("{}: config: {e}", path.display())))?;
        let base = manifest.get("base_dir").and_then(|b| b.as_str()).map(PathBuf::from).unwrap_or(dir);
        return Ok(Loaded { config, base });
    }
    let config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded { config, base: dir })
}

impl Loaded {
    /// Files the given subcommand reads; all must exist before anything runs.
    pub fn referenced_files(&self, command: &str) -> Vec<PathBuf> {
        let c = &self.config;
        let mut files: Vec<&Path> = c.landscape.referenced_files();
        match command {
            "barriers" => {
                if let Some(b) = &c.barriers {
                    files.extend(b.representatives.files());
                    files.extend(b.transitions.as_deref());
                }
            }
            "dg" => {
                if let Some(d) = &c.dg {
                    files.push(&d.matrix);
                    files.extend(d.counts.as_deref());
                }
            }
            "oracle" => {
                if let Some(r) = c.oracle.as_ref().and_then(|o| o.representatives.as_ref()) {
                    files.extend(r.files());
                }
            }
            _ => {}
        }
        files.into_iter().map(|p| resolve(&self.base, p)).collect()
    }

    pub fn check_files(&self, command: &str) -> Result<(), CliError> {
        for f in self.referenced_files(command) {
            if !f.is_file() {
                return Err(CliError::Config(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }
}

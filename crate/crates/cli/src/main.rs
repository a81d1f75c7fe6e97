mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use adelm_core::adelm::{adelm_run, local_minimize, MinimizeConfig, Representative};
use adelm_core::attraction_diffusion::{ad_interpolate, phase_sweep, write_path_jsonl};
use adelm_core::barriers::{barrier_matrix, oracle_barriers, BarrierMatrix, Method};
use adelm_core::dg::{build_dg, render_dg};
use adelm_core::gwl::{gwl_run, GwlResult};
use adelm_core::oracle::enumerate;
use adelm_core::seeding::derive_seed;
use adelm_core::{ElmError, EnergyModel, SharedModel, State, StateKind};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{Loaded, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(#[from] ElmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn config_err(e: ElmError) -> CliError {
    CliError::Config(e.to_string())
}

/// Energy landscape mapping with Attraction-Diffusion.
#[derive(Debug, Parser)]
#[command(name = "adelm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ADELM basin mapping.
    Map(Common),
    /// Generalized Wang-Landau minima and transition mapping.
    GwlMap(Common),
    /// AD phase diagram between two minima.
    Sweep(Common),
    /// Pairwise barrier matrix between representatives.
    Barriers(Common),
    /// Lowest-barrier AD path between two states.
    Interpolate(Common),
    /// Disconnectivity graph from a barrier matrix.
    Dg(Common),
    /// Exact minima and barriers for small instances.
    Oracle(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Map(c) => ("map", c),
            Command::GwlMap(c) => ("gwl-map", c),
            Command::Sweep(c) => ("sweep", c),
            Command::Barriers(c) => ("barriers", c),
            Command::Interpolate(c) => ("interpolate", c),
            Command::Dg(c) => ("dg", c),
            Command::Oracle(c) => ("oracle", c),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adelm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("`{command}` needs a [{name}] section")))
}

fn prepare_endpoint(model: &dyn EnergyModel, s: &State, minimize: bool) -> Result<State, CliError> {
    adelm_core::landscapes::check_state(model, s).map_err(config_err)?;
    if minimize {
        Ok(local_minimize(model, s, &MinimizeConfig::default())?)
    } else {
        Ok(s.clone())
    }
}

/// Checks everything a subcommand needs before any output is written.
fn validate(command: &str, loaded: &Loaded, model: &dyn EnergyModel) -> Result<(), CliError> {
    let c = &loaded.config;
    let ad = || section(&c.ad, "ad", command);
    match command {
        "map" => {
            section(&c.map, "map", command)?;
            ad()?.validate(model).map_err(config_err)?;
        }
        "gwl-map" => {
            let g = section(&c.gwl, "gwl", command)?;
            g.config.validate().map_err(config_err)?;
            if model.kind() != StateKind::Discrete {
                return Err(CliError::Config("gwl-map needs a discrete landscape".into()));
            }
            if g.runs == 0 {
                return Err(CliError::Config("gwl.runs must be at least 1".into()));
            }
        }
        "sweep" => {
            let s = section(&c.sweep, "sweep", command)?;
            ad()?.validate(model).map_err(config_err)?;
            for p in [&s.a, &s.b] {
                adelm_core::landscapes::check_state(model, p).map_err(config_err)?;
            }
            if s.temperatures.is_empty() {
                return Err(CliError::Config("sweep.temperatures is empty".into()));
            }
        }
        "interpolate" => {
            let s = section(&c.interpolate, "interpolate", command)?;
            ad()?.validate(model).map_err(config_err)?;
            for p in [&s.a, &s.b] {
                adelm_core::landscapes::check_state(model, p).map_err(config_err)?;
            }
        }
        "barriers" => {
            let b = section(&c.barriers, "barriers", command)?;
            if b.methods.is_empty() {
                return Err(CliError::Config("barriers.methods is empty".into()));
            }
            if let Some(p) = &c.ad {
                p.validate(model).map_err(config_err)?;
            }
            b.options(c.ad.as_ref(), &loaded.base, c.seed)?;
            let reps = b.representatives.load(&loaded.base)?;
            if reps.len() < 2 {
                return Err(CliError::Config("barriers need at least two representatives".into()));
            }
            for r in &reps {
                adelm_core::landscapes::check_state(model, &r.state).map_err(config_err)?;
            }
        }
        "dg" => {
            let d = section(&c.dg, "dg", command)?;
            let m = read_matrix(&config::resolve(&loaded.base, &d.matrix))?;
            if let Some(p) = &d.counts {
                let reps = config::read_representatives(&config::resolve(&loaded.base, p))?;
                if reps.len() != m.len() {
                    return Err(CliError::Config(format!("{} counts for a {}-row matrix", reps.len(), m.len())));
                }
            }
        }
        "oracle" => {
            if model.kind() == StateKind::Continuous {
                let o = section(&c.oracle, "oracle", command)?;
                if o.grid.is_none() || o.representatives.is_none() {
                    return Err(CliError::Config("a continuous oracle needs oracle.grid and oracle.representatives".into()));
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn read_matrix(path: &Path) -> Result<BarrierMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Output {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(ElmError::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> adelm_core::Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (command, common) = cli.command.parts();
    let mut loaded = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.config.seed = seed;
    }
    loaded.check_files(command)?;
    let model: SharedModel = loaded.config.landscape.build(&loaded.base).map_err(config_err)?;
    validate(command, &loaded, model.as_ref())?;
    let workers = common.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;

    fs::create_dir_all(&common.out)?;
    let mut out = Output { dir: common.out.clone(), artifacts: Vec::new() };
    pool.install(|| execute(command, &loaded, model.as_ref(), &mut out))?;

    let base = fs::canonicalize(&loaded.base).unwrap_or_else(|_| loaded.base.clone());
    let manifest = json!({
        "tool": "adelm",
        "subcommand": command,
        "config": loaded.config,
        "base_dir": base,
        "seed": loaded.config.seed,
        "workers": workers,
        "versions": { "adelm-cli": env!("CARGO_PKG_VERSION"), "adelm-core": adelm_core::VERSION },
        "model": { "name": model.name(), "parameters": model.parameters() },
        "artifacts": out.artifacts,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let mut w = BufWriter::new(File::create(common.out.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(ElmError::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn representatives_from(model: &dyn EnergyModel, states: Vec<State>) -> Result<Vec<Representative>, CliError> {
    states
        .into_iter()
        .enumerate()
        .map(|(i, state)| Ok(Representative { label: i + 1, energy: model.energy(&state)?, state, count: 1 }))
        .collect()
}

fn execute(command: &str, loaded: &Loaded, model: &dyn EnergyModel, out: &mut Output) -> Result<(), CliError> {
    let c: &RunConfig = &loaded.config;
    let seed = c.seed;
    match command {
        "map" => {
            let cfg = c.map.as_ref().expect("validated").adelm(c.ad.clone().expect("validated"));
            let catalog = adelm_run(model, &cfg, seed)?;
            out.with("catalog.jsonl", |w| catalog.write_records_jsonl(w))?;
            out.json("representatives.json", &catalog.representatives)?;
            out.json("summary.json", &catalog.summary())?;
            log::info!("{} basins from {} minima", catalog.basin_count(), catalog.records.len());
        }
        "gwl-map" => {
            let g = c.gwl.as_ref().expect("validated");
            let runs: Vec<GwlResult> = (0..g.runs as u64)
                .into_par_iter()
                .map(|r| gwl_run(model, &g.config, if g.runs == 1 { seed } else { derive_seed(seed, &[0x6a1, r]) }))
                .collect::<adelm_core::Result<_>>()?;
            let merged = runs.into_iter().reduce(GwlResult::merge).expect("at least one run");
            out.with("gwl_minima.csv", |w| merged.write_minima_csv(g.config.keep_lowest, w))?;
            out.with("transitions.jsonl", |w| merged.write_transitions_jsonl(w))?;
            let reps: Vec<State> = merged.lowest(g.config.keep_lowest).into_iter().map(|m| m.state.clone()).collect();
            out.json("representatives.json", &representatives_from(model, reps)?)?;
            out.json("gwl_result.json", &merged)?;
        }
        "sweep" => {
            let s = c.sweep.as_ref().expect("validated");
            let a = prepare_endpoint(model, &s.a, s.minimize_endpoints)?;
            let b = prepare_endpoint(model, &s.b, s.minimize_endpoints)?;
            let diagram = phase_sweep(model, &a, &b, &s.temperatures, c.ad.as_ref().expect("validated"), &s.sweep, seed, 0)?;
            out.with("phase_diagram.csv", |w| diagram.write_csv(w))?;
            out.json("phase_diagram.json", &json!({ "a": a, "b": b, "diagram": diagram }))?;
        }
        "interpolate" => {
            let s = c.interpolate.as_ref().expect("validated");
            let a = prepare_endpoint(model, &s.a, s.minimize_endpoints)?;
            let b = prepare_endpoint(model, &s.b, s.minimize_endpoints)?;
            let run = ad_interpolate(model, &a, &b, c.ad.as_ref().expect("validated"), s.retries, seed)?;
            if let Some(path) = run.path() {
                out.with("path.jsonl", |w| write_path_jsonl(path, w))?;
            }
            out.json(
                "interpolation.json",
                &json!({
                    "a": a, "b": b,
                    "attempts": run.attempts, "successes": run.successes,
                    "barrier": run.barrier(),
                }),
            )?;
        }
        "barriers" => {
            let b = c.barriers.as_ref().expect("validated");
            let opts = b.options(c.ad.as_ref(), &loaded.base, seed)?;
            let reps = b.representatives.load(&loaded.base)?;
            let states: Vec<State> = reps.iter().map(|r| r.state.clone()).collect();
            let matrix = barrier_matrix(model, &states, &b.methods, &opts)?;
            out.with("matrix.csv", |w| matrix.write_csv(w))?;
            out.json("matrix.json", &matrix)?;
        }
        "dg" => {
            let d = c.dg.as_ref().expect("validated");
            let matrix = read_matrix(&config::resolve(&loaded.base, &d.matrix))?;
            let counts: Option<Vec<u64>> = match &d.counts {
                Some(p) => Some(
                    config::read_representatives(&config::resolve(&loaded.base, p))?
                        .iter()
                        .map(|r| r.count as u64)
                        .collect(),
                ),
                None => None,
            };
            let tree = build_dg(&matrix, counts.as_deref())?;
            let rendered = render_dg(&tree, &d.render);
            out.with("dg.dot", |w| Ok(w.write_all(rendered.dot.as_bytes())?))?;
            out.with("dg.svg", |w| Ok(w.write_all(rendered.svg.as_bytes())?))?;
            out.json("dg.json", &json!({ "tree": tree, "merges": tree.merges() }))?;
        }
        "oracle" => match model.kind() {
            StateKind::Discrete => {
                let report = enumerate(model)?;
                let states: Vec<State> = report.minima.iter().map(|m| m.state.clone()).collect();
                let energies = report.minima.iter().map(|m| m.energy).collect();
                let matrix = BarrierMatrix::from_dense(states.clone(), energies, &report.barriers, Method::Oracle);
                out.json("representatives.json", &representatives_from(model, states)?)?;
                out.with("matrix.csv", |w| matrix.write_csv(w))?;
                out.json("matrix.json", &matrix)?;
                log::info!("{} minima over {} states", report.minima.len(), report.states_enumerated);
            }
            StateKind::Continuous => {
                let o = c.oracle.as_ref().expect("validated");
                let reps = o.representatives.as_ref().expect("validated").load(&loaded.base)?;
                let states: Vec<State> = reps.into_iter().map(|r| r.state).collect();
                let dense = oracle_barriers(model, &states, o.grid.as_ref())?;
                let energies = states.iter().map(|s| model.energy(s)).collect::<adelm_core::Result<Vec<_>>>()?;
                let matrix = BarrierMatrix::from_dense(states.clone(), energies, &dense, Method::Oracle);
                out.json("representatives.json", &representatives_from(model, states)?)?;
                out.with("matrix.csv", |w| matrix.write_csv(w))?;
                out.json("matrix.json", &matrix)?;
            }
        },
        _ => unreachable!(),
    }
    Ok(())
}

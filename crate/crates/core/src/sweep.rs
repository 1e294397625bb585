//! Batch sweeps over a control parameter: solve, measure, write CSV and
//! plot data, keep checkpoints for warm starts and resumption.

use crate::entanglement::{measure, MeasureRecord};
use crate::env2d::{plaquette_rdm, Engine, EnvOptions, Witness};
use crate::error::{Error, Result};
use crate::evolution::{ConvergenceReport, InitKind, TimeStepSchedule};
use crate::models::{ModelKind, ModelSpec};
use crate::mps::{ground_state_1d, ChainMethod, ChainOptions, ChainState};
use crate::peps::{ground_state_2d, LatticeOptions, PepsState, DEFAULT_START_NOISE};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

pub use crate::ed::CACHE_ENV;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TiMps,
    Tebd,
    Peps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Terg,
    Ctmrg,
    Both,
}

impl EngineChoice {
    pub fn engines(self) -> Vec<Engine> {
        match self {
            EngineChoice::Terg => vec![Engine::Terg],
            EngineChoice::Ctmrg => vec![Engine::Ctmrg],
            EngineChoice::Both => vec![Engine::Terg, Engine::Ctmrg],
        }
    }
}

impl std::str::FromStr for EngineChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "terg" => Ok(EngineChoice::Terg),
            "ctmrg" => Ok(EngineChoice::Ctmrg),
            "both" => Ok(EngineChoice::Both),
            _ => Err(Error::Config(format!("unknown engine {s:?} (terg, ctmrg or both)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub dimension: u8,
    /// Defaults to −1 (ferromagnetic Ising) or +1 (XXZ).
    pub coupling_j: Option<f64>,
    #[serde(default)]
    pub field_h: f64,
    #[serde(default)]
    pub anisotropy: f64,
    #[serde(default)]
    pub symmetry_bias: f64,
}

impl ModelSection {
    pub fn spec(&self) -> ModelSpec {
        let base = match self.kind {
            ModelKind::Ising => ModelSpec::ising(self.field_h, self.dimension),
            ModelKind::Xxz => ModelSpec::xxz(self.anisotropy, self.dimension),
        };
        let mut m = base.with_bias(self.symmetry_bias);
        if let Some(j) = self.coupling_j {
            m.coupling_j = j;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    /// Extra points near a suspected critical point.
    pub refine: Option<Window>,
}

fn linspace(w: &Window) -> Vec<f64> {
    match w.count {
        0 => vec![],
        1 => vec![w.start],
        n => (0..n).map(|i| w.start + (w.stop - w.start) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let main = Window { start: self.start, stop: self.stop, count: self.count };
        if self.count > 1 && self.stop <= self.start {
            return Err(Error::Config("grid must increase: stop > start".into()));
        }
        let mut pts = linspace(&main);
        if let Some(r) = &self.refine {
            if r.count > 0 {
                if r.start < self.start || r.stop > self.stop || r.stop < r.start {
                    return Err(Error::Config(format!(
                        "refinement window [{}, {}] must lie inside the grid [{}, {}]",
                        r.start, r.stop, self.start, self.stop
                    )));
                }
                pts.extend(linspace(r));
            }
        }
        pts.sort_by(f64::total_cmp);
        let tol = 1e-12 * (self.stop - self.start).abs().max(1.0);
        pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
        Ok(pts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    /// Chain bond dimension.
    pub m: Option<usize>,
    /// PEPS bond dimension.
    pub d: Option<usize>,
    #[serde(default)]
    pub init: InitKind,
    /// Noise around the ordered product start of the lattice solver; a
    /// negative value requests a fully random start.
    pub start_noise: Option<f64>,
}

fn default_d_cut() -> usize {
    20
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    60
}
fn default_witness() -> Witness {
    Witness::Rho
}
fn default_engine() -> EngineChoice {
    EngineChoice::Ctmrg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default = "default_engine")]
    pub engine: EngineChoice,
    #[serde(default = "default_d_cut")]
    pub d_cut: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_witness")]
    pub witness: Witness,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        EnvironmentSection {
            engine: default_engine(),
            d_cut: default_d_cut(),
            epsilon: default_epsilon(),
            max_iter: default_max_iter(),
            witness: default_witness(),
        }
    }
}

/// Overrides of the solver's default imaginary-time schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub tau_initial: Option<f64>,
    pub tau_min: Option<f64>,
    pub reduction_factor: Option<f64>,
    pub steps_per_check: Option<usize>,
    pub epsilon: Option<f64>,
    pub max_checks_per_rung: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}
fn default_name() -> String {
    "sweep".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Start each point from the converged state of its left neighbour.
    #[serde(default = "default_true")]
    pub warm_start: bool,
    /// Number of contiguous warm-start chains the grid is cut into; chains
    /// are the unit of parallelism, so results do not depend on --jobs.
    #[serde(default = "default_one")]
    pub chains: usize,
    pub model: ModelSection,
    pub grid: Grid,
    pub solver: SolverSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.model.spec();
        m.validate()?;
        self.grid.points()?;
        match (self.solver.method, self.model.dimension) {
            (Method::Peps, 2) => {
                if self.solver.d.unwrap_or(0) == 0 {
                    return Err(Error::Config("solver.d (PEPS bond dimension) is required".into()));
                }
                if self.environment.d_cut == 0 {
                    return Err(Error::Config("environment.d_cut must be positive".into()));
                }
            }
            (Method::TiMps | Method::Tebd, 1) => {
                if self.solver.m.unwrap_or(0) == 0 {
                    return Err(Error::Config("solver.m (MPS bond dimension) is required".into()));
                }
            }
            (method, dim) => {
                return Err(Error::Config(format!("method {method:?} does not solve dimension {dim}")));
            }
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        self.schedule().validate()
    }

    pub fn schedule(&self) -> TimeStepSchedule {
        let d = match self.solver.method {
            Method::Peps => TimeStepSchedule::lattice_default(),
            _ => TimeStepSchedule::chain_default(),
        };
        let s = &self.schedule;
        TimeStepSchedule {
            tau_initial: s.tau_initial.unwrap_or(d.tau_initial),
            tau_min: s.tau_min.unwrap_or(d.tau_min),
            reduction_factor: s.reduction_factor.unwrap_or(d.reduction_factor),
            steps_per_check: s.steps_per_check.unwrap_or(d.steps_per_check),
            epsilon: s.epsilon.unwrap_or(d.epsilon),
            max_checks_per_rung: s.max_checks_per_rung.unwrap_or(d.max_checks_per_rung),
        }
    }

    /// Stable key of everything that influences the numbers.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let mut h = std::collections::hash_map::DefaultHasher::new();
        serde_json::to_string(&c).unwrap_or_default().hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// Knobs that do not change the numbers.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub engine: Option<EngineChoice>,
    pub jobs: usize,
    pub resume: bool,
    /// Overrides the cache directory (otherwise the environment variable,
    /// otherwise `<out>/cache`).
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub point: usize,
    pub control: f64,
    /// "mps" for chains, otherwise the contraction engine.
    pub engine: String,
    /// "ok", "unconverged", or "failed: …".
    pub status: String,
    /// Numeric CSV cells after the status column.
    pub values: Vec<f64>,
    /// Present for rows computed in this run.
    pub record: Option<MeasureRecord>,
    pub report: Option<ConvergenceReport>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub out_dir: Option<PathBuf>,
}

impl SweepResult {
    /// Rows of one engine ("mps" for chains), ordered by control value.
    pub fn series(&self, engine: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.engine == engine).collect()
    }

    pub fn column(&self, engine: &str, name: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let i = csv_columns().iter().position(|c| c == name)?.checked_sub(4)?;
        let rows: Vec<_> = self.series(engine).into_iter().filter(|r| !r.status.starts_with("failed")).collect();
        Some((rows.iter().map(|r| r.control).collect(), rows.iter().map(|r| r.values[i]).collect()))
    }
}

const EXTRA_COLUMNS: [&str; 3] = ["evolution_residual", "env_iterations", "env_drift"];

pub fn csv_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["point", "engine", "status"].iter().map(|s| s.to_string()).collect();
    cols.extend(MeasureRecord::CSV_HEADER.iter().map(|s| s.to_string()));
    cols.extend(EXTRA_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepRow {
    fn csv_line(&self) -> String {
        let mut cells = vec![self.point.to_string(), self.engine.clone(), self.status.replace([',', '\n'], ";")];
        cells.push(fmt(self.control));
        cells.extend(self.values.iter().map(|&v| fmt(v)));
        cells.join(",")
    }

    fn parse(line: &str) -> Option<Self> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != csv_columns().len() {
            return None;
        }
        let nums: Option<Vec<f64>> = cells[3..].iter().map(|c| c.parse().ok()).collect();
        let nums = nums?;
        Some(SweepRow {
            point: cells[0].parse().ok()?,
            engine: cells[1].to_string(),
            status: cells[2].to_string(),
            control: nums[0],
            values: nums[1..].to_vec(),
            record: None,
            report: None,
        })
    }

    fn failed(point: usize, control: f64, engine: &str, err: &Error) -> Self {
        let n = MeasureRecord::CSV_HEADER.len() - 1 + EXTRA_COLUMNS.len();
        SweepRow {
            point,
            control,
            engine: engine.into(),
            status: format!("failed: {err}"),
            values: vec![f64::NAN; n],
            record: None,
            report: None,
        }
    }
}

enum Solved {
    Chain(ChainState),
    Lattice(PepsState),
}

struct Worker<'a> {
    cfg: &'a SweepConfig,
    engines: Vec<Engine>,
    cache: Option<PathBuf>,
}

impl Worker<'_> {
    fn checkpoint_path(&self, point: usize) -> Option<PathBuf> {
        self.cache.as_ref().map(|d| d.join(format!("point-{point:05}.tncp")))
    }

    fn load_checkpoint(&self, point: usize) -> Option<Solved> {
        let path = self.checkpoint_path(point)?;
        if !path.exists() {
            return None;
        }
        let loaded = match self.cfg.solver.method {
            Method::Peps => PepsState::load(&path).map(|(s, _)| Solved::Lattice(s)),
            _ => ChainState::load(&path).map(|(s, _)| Solved::Chain(s)),
        };
        loaded.map_err(|e| log::warn!("ignoring checkpoint {}: {e}", path.display())).ok()
    }

    fn solve(&self, point: usize, control: f64, warm: Option<Solved>) -> (Vec<SweepRow>, Option<Solved>) {
        let model = self.cfg.model.spec().with_control(control);
        let schedule = self.cfg.schedule();
        let meta = serde_json::json!({ "control": control, "config": self.cfg.fingerprint() });
        match self.cfg.solver.method {
            Method::TiMps | Method::Tebd => {
                let method = if self.cfg.solver.method == Method::Tebd { ChainMethod::Tebd } else { ChainMethod::TiMps };
                let opts = ChainOptions {
                    method,
                    m: self.cfg.solver.m.unwrap_or(1),
                    seed: self.cfg.seed,
                    init: self.cfg.solver.init,
                };
                let initial = match warm {
                    Some(Solved::Chain(s)) => Some(s),
                    _ => None,
                };
                let run = || -> Result<(ChainState, ConvergenceReport, MeasureRecord)> {
                    let (mut state, report) = ground_state_1d(&model, &opts, &schedule, initial)?;
                    let rec = measure(&state.state_data(&model)?)?;
                    Ok((state, report, rec))
                };
                match run() {
                    Ok((state, report, rec)) => {
                        if let Some(p) = self.checkpoint_path(point) {
                            if let Err(e) = state.save(&p, meta) {
                                log::warn!("could not write checkpoint {}: {e}", p.display());
                            }
                        }
                        let status = if report.converged { "ok" } else { "unconverged" };
                        let row = make_row(point, "mps", status, rec, report, None);
                        (vec![row], Some(Solved::Chain(state)))
                    }
                    Err(e) => (vec![SweepRow::failed(point, control, "mps", &e)], None),
                }
            }
            Method::Peps => {
                let opts = LatticeOptions {
                    d: self.cfg.solver.d.unwrap_or(1),
                    seed: self.cfg.seed,
                    init: self.cfg.solver.init,
                    start_noise: match self.cfg.solver.start_noise {
                        Some(x) if x < 0.0 => None,
                        Some(x) => Some(x),
                        None => Some(DEFAULT_START_NOISE),
                    },
                };
                let initial = match warm {
                    Some(Solved::Lattice(s)) => Some(s),
                    _ => None,
                };
                let (state, report) = match ground_state_2d(&model, &opts, &schedule, initial) {
                    Ok((s, r, _)) => (s, r),
                    Err(e) => {
                        let rows = self.engines.iter().map(|en| SweepRow::failed(point, control, en.name(), &e)).collect();
                        return (rows, None);
                    }
                };
                if let Some(p) = self.checkpoint_path(point) {
                    if let Err(e) = state.save(&p, meta) {
                        log::warn!("could not write checkpoint {}: {e}", p.display());
                    }
                }
                let env = &self.cfg.environment;
                let env_opts =
                    EnvOptions { d_cut: env.d_cut, epsilon: env.epsilon, max_iter: env.max_iter, witness: env.witness };
                let mut rows = Vec::new();
                for &engine in &self.engines {
                    let run = || -> Result<_> {
                        let rdm = plaquette_rdm(&state, engine, &env_opts)?;
                        let data = rdm.state_data(&model, control, Some(state.lambda.to_vec()))?;
                        Ok((rdm, measure(&data)?))
                    };
                    rows.push(match run() {
                        Ok((rdm, rec)) => {
                            let status = if report.converged && rdm.converged { "ok" } else { "unconverged" };
                            make_row(point, engine.name(), status, rec, report.clone(), Some((rdm.iterations, rdm.drift)))
                        }
                        Err(e) => SweepRow::failed(point, control, engine.name(), &e),
                    });
                }
                (rows, Some(Solved::Lattice(state)))
            }
        }
    }
}

fn make_row(
    point: usize,
    engine: &str,
    status: &str,
    rec: MeasureRecord,
    report: ConvergenceReport,
    env: Option<(usize, f64)>,
) -> SweepRow {
    let mut values = rec.csv_values()[1..].to_vec();
    values.push(report.final_residual);
    let (it, drift) = env.map(|(i, d)| (i as f64, d)).unwrap_or((f64::NAN, f64::NAN));
    values.extend([it, drift]);
    SweepRow {
        point,
        control: rec.control,
        engine: engine.into(),
        status: status.into(),
        values,
        record: Some(rec),
        report: Some(report),
    }
}

fn cache_dir(cfg: &SweepConfig, opts: &RunOptions, out: Option<&Path>) -> Option<PathBuf> {
    let base = opts
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .or_else(|| out.map(|o| o.join("cache")))?;
    Some(base.join(format!("{}-{}", cfg.name, cfg.fingerprint())))
}

const PROGRESS_FILE: &str = "progress.csv";

/// Runs every grid point, writing `<name>.csv`, `<name>.plot.json` and
/// `<name>.summary.json` to the output directory when there is one.
pub fn run_sweep(cfg: &SweepConfig, opts: &RunOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let points = cfg.grid.points()?;
    let out = opts.out_dir.clone().or_else(|| cfg.output.dir.clone());
    let mut cfg = cfg.clone();
    if let Some(e) = opts.engine {
        cfg.environment.engine = e;
    }
    let engines = if cfg.solver.method == Method::Peps { cfg.environment.engine.engines() } else { vec![] };
    let cache = cache_dir(&cfg, opts, out.as_deref());
    if let Some(c) = &cache {
        fs::create_dir_all(c)?;
    }
    if let Some(o) = &out {
        fs::create_dir_all(o)?;
    }

    // Rows finished by an earlier run of the same configuration.
    let mut done: BTreeMap<(usize, String), SweepRow> = BTreeMap::new();
    let progress = cache.as_ref().map(|c| c.join(PROGRESS_FILE));
    if let Some(p) = &progress {
        if opts.resume && p.exists() {
            for line in fs::read_to_string(p)?.lines() {
                if let Some(r) = SweepRow::parse(line) {
                    done.insert((r.point, r.engine.clone()), r);
                }
            }
            log::info!("resuming: {} rows already done", done.len());
        } else if p.exists() {
            fs::remove_file(p)?;
        }
    }
    let expected_engines: Vec<String> =
        if engines.is_empty() { vec!["mps".into()] } else { engines.iter().map(|e| e.name().to_string()).collect() };
    let finished = |i: usize| expected_engines.iter().all(|e| done.contains_key(&(i, e.clone())));

    let n_chains = if cfg.warm_start { cfg.chains.min(points.len().max(1)) } else { points.len().max(1) };
    let chunks: Vec<Vec<usize>> = (0..n_chains)
        .map(|c| (0..points.len()).filter(|i| i * n_chains / points.len().max(1) == c).collect())
        .filter(|v: &Vec<usize>| !v.is_empty())
        .collect();
    let jobs = opts.jobs.max(1);
    let worker = Worker { cfg: &cfg, engines: engines.clone(), cache: cache.clone() };

    let (tx, rx) = mpsc::channel::<SweepRow>();
    let mut fresh: Vec<SweepRow> = Vec::new();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| -> Result<()> {
        // The single writer: appends finished rows to the progress file.
        let progress = progress.clone();
        let writer = scope.spawn(move || -> Result<Vec<SweepRow>> {
            let mut file = match &progress {
                Some(p) => Some(fs::OpenOptions::new().create(true).append(true).open(p)?),
                None => None,
            };
            let mut rows = Vec::new();
            for row in rx {
                if let Some(f) = file.as_mut() {
                    writeln!(f, "{}", row.csv_line())?;
                    f.flush()?;
                }
                log::info!("point {} ({}, {}): {}", row.point, fmt(row.control), row.engine, row.status);
                rows.push(row);
            }
            Ok(rows)
        });
        for _ in 0..jobs.min(chunks.len().max(1)) {
            let tx = tx.clone();
            let (chunks, next, worker, points, finished) = (&chunks, &next, &worker, &points, &finished);
            scope.spawn(move || loop {
                let c = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(chunk) = chunks.get(c) else { break };
                let mut warm: Option<Solved> = None;
                for &i in chunk {
                    if finished(i) {
                        warm = None;
                        continue;
                    }
                    if warm.is_none() && worker.cfg.warm_start && i > 0 && chunk.first() != Some(&i) {
                        warm = worker.load_checkpoint(i - 1);
                    }
                    let start = if worker.cfg.warm_start { warm.take() } else { None };
                    let (rows, state) = worker.solve(i, points[i], start);
                    warm = state;
                    for r in rows {
                        let _ = tx.send(r);
                    }
                }
            });
        }
        drop(tx);
        fresh = writer.join().map_err(|_| Error::Config("writer thread panicked".into()))??;
        Ok(())
    })?;

    let mut rows: Vec<SweepRow> = done.into_values().collect();
    rows.extend(fresh);
    rows.sort_by(|a, b| a.point.cmp(&b.point).then(a.engine.cmp(&b.engine)));
    let result = SweepResult { rows, out_dir: out.clone() };
    if let Some(o) = &out {
        write_outputs(&cfg, &result, o)?;
    }
    Ok(result)
}

fn write_outputs(cfg: &SweepConfig, res: &SweepResult, dir: &Path) -> Result<()> {
    let mut csv = csv_columns().join(",");
    csv.push('\n');
    for r in &res.rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    fs::write(dir.join(format!("{}.csv", cfg.name)), csv)?;

    let mut engines: Vec<String> = res.rows.iter().map(|r| r.engine.clone()).collect();
    engines.dedup();
    let mut series = Vec::new();
    for e in &engines {
        for name in MeasureRecord::CSV_HEADER.iter().skip(1) {
            if let Some((x, y)) = res.column(e, name) {
                let y: Vec<serde_json::Value> =
                    y.iter().map(|v| if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null }).collect();
                series.push(serde_json::json!({ "label": format!("{name} ({e})"), "measure": name, "engine": e, "x": x, "y": y }));
            }
        }
    }
    let control = match cfg.model.kind {
        ModelKind::Ising => "h",
        ModelKind::Xxz => "delta",
    };
    fs::write(
        dir.join(format!("{}.plot.json", cfg.name)),
        serde_json::to_string_pretty(&serde_json::json!({ "x_label": control, "series": series }))
            .map_err(|e| Error::Config(e.to_string()))?,
    )?;

    let mut critical = serde_json::Map::new();
    for e in &engines {
        if let Some((x, y)) = res.column(e, "energy") {
            if let Ok(c) = locate_critical_point(&x, &y) {
                critical.insert(e.clone(), serde_json::to_value(c).unwrap());
            }
        }
    }
    let summary = serde_json::json!({
        "name": cfg.name,
        "fingerprint": cfg.fingerprint(),
        "points": res.rows.len(),
        "failed": res.rows.iter().filter(|r| r.status.starts_with("failed")).count(),
        "unconverged": res.rows.iter().filter(|r| r.status == "unconverged").count(),
        "critical_point": critical,
        "config": cfg,
    });
    fs::write(
        dir.join(format!("{}.summary.json", cfg.name)),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Critical points
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub estimate: f64,
    pub uncertainty: f64,
    /// False when |y''| has no pronounced interior maximum (smooth data).
    pub interior: bool,
}

/// Central second differences on a possibly non-uniform grid, at the
/// interior points x[1..n-1].
pub fn second_differences(x: &[f64], y: &[f64]) -> Vec<f64> {
    (1..x.len().saturating_sub(1))
        .map(|i| {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            2.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0) / (h0 + h1)
        })
        .collect()
}

/// Peak of |y''| over the grid. Works for energies (a singular second
/// derivative) and for measures with a cusp.
pub fn locate_critical_point(x: &[f64], y: &[f64]) -> Result<CriticalEstimate> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Config("need at least three points to locate a critical point".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grid must be strictly increasing".into()));
    }
    let d2 = second_differences(x, y);
    let (k, _) = d2.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mid = median(&mut d2.clone());
    let spread = median(&mut d2.iter().map(|v| (v - mid).abs()).collect());
    let i = k + 1;
    // The peak has to stand out from the typical curvature, measured against
    // its spread: a phase with large but smooth curvature is not a
    // singularity, and neither is a peak on the edge of the grid.
    let dev = (d2[k] - mid).abs();
    let floor = 1e-6 * (mid.abs() + spread) + 1e-12 * y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let interior = k > 0 && k + 1 < d2.len() && dev > 2.0 * spread && dev > floor;
    Ok(CriticalEstimate { estimate: x[i], uncertainty: 0.5 * (x[i + 1] - x[i - 1]), interior })
}

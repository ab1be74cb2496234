//! Command-line front end: experiment orchestration and report emission.
//!
//! Each command resolves its flags into a [`RunSpec`], executes it and writes
//! the result files plus a `<out>.manifest.json` sidecar. `rerun` executes
//! the spec stored in a sidecar again; results depend only on the spec, so a
//! rerun reproduces every result file byte for byte.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::DeviceConfig;
use crate::error::{Error, Result};
use crate::io::{self, RunManifest};
use crate::oracle::snapshot::SnapshotWriter;
use crate::oracle::{fd_coupled_simulate, FdConfig};
use crate::pwl_mech::{self, build_grid_model, default_range, point_count_study, simulate_pwl_mech, MechGridModel};
use crate::rom::RomSystem;
use crate::sim::{self, simulate, simulate_linear, sweep_with, Drive, IntegratorSettings, SweepRow, Trajectory};
use crate::tpwl::{self, simulate_tpwl, PointSelection, TpwlModel};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICS: i32 = 3;

/// Environment variable capping worker threads for sweeps and tables.
pub const THREADS_ENV: &str = "SQFILM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Full,
    Linear,
    Tpwl,
    PwlMech,
    Oracle,
}

#[derive(Debug, Parser)]
#[command(name = "sqfilm", version, about = "Squeeze-film damping reduced-order models for a clamped-clamped microbeam")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Step-voltage response of one model; writes a trajectory CSV.
    Simulate(SimulateArgs),
    /// Train a trajectory piecewise-linear model; writes a model JSON.
    Train(TrainArgs),
    /// Pull-in time over a voltage range; writes a sweep CSV.
    Sweep(SweepArgs),
    /// Mechanical-grid model error against the full model for several grid sizes.
    Table1(TableArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Device JSON; the built-in microswitch when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Time step (s); 1/200 of the first period when omitted.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Pull-in threshold as a fraction of the gap.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Double the assembly quadrature points.
    #[arg(long)]
    pub quad_refine: bool,
    /// Final time (s).
    #[arg(long, default_value_t = 6e-4)]
    pub t_end: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::Full)]
    pub model: ModelKind,
    /// Step voltage (V).
    #[arg(long)]
    pub voltage: f64,
    /// Trained model file (tpwl).
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Grid size (pwl-mech).
    #[arg(long)]
    pub points: Option<usize>,
    /// Weighting sharpness (tpwl, pwl-mech).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Also write pressure snapshots to `<out>.pressure.bin` (oracle).
    #[arg(long)]
    pub snapshots: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training step voltage (V).
    #[arg(long, default_value_t = 9.5)]
    pub voltage: f64,
    /// Exact number of linearization points (default 21 unless --delta is given).
    #[arg(long, conflicts_with = "delta")]
    pub points: Option<usize>,
    /// Distance threshold instead of a point count.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = tpwl::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 9.0)]
    pub v_min: f64,
    #[arg(long, default_value_t = 10.5)]
    pub v_max: f64,
    /// Number of voltages, evenly spaced including both ends.
    #[arg(long, default_value_t = 7)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = ModelKind::Full)]
    pub model: ModelKind,
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 9.1)]
    pub voltage: f64,
    /// Grid sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 14, 19, 30])]
    pub points: Vec<usize>,
    #[arg(long, default_value_t = pwl_mech::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Sidecar manifest of an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the primary result here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Device, integrator and quadrature shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub config: DeviceConfig,
    pub settings: IntegratorSettings,
    pub quad_refine: bool,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    Count(usize),
    Delta(f64),
}

/// A fully resolved command: no defaults left to fill in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunSpec {
    Simulate {
        setup: Setup,
        model: ModelKind,
        voltage: f64,
        points: usize,
        beta: Option<f64>,
        model_file: Option<PathBuf>,
        fd: Option<FdConfig>,
        snapshots: bool,
    },
    Train {
        setup: Setup,
        voltage: f64,
        selection: Selection,
        beta: f64,
    },
    Sweep {
        setup: Setup,
        model: ModelKind,
        voltages: Vec<f64>,
        points: usize,
        beta: Option<f64>,
        model_file: Option<PathBuf>,
        fd: Option<FdConfig>,
    },
    Table1 {
        setup: Setup,
        voltage: f64,
        counts: Vec<usize>,
        beta: f64,
    },
}

/// Default pwl-mech grid size for simulate and sweep.
pub const DEFAULT_GRID_POINTS: usize = 15;

/// A failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        if self.error.is_config() || self.stage.starts_with("load") {
            EXIT_CONFIG
        } else {
            EXIT_NUMERICS
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_error(stage: &'static str, msg: impl Into<String>) -> Failure {
    Failure { stage, error: Error::Config(msg.into()) }
}

fn resolve_setup(common: &CommonArgs) -> CliResult<(Setup, RomSystem)> {
    let config = match &common.config {
        Some(path) => DeviceConfig::load(path).stage("load config")?,
        None => DeviceConfig::microswitch(),
    };
    let rom = RomSystem::with_quadrature(&config, common.quad_refine).stage("load config")?;
    let mut settings = IntegratorSettings::for_rom(&rom);
    if let Some(dt) = common.dt {
        settings.dt = dt;
    }
    if let Some(kappa) = common.kappa {
        settings.pullin_fraction = kappa;
    }
    settings.validate().stage("load config")?;
    if !(common.t_end.is_finite() && common.t_end > 0.0) {
        return Err(config_error("load config", format!("t_end must be > 0, got {}", common.t_end)));
    }
    Ok((Setup { config, settings, quad_refine: common.quad_refine, t_end: common.t_end }, rom))
}

fn voltages(v_min: f64, v_max: f64, n: usize) -> CliResult<Vec<f64>> {
    if n == 0 {
        return Err(config_error("load config", "sweep needs n >= 1"));
    }
    if !(v_min.is_finite() && v_max.is_finite() && v_max >= v_min) {
        return Err(config_error("load config", format!("bad voltage range [{v_min}, {v_max}]")));
    }
    if n == 1 {
        return Ok(vec![v_min]);
    }
    Ok((0..n).map(|i| v_min + (v_max - v_min) * i as f64 / (n - 1) as f64).collect())
}

fn fd_for(model: ModelKind, settings: &IntegratorSettings) -> Option<FdConfig> {
    (model == ModelKind::Oracle).then(|| {
        let mut fd = FdConfig::new(settings.dt);
        fd.pullin_fraction = settings.pullin_fraction;
        fd
    })
}

/// Turn parsed flags into a resolved spec and its primary output path.
pub fn resolve(command: &Command) -> CliResult<(RunSpec, PathBuf)> {
    Ok(match command {
        Command::Simulate(a) => {
            let (setup, _) = resolve_setup(&a.common)?;
            let fd = fd_for(a.model, &setup.settings);
            let spec = RunSpec::Simulate {
                model: a.model,
                voltage: a.voltage,
                points: a.points.unwrap_or(DEFAULT_GRID_POINTS),
                beta: a.beta,
                model_file: a.model_file.clone(),
                fd,
                snapshots: a.snapshots,
                setup,
            };
            (spec, a.out.clone())
        }
        Command::Train(a) => {
            let (setup, _) = resolve_setup(&a.common)?;
            let selection = match (a.points, a.delta) {
                (_, Some(d)) => Selection::Delta(d),
                (Some(n), None) => Selection::Count(n),
                (None, None) => Selection::Count(21),
            };
            (RunSpec::Train { setup, voltage: a.voltage, selection, beta: a.beta }, a.out.clone())
        }
        Command::Sweep(a) => {
            let (setup, _) = resolve_setup(&a.common)?;
            let fd = fd_for(a.model, &setup.settings);
            let spec = RunSpec::Sweep {
                model: a.model,
                voltages: voltages(a.v_min, a.v_max, a.n)?,
                points: a.points.unwrap_or(DEFAULT_GRID_POINTS),
                beta: a.beta,
                model_file: a.model_file.clone(),
                fd,
                setup,
            };
            (spec, a.out.clone())
        }
        Command::Table1(a) => {
            let (setup, _) = resolve_setup(&a.common)?;
            (RunSpec::Table1 { setup, voltage: a.voltage, counts: a.points.clone(), beta: a.beta }, a.out.clone())
        }
        Command::Rerun(a) => {
            let text = std::fs::read_to_string(&a.manifest)
                .map_err(Error::from)
                .stage("load manifest")?;
            let manifest: RunManifest<RunSpec> =
                serde_json::from_str(&text).map_err(Error::from).stage("load manifest")?;
            let out = match (&a.out, manifest.outputs.first()) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => p.clone(),
                (None, None) => return Err(config_error("load manifest", "manifest lists no outputs")),
            };
            (manifest.run, out)
        }
    })
}

impl RunSpec {
    pub fn setup(&self) -> &Setup {
        match self {
            RunSpec::Simulate { setup, .. }
            | RunSpec::Train { setup, .. }
            | RunSpec::Sweep { setup, .. }
            | RunSpec::Table1 { setup, .. } => setup,
        }
    }

    /// One-line JSON embedded at the top of every result file.
    pub fn header(&self) -> String {
        #[derive(Serialize)]
        struct Header<'a> {
            code_version: &'a str,
            run: &'a RunSpec,
        }
        serde_json::to_string(&Header { code_version: env!("CARGO_PKG_VERSION"), run: self }).expect("spec serializes")
    }
}

fn load_tpwl(path: Option<&Path>, rom: &RomSystem, beta: Option<f64>) -> CliResult<TpwlModel> {
    let path = path.ok_or_else(|| config_error("load model", "tpwl needs --model-file; train first"))?;
    if !path.exists() {
        return Err(config_error("load model", format!("{} does not exist; train first", path.display())));
    }
    let model = TpwlModel::load(path).stage("load model")?;
    if model.provenance.config != rom.cfg {
        return Err(config_error("load model", "model was trained for a different device"));
    }
    let n = rom.state_len();
    if model.points.iter().any(|p| p.z.len() != n || p.jg.nrows() != n) {
        return Err(config_error("load model", "model dimensions do not match the device"));
    }
    Ok(match beta {
        Some(b) if b > 0.0 => model.with_beta(b),
        Some(b) => return Err(config_error("load model", format!("beta must be > 0, got {b}"))),
        None => model,
    })
}

fn grid_model(rom: &RomSystem, points: usize, beta: Option<f64>) -> CliResult<MechGridModel> {
    let model = build_grid_model(rom, points, default_range(rom)).stage("build grid model")?;
    Ok(match beta {
        Some(b) if b > 0.0 => model.with_beta(b),
        Some(b) => return Err(config_error("build grid model", format!("beta must be > 0, got {b}"))),
        None => model,
    })
}

/// A ready-to-run model of one kind.
enum Runner {
    Full,
    Linear(sim::LinearModel),
    Tpwl(TpwlModel),
    PwlMech(MechGridModel),
    Oracle(FdConfig),
}

impl Runner {
    fn prepare(
        kind: ModelKind,
        rom: &RomSystem,
        points: usize,
        beta: Option<f64>,
        model_file: Option<&Path>,
        fd: Option<&FdConfig>,
    ) -> CliResult<Self> {
        Ok(match kind {
            ModelKind::Full => Runner::Full,
            ModelKind::Linear => Runner::Linear(sim::linearized_model(rom).stage("linearize")?),
            ModelKind::Tpwl => Runner::Tpwl(load_tpwl(model_file, rom, beta)?),
            ModelKind::PwlMech => Runner::PwlMech(grid_model(rom, points, beta)?),
            ModelKind::Oracle => {
                let fd = fd.cloned().ok_or_else(|| config_error("load config", "oracle run needs fd settings"))?;
                Runner::Oracle(fd)
            }
        })
    }

    fn run(&self, rom: &RomSystem, setup: &Setup, volts: f64, snapshots: Option<&Path>) -> Result<Trajectory> {
        let drive = Drive::step(volts);
        let (t_end, set) = (setup.t_end, &setup.settings);
        match self {
            Runner::Full => simulate(rom, &drive, t_end, set),
            Runner::Linear(m) => simulate_linear(rom, m, &drive, t_end, set),
            Runner::Tpwl(m) => simulate_tpwl(rom, m, &drive, t_end, set),
            Runner::PwlMech(m) => simulate_pwl_mech(rom, m, &drive, t_end, set),
            Runner::Oracle(fd) => match snapshots {
                Some(path) => {
                    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
                    let mut writer = SnapshotWriter::new(file, fd.nx, fd.ny)?;
                    let traj = fd_coupled_simulate(&setup.config, fd, &drive, t_end, Some(&mut writer))?;
                    use std::io::Write;
                    writer.into_inner().flush()?;
                    Ok(traj)
                }
                None => fd_coupled_simulate::<std::io::Sink>(&setup.config, fd, &drive, t_end, None),
            },
        }
    }
}

fn snapshot_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".pressure.bin");
    PathBuf::from(name)
}

/// Execute a resolved spec, writing results under `out`. Returns every file written.
pub fn execute(spec: &RunSpec, out: &Path) -> CliResult<Vec<PathBuf>> {
    let setup = spec.setup();
    let rom = RomSystem::with_quadrature(&setup.config, setup.quad_refine).stage("load config")?;
    setup.settings.validate().stage("load config")?;
    let header = spec.header();
    let mut written = vec![out.to_path_buf()];
    match spec {
        RunSpec::Simulate { model, voltage, points, beta, model_file, fd, snapshots, .. } => {
            let runner = Runner::prepare(*model, &rom, *points, *beta, model_file.as_deref(), fd.as_ref())?;
            let snap = (*snapshots && *model == ModelKind::Oracle).then(|| snapshot_path(out));
            let traj = runner.run(&rom, setup, *voltage, snap.as_deref()).stage("simulate")?;
            io::save_trajectory(out, &rom, &traj, &header).stage("write output")?;
            written.extend(snap);
        }
        RunSpec::Train { voltage, selection, beta, .. } => {
            let sel = match *selection {
                Selection::Count(n) => PointSelection::Count(n),
                Selection::Delta(d) => PointSelection::Threshold(d),
            };
            let model = tpwl::train(&rom, *voltage, setup.t_end, &setup.settings, sel, *beta).stage("train")?;
            model.save(out).stage("write output")?;
        }
        RunSpec::Sweep { model, voltages, points, beta, model_file, fd, .. } => {
            let runner = Runner::prepare(*model, &rom, *points, *beta, model_file.as_deref(), fd.as_ref())?;
            let rows = sweep_with(voltages, |v| runner.run(&rom, setup, v, None));
            let reference: Option<Vec<SweepRow>> = (*model != ModelKind::Full)
                .then(|| sweep_with(voltages, |v| simulate(&rom, &Drive::step(v), setup.t_end, &setup.settings)));
            io::save_sweep(out, &rows, reference.as_deref(), &header).stage("write output")?;
        }
        RunSpec::Table1 { voltage, counts, beta, .. } => {
            let rows = point_count_study(&rom, counts, *voltage, setup.t_end, &setup.settings, *beta)
                .stage("table")?;
            io::save_table(out, &rows, &header).stage("write output")?;
        }
    }
    Ok(written)
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_error("load config", format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // a second initialization in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse, run and report. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let started = Instant::now();
    let result = init_threads().and_then(|_| resolve(&cli.command)).and_then(|(spec, out)| {
        let outputs = execute(&spec, &out)?;
        let manifest = RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            run: spec,
            outputs,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        let path = RunManifest::<RunSpec>::path_for(&out);
        manifest.save(&path).stage("write manifest")?;
        Ok(path)
    });
    match result {
        Ok(path) => {
            println!("wrote {}", path.display());
            0
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}

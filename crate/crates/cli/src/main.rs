//! `rismask`: beam-pair design, masking schedules, simulation and demasking
//! from the command line. Every command writes into its own output
//! directory and records what it read in `manifest.toml`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rismask_core::beamform::{beampattern, bcd_optimize, onebit_optimize, OptimizerResult};
use rismask_core::channel::{effective_channels, tx_ris_channel, ScenarioGeometry};
use rismask_core::demask::{demask_pipeline, CsiTrace, DemaskParams};
use rismask_core::io::{
    beampattern_csv, key_from_toml, key_to_toml, objective_trace_csv, result_from_toml, result_to_toml, schedule_csv, to_toml_string,
    trace_from_csv, trace_to_csv, truth_csv, truth_from_csv, ScenarioFile,
};
use rismask_core::scheduler::{build_schedule, MaskingKey};
use rismask_core::sim::{correlation, evaluate, exhaustive_snr_spread, run_scenario, spectral_peak, SpectralPeak};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rismask", version, about = "Privacy-preserving RIS beamforming, masking and demasking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design beam pairs for a scenario and write the optimizer result.
    Optimize(OptimizeArgs),
    /// Tabulate one row's beam pattern from an optimizer result.
    Beampattern(BeampatternArgs),
    /// Write a masking key and the schedule it produces.
    Schedule(ScheduleArgs),
    /// Simulate both receivers, demask and score the run.
    Simulate(SimulateArgs),
    /// Recover the sensing sequence from a CSI trace with a key.
    Demask(DemaskArgs),
    /// Score a CSI trace against simulator ground truth.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Seed recorded with the result.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict elements to +1/-1.
    #[arg(long)]
    onebit: bool,
}

#[derive(Args)]
struct BeampatternArgs {
    #[command(flatten)]
    common: Common,
    /// Optimizer result written by `optimize`.
    #[arg(long)]
    result: PathBuf,
    /// RIS row to plot.
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Degrees: `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "-90:90:0.5", allow_hyphen_values = true)]
    angles: String,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    common: Common,
    /// Key seed; overrides the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Existing key file to replay instead of generating one.
    #[arg(long, conflicts_with = "seed")]
    key: Option<PathBuf>,
    /// Seconds of schedule; defaults to the scenario duration.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Simulation seed; overrides the scenario's.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DemaskArgs {
    #[command(flatten)]
    common: Common,
    /// CSI trace (CSV).
    #[arg(long)]
    trace: PathBuf,
    /// Masking key (TOML).
    #[arg(long)]
    key: PathBuf,
    /// Seconds between adjacent packets beyond which no gain ratio is taken.
    #[arg(long)]
    coherence_gap: Option<f64>,
    /// Seconds dropped either side of each slot boundary.
    #[arg(long)]
    guard: Option<f64>,
    /// Low-pass cutoff in Hz.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Seconds of CSI per coefficient-of-variation window.
    #[arg(long)]
    cv_window: Option<f64>,
    /// Continue past a poor sync fit.
    #[arg(long)]
    permissive: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    /// CSI trace (CSV) to score.
    #[arg(long)]
    trace: PathBuf,
    /// Ground truth written by `simulate`.
    #[arg(long)]
    truth: PathBuf,
    /// Use the eavesdropper's timestamps from the truth file.
    #[arg(long)]
    attacker: bool,
    /// Optimizer result; adds the worst-case comm SNR spread.
    #[arg(long)]
    result: Option<PathBuf>,
}

/// Exit status 1: the inputs are wrong. Exit status 2: the inputs are fine
/// but the data could not be processed.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Failure::Validation(m) => ("validation", m),
            Failure::Runtime(m) => ("runtime", m),
        };
        write!(f, "rismask: {kind} error: {}", msg.replace('\n', " "))
    }
}

impl From<rismask_core::Error> for Failure {
    fn from(e: rismask_core::Error) -> Self {
        match e.stage() {
            Some(stage) => Failure::Runtime(format!("stage {stage}: {e}")),
            None if e.is_validation() => Failure::Validation(e.to_string()),
            None => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn read_input(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

/// Paths inside a scenario file are relative to that file.
fn resolve(base: Option<&Path>, path: &str) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) => dir.join(path),
        None => PathBuf::from(path),
    }
}

fn load_scenario(config: Option<&Path>) -> Outcome<ScenarioFile> {
    match config {
        Some(path) => ScenarioFile::from_toml_str(&read_input(path)?)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display()))),
        None => Ok(ScenarioFile::default()),
    }
}

fn load_key(path: &Path) -> Outcome<MaskingKey> {
    key_from_toml(&read_input(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn load_result(path: &Path) -> Outcome<OptimizerResult> {
    result_from_toml(&read_input(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Outcome<CsiTrace> {
    trace_from_csv(&read_input(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    inputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    seeds: Vec<(String, u64)>,
    outputs: Vec<String>,
}

/// Collects a command's artifacts and writes them with a manifest.
struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn new(command: &str, out: &Path) -> Outcome<Self> {
        fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            dir: out.to_path_buf(),
            manifest: Manifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                inputs: Vec::new(),
                seeds: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.push((name.into(), value));
    }

    fn write(&mut self, name: &str, contents: &str) -> Outcome {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        println!("{}", path.display());
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn finish(mut self) -> Outcome {
        let text = to_toml_string(&self.manifest)?;
        self.write("manifest.toml", &text)
    }
}

fn parse_angles(text: &str) -> Outcome<Vec<f64>> {
    let bad = || Failure::Validation(format!("--angles: expected `start:stop:step` or a comma-separated list, got `{text}`"));
    let degrees: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Outcome<_>>()?;
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Outcome<_>>()?
    };
    Ok(degrees.into_iter().map(f64::to_radians).collect())
}

fn optimize(args: OptimizeArgs) -> Outcome {
    let config = args.common.config.as_deref();
    let file = load_scenario(config)?;
    let geometry = file.geometry();
    let rows = effective_channels(&geometry, &tx_ris_channel(&geometry)?)?;
    let mut cfg = file.optimizer.clone();
    cfg.onebit |= args.onebit;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    let result = if cfg.onebit { onebit_optimize(&rows, &cfg)? } else { bcd_optimize(&rows, &cfg, None)? };

    let mut run = Run::new("optimize", &args.common.out)?;
    if let Some(path) = config {
        run.input(path);
    }
    run.seed("optimizer", cfg.rng_seed);
    run.write("result.toml", &result_to_toml(&result)?)?;
    run.write("objective_trace.csv", &objective_trace_csv(&result.objective_trace))?;
    run.finish()
}

fn beampattern_cmd(args: BeampatternArgs) -> Outcome {
    let config = args.common.config.as_deref();
    let file = load_scenario(config)?;
    let result = load_result(&args.result)?;
    let geometry: ScenarioGeometry = file.geometry();
    let h_tx = tx_ris_channel(&geometry)?;
    if result.pairs.len() != geometry.k {
        return Err(Failure::Validation(format!("result holds {} rows, geometry has {}", result.pairs.len(), geometry.k)));
    }
    let pair = result
        .pairs
        .get(args.row)
        .ok_or_else(|| Failure::Validation(format!("--row {} out of range for {} rows", args.row, result.pairs.len())))?;
    let angles = parse_angles(&args.angles)?;
    let points = beampattern(pair, &h_tx[args.row], &angles, geometry.element_spacing)?;

    let mut run = Run::new("beampattern", &args.common.out)?;
    run.input(&args.result);
    if let Some(path) = config {
        run.input(path);
    }
    run.write("beampattern.csv", &beampattern_csv(&points))?;
    run.finish()
}

fn schedule(args: ScheduleArgs) -> Outcome {
    let config = args.common.config.as_deref();
    let file = load_scenario(config)?;
    let mut run = Run::new("schedule", &args.common.out)?;
    if let Some(path) = config {
        run.input(path);
    }
    let key = match &args.key {
        Some(path) => {
            run.input(path);
            load_key(path)?
        }
        None => {
            let mut key_cfg = file.key.clone();
            if let Some(seed) = args.seed {
                key_cfg.seed = seed;
            }
            key_cfg.generate(file.geometry().k)?
        }
    };
    run.seed("key", key.seed);
    let sched = build_schedule(&key, args.duration.unwrap_or(file.sim.duration))?;
    run.write("key.toml", &key_to_toml(&key)?)?;
    run.write("schedule.csv", &schedule_csv(&sched, &key))?;
    run.finish()
}

fn simulate(args: SimulateArgs) -> Outcome {
    let config = args.common.config.as_deref();
    let mut file = load_scenario(config)?;
    if let Some(seed) = args.seed {
        file.sim.rng_seed = seed;
    }
    let mut run = Run::new("simulate", &args.common.out)?;
    if let Some(path) = config {
        run.input(path);
    }
    let pairs = match file.pairs.clone() {
        Some(p) => {
            let path = resolve(config, &p);
            run.input(&path);
            Some(load_result(&path)?.pairs)
        }
        None => None,
    };
    let key = match file.key.file.clone() {
        Some(k) => {
            let path = resolve(config, &k);
            run.input(&path);
            Some(load_key(&path)?)
        }
        None => None,
    };
    let (scenario, rows) = file.build(key, pairs)?;
    run.seed("key", scenario.key.seed);
    run.seed("sim", scenario.params.rng_seed);
    run.seed("wrong_key", file.eval.wrong_key_seed);

    let out = run_scenario(&scenario)?;
    run.write("key.toml", &key_to_toml(&scenario.key)?)?;
    run.write("legit_trace.csv", &trace_to_csv(&out.legit))?;
    run.write("attacker_trace.csv", &trace_to_csv(&out.attacker))?;
    run.write("truth.csv", &truth_csv(&out.truth))?;
    let mut snr = String::from("packet,comm_snr_db\n");
    for (i, v) in out.truth.comm_snr_db.iter().enumerate() {
        snr.push_str(&format!("{i},{v}\n"));
    }
    run.write("snr_series.csv", &snr)?;
    let report = evaluate(&scenario, &out, &rows, &file.eval)?;
    run.write("report.toml", &to_toml_string(&report)?)?;
    run.finish()
}

fn demask(args: DemaskArgs) -> Outcome {
    let config = args.common.config.as_deref();
    let file = load_scenario(config)?;
    let mut params: DemaskParams = file.eval.demask.clone();
    if let Some(v) = args.coherence_gap {
        params.coherence_gap = v;
    }
    if args.guard.is_some() {
        params.guard = args.guard;
    }
    if let Some(v) = args.cutoff {
        params.cutoff = v;
    }
    if args.cv_window.is_some() {
        params.cv_window = args.cv_window;
    }
    params.permissive_sync |= args.permissive;
    let key = load_key(&args.key)?;
    let trace = load_trace(&args.trace)?;
    let result = demask_pipeline(&trace, &key, &params)?;

    let mut run = Run::new("demask", &args.common.out)?;
    run.input(&args.trace);
    run.input(&args.key);
    if let Some(path) = config {
        run.input(path);
    }
    run.write("cleaned.csv", &trace_to_csv(&CsiTrace { samples: result.samples }))?;
    run.write("diagnostics.toml", &to_toml_string(&result.diagnostics)?)?;
    run.finish()
}

#[derive(Serialize)]
struct Metrics {
    correlation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    peak: Option<SpectralPeak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_spread_db: Option<f64>,
}

fn metrics(args: MetricsArgs) -> Outcome {
    let config = args.common.config.as_deref();
    let file = load_scenario(config)?;
    let trace = load_trace(&args.trace)?;
    let (times, motion) =
        truth_from_csv(&read_input(&args.truth)?, args.attacker).map_err(|e| Failure::Validation(format!("{}: {e}", args.truth.display())))?;
    let correlation = correlation(&trace.samples, &times, &motion)?;
    // too short for a spectrum is not an error here; the field is left out
    let peak = spectral_peak(&trace.samples, file.eval.peak_band).ok();
    let snr_spread_db = match &args.result {
        Some(path) => {
            let result = load_result(path)?;
            let g = file.geometry();
            let rows = effective_channels(&g, &tx_ris_channel(&g)?)?;
            Some(exhaustive_snr_spread(&rows, &result.pairs, g.tx_power, g.noise_power, g.m_comm)?)
        }
        None => None,
    };

    let mut run = Run::new("metrics", &args.common.out)?;
    run.input(&args.trace);
    run.input(&args.truth);
    if let Some(path) = &args.result {
        run.input(path);
    }
    if let Some(path) = config {
        run.input(path);
    }
    run.write(
        "metrics.toml",
        &to_toml_string(&Metrics {
            correlation,
            peak,
            snr_spread_db,
        })?,
    )?;
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Beampattern(a) => beampattern_cmd(a),
        Command::Schedule(a) => schedule(a),
        Command::Simulate(a) => simulate(a),
        Command::Demask(a) => demask(a),
        Command::Metrics(a) => metrics(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 input data, 3 runtime.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_joined, BuildingFeatures, DatasetPaths, FeatureSchema, LAND_FILE};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::physics::{self, BuildingType, Component, EnvelopeState, LossBreakdown, PhysicsConstants, STATE_DIM};
use crate::synth::{generate_cohort, GeneratorConfig};
use crate::train::{cross_validate, Checkpoint, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "epc-pinn", version, about = "Physics-informed building envelope estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort as CSV files.
    Generate(GenerateArgs),
    /// Cross-validate the network on a dataset.
    Train(TrainArgs),
    /// Virtual audit of one building from a checkpoint.
    Predict(PredictArgs),
    /// Heating balance of a known envelope.
    Audit(AuditArgs),
    /// Metrics of a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub consumption_noise: Option<f64>,
    #[arg(long)]
    pub audit_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory holding the four input CSVs.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Building features as JSON; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Envelope JSON; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Physics constants override (run config with a `physics` section).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the breakdown as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Input CSV locations. Explicit paths override the directory defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub land: Option<PathBuf>,
    pub audit_buildings: Option<PathBuf>,
    pub audit_components: Option<PathBuf>,
    pub consumption: Option<PathBuf>,
}

impl DataSection {
    fn paths(&self) -> Result<DatasetPaths> {
        let base = match &self.dir {
            Some(d) => DatasetPaths::in_dir(d),
            None => {
                let all = [&self.land, &self.audit_buildings, &self.audit_components, &self.consumption];
                if all.iter().any(|p| p.is_none()) {
                    return Err(Error::Usage(
                        "no input data: pass --data DIR or set data.dir or all four data paths in the config".into(),
                    ));
                }
                DatasetPaths::in_dir("")
            }
        };
        Ok(DatasetPaths {
            land: self.land.clone().unwrap_or(base.land),
            audit_buildings: self.audit_buildings.clone().unwrap_or(base.audit_buildings),
            audit_components: self.audit_components.clone().unwrap_or(base.audit_components),
            consumption: self.consumption.clone().unwrap_or(base.consumption),
        })
    }
}

/// The JSON run configuration shared by all subcommands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub series: Option<Vec<String>>,
    pub generator: Option<GeneratorConfig>,
    pub train: Option<TrainConfig>,
    /// Replaces the physics constants of both the generator and training.
    pub physics: Option<PhysicsConstants>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn schema(&self) -> FeatureSchema {
        match &self.series {
            Some(s) => FeatureSchema { series: s.clone() },
            None => FeatureSchema::default(),
        }
    }
}

fn require_seed(flag: Option<u64>, config: &RunConfig, command: &str) -> Result<u64> {
    flag.or(config.seed)
        .ok_or_else(|| Error::Usage(format!("{command} requires --seed (or `seed` in the config)")))
}

fn require_out(flag: Option<PathBuf>, config: &RunConfig, command: &str) -> Result<PathBuf> {
    flag.or_else(|| config.out.clone())
        .ok_or_else(|| Error::Usage(format!("{command} requires --out (or `out` in the config)")))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_input(path: Option<&Path>) -> Result<(String, String)> {
    match path {
        Some(p) => Ok((
            std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            p.display().to_string(),
        )),
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Error::io("<stdin>", e))?;
            Ok((s, "<stdin>".to_string()))
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Json {
        context: format!("parsing {source}"),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T, what: &str) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        context: format!("encoding {what}"),
        source: e,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_generate(args: GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let seed = require_seed(args.seed, &config, "generate")?;
    let dir = require_out(args.out, &config, "generate")?;
    let mut gen = config.generator.clone().unwrap_or_default();
    gen.seed = seed;
    if let Some(n) = args.n {
        gen.n_buildings = n;
    }
    if let Some(v) = args.consumption_noise {
        gen.consumption_noise = v;
    }
    if let Some(v) = args.audit_noise {
        gen.audit_noise = v;
    }
    if let Some(p) = &config.physics {
        gen.physics = p.clone();
    }
    let cohort = generate_cohort(&gen)?;
    cohort.write_csv(&dir)?;
    writeln!(out, "{}wrote {}", cohort.summary(), dir.display()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

pub fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    let seed = require_seed(args.seed, &config, "train")?;
    let dir = require_out(args.out, &config, "train")?;
    if let Some(d) = args.data {
        config.data.dir = Some(d);
    }
    let mut train = config.train.clone().unwrap_or_default();
    train.seed = seed;
    if let Some(p) = &config.physics {
        train.physics = p.clone();
    }
    train.validate()?;
    let schema = config.schema();
    let joined = load_joined(&config.data.paths()?, &schema)?;
    log::info!("joined {} buildings, dropped {}", joined.samples.len(), joined.dropped.len());

    let result = cross_validate(&joined.samples, &train, &schema)?;
    let report = &result.report;

    let checkpoints = dir.join("checkpoints");
    std::fs::create_dir_all(&checkpoints).map_err(|e| Error::io(&checkpoints, e))?;
    for (fold, cp) in result.checkpoints.iter().enumerate() {
        if let Some(cp) = cp {
            cp.save(checkpoints.join(format!("fold_{fold:02}.json")))?;
        }
    }
    write_file(&dir.join("results.json"), &report.to_json()?)?;
    let table = report.render();
    write_file(&dir.join("report.txt"), &table)?;
    write_file(&dir.join("drop_report.txt"), &joined.drop_report())?;
    write!(out, "{table}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub building: BuildingFeatures,
    pub state: EnvelopeState,
    pub breakdown: LossBreakdown,
}

pub fn cmd_predict(args: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (text, source) = read_input(args.input.as_deref())?;
    let building: BuildingFeatures = parse_json(&text, &source)?;
    let audit = checkpoint.virtual_audit(&building)?;
    let json = to_json(
        &PredictOutput {
            building,
            state: audit.state,
            breakdown: audit.breakdown,
        },
        "prediction",
    )?;
    match args.out {
        Some(p) => write_file(&p, &json),
        None => out.write_all(json.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Envelope description accepted by `audit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditInput {
    pub area: [f64; 5],
    pub u_value: [f64; 5],
    pub air_exchange_rate: f64,
    pub specific_heat_gains: f64,
    pub useful_area: f64,
    pub building_type: BuildingType,
    #[serde(default)]
    pub physics: Option<PhysicsConstants>,
}

/// Line-by-line text form of a breakdown.
pub fn render_breakdown(b: &LossBreakdown) -> String {
    let mut s = String::from("Envelope heat loss by component (kWh/yr)\n");
    for c in Component::ALL {
        let _ = writeln!(s, "  {:<24}{:>16.4}", c.label(), b.envelope_by_component[c.index()]);
    }
    let rows = [
        ("Envelope total", b.envelope_total),
        ("Thermal bridges", b.thermal_bridges),
        ("Ventilation", b.ventilation),
        ("Total heat loss", b.heat_loss_total),
        ("Total heat gains", b.heat_gains_total),
        ("Gain utilisation factor", b.hguf),
        ("Energy consumption", b.energy_consumption),
    ];
    for (label, v) in rows {
        let _ = writeln!(s, "{label:<26}{v:>16.4}");
    }
    s
}

pub fn cmd_audit(args: AuditArgs, out: &mut dyn Write) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let (text, source) = read_input(args.input.as_deref())?;
    let input: AuditInput = parse_json(&text, &source)?;
    let consts = input.physics.clone().or(config.physics).unwrap_or_default();
    let state = EnvelopeState {
        area: input.area,
        u_value: input.u_value,
        air_exchange_rate: input.air_exchange_rate,
        specific_heat_gains: input.specific_heat_gains,
    };
    let breakdown = physics::energy_consumption(&state, input.useful_area, input.building_type, &consts)?;
    let text = if args.json {
        to_json(&breakdown, "breakdown")?
    } else {
        render_breakdown(&breakdown)
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// Fixed-width table of one metrics report.
pub fn render_metrics(report: &MetricsReport) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into());
    let mut s = format!("{:<22} {:>10} {:>14} {:>10}\n", "Variable", "R²", "RMSE", "NRMSE");
    for v in &report.variables {
        let _ = writeln!(s, "{:<22} {:>10} {:>14.4} {:>10}", v.variable, fmt(v.r_squared), v.rmse, fmt(v.nrmse));
    }
    s
}

pub fn cmd_evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(d) = args.data {
        config.data.dir = Some(d);
    }
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let joined = load_joined(&config.data.paths()?, &checkpoint.schema)?;
    if joined.samples.is_empty() {
        return Err(Error::Ingestion {
            path: config.data.paths()?.land.display().to_string(),
            row: 0,
            column: LAND_FILE.into(),
            message: "no buildings survived the join".into(),
        });
    }
    let model = checkpoint.network()?;
    let all: Vec<usize> = (0..joined.samples.len()).collect();
    let x = crate::data::feature_matrix(&joined.samples, &all);
    let states = checkpoint.predict_states(&model, &x)?;
    let mut predicted_energy = Vec::with_capacity(states.len());
    for (s, sample) in states.iter().zip(&joined.samples) {
        let b = physics::energy_consumption(s, sample.useful_area, sample.building_type, &checkpoint.physics)?;
        predicted_energy.push(b.energy_consumption);
    }
    let truth = crate::data::target_matrix(&joined.samples, &all);
    let pred = ndarray::Array2::from_shape_fn((states.len(), STATE_DIM), |(r, c)| states[r].to_array()[c]);
    let measured: Vec<f64> = joined.samples.iter().map(|s| s.measured_energy).collect();
    let report = MetricsReport::compute(truth.view(), pred.view(), &measured, &predicted_energy)?;
    if let Some(p) = &args.out {
        write_file(p, &to_json(&report, "metrics")?)?;
    }
    out.write_all(render_metrics(&report).as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Exit code class of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Usage(_) | Error::Config(_) => EXIT_USAGE,
        Error::Ingestion { .. }
        | Error::Encoding { .. }
        | Error::Io { .. }
        | Error::Json { .. }
        | Error::Domain(_)
        | Error::Checkpoint(_) => EXIT_DATA,
        Error::Training { .. }
        | Error::NonFinite { .. }
        | Error::Dimension { .. }
        | Error::UndefinedMetric { .. }
        | Error::Fold { .. } => EXIT_RUNTIME,
    }
}

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

//! Batch front-end: configuration, experiment runners, output files and
//! their validators.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::hilbert::{
    expectation, inner_product, random::haar_unitary, HermitianOperator, StateVector, C64,
};
use crate::measurement::{JointSystemPointerState, PointerGrid, DEFAULT_EXTENT_WIDTHS};
use crate::ontology::{
    self, min_violation_for, monte_carlo_onto, pbr_min_violation, pbr_pair_model,
    MonteCarloReport, OntologicalModel, Scenario, ViolationBound, ViolationOptions,
};
use crate::pbr::{
    overlap_preservation_check, pbr_experiment, steering_batch, AliceBasis, OverlapCheck,
    PbrCounts, SteeringBatch,
};
use crate::protective::{
    protection_leak, protective_measure, protective_measure_with_state, protective_tomography,
    Mode, ProtectiveRunResult, ProtocolParams,
};
use crate::seeding;
use crate::weak::{direct_wavefunction_scan, GridWavefunction, ScanRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PRECONDITION: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const JOINT_FILE: &str = "joint.json";
pub const MAX_NOGO_DIM: usize = 4;

pub fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Precondition => EXIT_PRECONDITION,
        ErrorKind::Internal => EXIT_INTERNAL,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    X,
    Y,
    Z,
}

impl Observable {
    pub fn operator(self) -> HermitianOperator {
        match self {
            Observable::X => HermitianOperator::pauli_x(),
            Observable::Y => HermitianOperator::pauli_y(),
            Observable::Z => HermitianOperator::pauli_z(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::X => "x",
            Observable::Y => "y",
            Observable::Z => "z",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum SteerBasis {
    #[value(name = "Z", alias = "z")]
    Z,
    #[value(name = "X", alias = "x")]
    X,
}

impl From<SteerBasis> for AliceBasis {
    fn from(b: SteerBasis) -> Self {
        match b {
            SteerBasis::Z => AliceBasis::Z,
            SteerBasis::X => AliceBasis::X,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubcommandName {
    Protective,
    Leak,
    Scan,
    Pbr,
    Steer,
    Onto,
    Nogo,
}

impl SubcommandName {
    pub fn name(self) -> &'static str {
        match self {
            SubcommandName::Protective => "protective",
            SubcommandName::Leak => "leak",
            SubcommandName::Scan => "scan",
            SubcommandName::Pbr => "pbr",
            SubcommandName::Steer => "steer",
            SubcommandName::Onto => "onto",
            SubcommandName::Nogo => "nogo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: Format,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            path: PathBuf::from("out"),
            format: Format::Json,
        }
    }
}

/// Every parameter of every subcommand. Fields a subcommand does not use
/// are echoed in the manifest but otherwise ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<SubcommandName>,
    pub seed: u64,
    pub trials: u64,
    /// Protective step count.
    pub n: usize,
    /// Coupling per step.
    pub g: f64,
    pub grid_points: usize,
    pub width: f64,
    pub q: f64,
    /// Angle of the real qubit `cos θ|0⟩ + sin θ|1⟩` for `protective`.
    pub theta: f64,
    pub observable: Observable,
    pub sampled: bool,
    pub tomography: bool,
    /// Couplings swept at fixed `n`; empty for a single run.
    pub g_sweep: Vec<f64>,
    pub leak_prepared_theta: f64,
    pub leak_protected_theta: f64,
    pub wavenumber: f64,
    pub mixture: [f64; 4],
    pub basis: SteerBasis,
    pub resolution: u32,
    /// Single-system model with preparations `"0"` and `"+"` for `onto`.
    pub model: Option<PathBuf>,
    pub unitaries: u64,
    pub device_dim: usize,
    pub system_dim: usize,
    pub dump_joint: bool,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: None,
            seed: 7,
            trials: 100_000,
            n: 400,
            g: 5e-3,
            grid_points: 512,
            width: 1.0,
            q: 1.0,
            theta: std::f64::consts::FRAC_PI_6,
            observable: Observable::Z,
            sampled: false,
            tomography: false,
            g_sweep: Vec::new(),
            leak_prepared_theta: std::f64::consts::FRAC_PI_4,
            leak_protected_theta: 0.0,
            wavenumber: 0.0,
            mixture: [0.25; 4],
            basis: SteerBasis::Z,
            resolution: 8,
            model: None,
            unitaries: 100,
            device_dim: 2,
            system_dim: 2,
            dump_joint: false,
            output: OutputSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn params(&self, coupling: f64) -> Result<ProtocolParams> {
        Ok(ProtocolParams {
            steps: self.n,
            coupling,
            grid: self.grid()?,
            width: self.width,
        })
    }

    pub fn grid(&self) -> Result<PointerGrid> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidParameter(format!("width must be positive, got {}", self.width)));
        }
        PointerGrid::new(
            self.grid_points,
            DEFAULT_EXTENT_WIDTHS * self.width / self.grid_points.max(1) as f64,
            0.0,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            file: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Parser, Debug)]
#[command(name = "pmlab", version, about = "Seeded quantum measurement experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
pub enum Command {
    /// Protective measurement of one observable, a coupling sweep, or tomography
    Protective,
    /// Protection of one state applied to a system prepared in another
    Leak,
    /// Direct weak-value scan of a Gaussian wavefunction
    Scan,
    /// Antidistinguishing measurement on product pairs
    Pbr,
    /// Steering measurements on the singlet
    Steer,
    /// Minimum forbidden-outcome violation of overlapping models
    Onto,
    /// Overlap before and after random unitaries
    Nogo,
    /// Check a run directory (or a single file) against its schema
    Validate {
        path: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> Option<SubcommandName> {
        Some(match self {
            Command::Protective => SubcommandName::Protective,
            Command::Leak => SubcommandName::Leak,
            Command::Scan => SubcommandName::Scan,
            Command::Pbr => SubcommandName::Pbr,
            Command::Steer => SubcommandName::Steer,
            Command::Onto => SubcommandName::Onto,
            Command::Nogo => SubcommandName::Nogo,
            Command::Validate { .. } => return None,
        })
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Also write the final system-pointer state (protective)
    #[arg(long, global = true)]
    pub dump_joint: bool,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub g: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub g_sweep: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    #[arg(long, global = true)]
    pub width: Option<f64>,
    #[arg(long, global = true)]
    pub q: Option<f64>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub observable: Option<Observable>,
    /// Sample protection outcomes instead of keeping the success branch
    #[arg(long, global = true)]
    pub sampled: bool,
    #[arg(long, global = true)]
    pub tomography: bool,
    #[arg(long, global = true)]
    pub leak_prepared_theta: Option<f64>,
    #[arg(long, global = true)]
    pub leak_protected_theta: Option<f64>,
    #[arg(long, global = true)]
    pub wavenumber: Option<f64>,
    /// Four mixture weights for 00, 0+, +0, ++
    #[arg(long, global = true, value_delimiter = ',')]
    pub mixture: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum)]
    pub basis: Option<SteerBasis>,
    #[arg(long, global = true)]
    pub resolution: Option<u32>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub unitaries: Option<u64>,
    #[arg(long, global = true)]
    pub device_dim: Option<usize>,
    #[arg(long, global = true)]
    pub system_dim: Option<usize>,
}

/// Defaults, then the `--config` file, then flags.
pub fn resolve_config(command: SubcommandName, o: &Overrides) -> Result<RunConfig> {
    let mut c = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.subcommand {
        if s != command {
            return Err(Error::Schema {
                file: "config".into(),
                reason: format!("config is for `{}`, not `{}`", s.name(), command.name()),
            });
        }
    }
    c.subcommand = Some(command);
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = o.$field.clone() {
                c.$field = v;
            }
        )*};
    }
    set!(
        seed, trials, n, g, g_sweep, grid_points, width, q, theta, observable,
        leak_prepared_theta, leak_protected_theta, wavenumber, basis, resolution,
        unitaries, device_dim, system_dim
    );
    if let Some(m) = &o.model {
        c.model = Some(m.clone());
    }
    if let Some(p) = &o.out {
        c.output.path = p.clone();
    }
    if let Some(f) = o.format {
        c.output.format = f;
    }
    if let Some(m) = &o.mixture {
        let m: [f64; 4] = m.as_slice().try_into().map_err(|_| Error::Schema {
            file: "--mixture".into(),
            reason: format!("expected 4 weights, got {}", m.len()),
        })?;
        c.mixture = m;
    }
    c.dump_joint |= o.dump_joint;
    c.sampled |= o.sampled;
    c.tomography |= o.tomography;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: SubcommandName,
    pub seed: u64,
    pub files: Vec<String>,
    pub versions: BTreeMap<String, String>,
    pub config: RunConfig,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("pmlab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest_schema".to_string(), "1".to_string()),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectiveOutput {
    pub state: StateVector,
    pub observable: Observable,
    pub exact_expectation: f64,
    pub mode: Mode,
    pub result: ProtectiveRunResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub steps: usize,
    pub coupling: f64,
    pub inferred_expectation: Option<f64>,
    pub exact_expectation: f64,
    pub error: Option<f64>,
    pub survival: f64,
}

pub const SWEEP_CSV_HEADER: [&str; 6] = [
    "steps",
    "coupling",
    "inferred_expectation",
    "exact_expectation",
    "error",
    "survival",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOutput {
    pub state: StateVector,
    pub observable: Observable,
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyEntry {
    pub operator: Observable,
    pub inferred: f64,
    pub exact: f64,
}

pub const TOMOGRAPHY_CSV_HEADER: [&str; 3] = ["operator", "inferred", "exact"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyOutput {
    pub state: StateVector,
    pub reconstructed: StateVector,
    pub fidelity: f64,
    pub total_survival: f64,
    pub entries: Vec<TomographyEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakOutput {
    pub prepared: StateVector,
    pub protected: StateVector,
    pub observable: Observable,
    pub survival: f64,
    /// `|⟨protected|prepared⟩|²`
    pub overlap_squared: f64,
    pub surviving_state: Option<StateVector>,
    pub run: ProtectiveRunResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOutput {
    pub grid: PointerGrid,
    pub width: f64,
    pub wavenumber: f64,
    pub zero_momentum_component: [f64; 2],
    /// Largest `|ΨK − Ψ| / max|Ψ|` over the grid.
    pub max_relative_error: f64,
    pub rows: Vec<ScanRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntoOutput {
    pub bound: ViolationBound,
    pub pair_model: OntologicalModel,
    pub monte_carlo: MonteCarloReport,
}

pub const ONTO_CSV_HEADER: [&str; 6] = [
    "preparation",
    "outcome",
    "count",
    "predicted",
    "born",
    "forbidden",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NogoOutput {
    pub device_dim: usize,
    pub system_dim: usize,
    pub unitaries: u64,
    pub seed: u64,
    pub checks: Vec<OverlapCheck>,
    pub max_deviation: f64,
}

pub const NOGO_CSV_HEADER: [&str; 4] = ["index", "before", "after", "deviation"];
pub const STEER_CSV_HEADER: [&str; 7] = [
    "alice_outcome",
    "probability",
    "count",
    "bob_re0",
    "bob_im0",
    "bob_re1",
    "bob_im1",
];

/// Files produced by one run, as `(name, contents)`.
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { files: Vec::new() }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }
}

fn csv_rows<I, R>(out: &mut Vec<u8>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run_protective(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let state = StateVector::real_qubit(c.theta);
    let mode = if c.sampled {
        Mode::Sampled { seed: c.seed }
    } else {
        Mode::Deterministic
    };
    if c.tomography {
        let obs = [Observable::X, Observable::Y, Observable::Z];
        let ops: Vec<HermitianOperator> = obs.iter().map(|o| o.operator()).collect();
        let t = protective_tomography(&state, &ops, &c.params(c.g)?)?;
        let entries = obs
            .iter()
            .zip(t.set.expectations())
            .map(|(o, &inferred)| {
                Ok(TomographyEntry {
                    operator: *o,
                    inferred,
                    exact: expectation(&o.operator(), &state)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = TomographyOutput {
            fidelity: state.fidelity(&t.reconstructed)?,
            state,
            reconstructed: t.reconstructed,
            total_survival: t.total_survival,
            entries,
        };
        return match c.output.format {
            Format::Json => a.json("protective.json", &out),
            Format::Csv => a.csv("protective.csv", |buf| {
                csv_rows(
                    buf,
                    &TOMOGRAPHY_CSV_HEADER,
                    out.entries.iter().map(|e| {
                        [e.operator.name().to_string(), e.inferred.to_string(), e.exact.to_string()]
                    }),
                )
            }),
        };
    }

    let op = c.observable.operator();
    let exact = expectation(&op, &state)?;
    if !c.g_sweep.is_empty() {
        let points = c
            .g_sweep
            .iter()
            .map(|&g| {
                let r = protective_measure(&state, &op, &c.params(g)?, mode)?;
                Ok(SweepPoint {
                    steps: r.steps,
                    coupling: g,
                    error: r.inferred_expectation.map(|v| (v - exact).abs()),
                    inferred_expectation: r.inferred_expectation,
                    exact_expectation: exact,
                    survival: r.survival_probability,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = SweepOutput {
            state,
            observable: c.observable,
            points,
        };
        return match c.output.format {
            Format::Json => a.json("protective.json", &out),
            Format::Csv => a.csv("protective.csv", |buf| {
                csv_rows(
                    buf,
                    &SWEEP_CSV_HEADER,
                    out.points.iter().map(|p| {
                        [
                            p.steps.to_string(),
                            p.coupling.to_string(),
                            opt(p.inferred_expectation),
                            p.exact_expectation.to_string(),
                            opt(p.error),
                            p.survival.to_string(),
                        ]
                    }),
                )
            }),
        };
    }

    let (result, joint) = protective_measure_with_state(&state, &op, &c.params(c.g)?, mode)?;
    match c.output.format {
        Format::Json => a.json(
            "protective.json",
            &ProtectiveOutput {
                state,
                observable: c.observable,
                exact_expectation: exact,
                mode,
                result,
            },
        )?,
        Format::Csv => a.csv("protective.csv", |buf| result.write_log_csv(buf))?,
    }
    if c.dump_joint {
        a.json(JOINT_FILE, &joint)?;
    }
    Ok(())
}

fn run_leak(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let prepared = StateVector::real_qubit(c.leak_prepared_theta);
    let protected = StateVector::real_qubit(c.leak_protected_theta);
    let r = protection_leak(&prepared, &protected, &c.observable.operator(), &c.params(c.g)?)?;
    match c.output.format {
        Format::Json => a.json(
            "leak.json",
            &LeakOutput {
                overlap_squared: inner_product(&protected, &prepared)?.norm_sqr(),
                prepared,
                protected,
                observable: c.observable,
                survival: r.survival,
                surviving_state: r.surviving_state,
                run: r.run,
            },
        ),
        Format::Csv => a.csv("leak.csv", |buf| r.run.write_log_csv(buf)),
    }
}

fn run_scan(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let grid = c.grid()?;
    let psi = GridWavefunction::gaussian(grid, 0.0, c.width, c.wavenumber)?;
    let scan = direct_wavefunction_scan(&psi)?;
    match c.output.format {
        Format::Csv => a.csv("scan.csv", |buf| scan.write_csv(&psi, buf)),
        Format::Json => {
            let peak = psi.amplitudes().iter().fold(0.0f64, |m, z| m.max(z.norm()));
            let max_relative_error = scan
                .recovered()
                .iter()
                .zip(psi.amplitudes())
                .map(|(r, t)| (r - t).norm() / peak)
                .fold(0.0, f64::max);
            let rows = grid
                .positions()
                .into_iter()
                .zip(scan.normalized())
                .zip(psi.amplitudes())
                .map(|((x, s), t)| ScanRow {
                    x,
                    re_scan: s.re,
                    im_scan: s.im,
                    re_psi_true: t.re,
                    im_psi_true: t.im,
                })
                .collect();
            a.json(
                "scan.json",
                &ScanOutput {
                    grid,
                    width: c.width,
                    wavenumber: c.wavenumber,
                    zero_momentum_component: [
                        scan.zero_momentum_component.re,
                        scan.zero_momentum_component.im,
                    ],
                    max_relative_error,
                    rows,
                },
            )
        }
    }
}

fn run_pbr(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let counts = pbr_experiment(c.trials, c.mixture, c.seed)?;
    counts.validate().map_err(|e| match e {
        Error::Schema { reason, .. } => Error::InvalidDistribution {
            context: "pbr counts".into(),
            reason,
        },
        e => e,
    })?;
    match c.output.format {
        Format::Json => a.json("pbr.json", &counts),
        Format::Csv => a.csv("pbr.csv", |buf| counts.write_csv(buf)),
    }
}

fn run_steer(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let batch = steering_batch(c.basis.into(), c.trials, c.seed)?;
    match c.output.format {
        Format::Json => a.json("steer.json", &batch),
        Format::Csv => a.csv("steer.csv", |buf| {
            csv_rows(
                buf,
                &STEER_CSV_HEADER,
                batch.branches.iter().map(|b| {
                    let s = b.bob_state.amplitudes();
                    [
                        b.alice_outcome.to_string(),
                        b.probability.to_string(),
                        b.count.to_string(),
                        s[0].re.to_string(),
                        s[0].im.to_string(),
                        s[1].re.to_string(),
                        s[1].im.to_string(),
                    ]
                }),
            )
        }),
    }
}

fn run_onto(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    let (single, bound) = match &c.model {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let single: OntologicalModel =
                serde_json::from_str(&text).map_err(|e| Error::Schema {
                    file: path.display().to_string(),
                    reason: e.to_string(),
                })?;
            let bound = min_violation_for(&single, c.resolution, &ViolationOptions::default())?;
            (single, bound)
        }
        None => (
            ontology::build_shared_reality_model(c.q)?,
            pbr_min_violation(c.q, c.resolution)?,
        ),
    };
    let pair = pbr_pair_model(&single, Some(bound.witnessing_responses.rows.clone()))?;
    let mc = monte_carlo_onto(&pair, Scenario::Pbr, c.trials, c.seed)?;
    if c.output.format == Format::Csv {
        a.csv("onto.csv", |buf| {
            csv_rows(
                buf,
                &ONTO_CSV_HEADER,
                mc.cells.iter().flat_map(|cell| {
                    (0..cell.counts.len()).map(move |k| {
                        [
                            cell.preparation.clone(),
                            (k + 1).to_string(),
                            cell.counts[k].to_string(),
                            cell.predicted[k].to_string(),
                            cell.born[k].to_string(),
                            (cell.forbidden_outcome == Some(k)).to_string(),
                        ]
                    })
                }),
            )
        })?;
    }
    a.json(
        "onto.json",
        &OntoOutput {
            bound,
            pair_model: pair,
            monte_carlo: mc,
        },
    )
}

fn embedded_plus(dim: usize) -> Result<StateVector> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[1] = v[0];
    StateVector::new(v)
}

fn run_nogo(c: &RunConfig, a: &mut Artifacts) -> Result<()> {
    for (name, d) in [("device_dim", c.device_dim), ("system_dim", c.system_dim)] {
        if !(2..=MAX_NOGO_DIM).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be in 2..={MAX_NOGO_DIM}, got {d}"
            )));
        }
    }
    let s1 = StateVector::basis(c.system_dim, 0)?;
    let s2 = embedded_plus(c.system_dim)?;
    let ready = StateVector::basis(c.device_dim, 0)?;
    let dim = c.device_dim * c.system_dim;
    let checks = (0..c.unitaries)
        .map(|i| {
            let u = haar_unitary(dim, &mut seeding::substream(c.seed, i));
            overlap_preservation_check(&u, &s1, &s2, &ready)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = checks
        .iter()
        .map(|k| (k.before - k.after).abs())
        .fold(0.0, f64::max);
    match c.output.format {
        Format::Json => a.json(
            "nogo.json",
            &NogoOutput {
                device_dim: c.device_dim,
                system_dim: c.system_dim,
                unitaries: c.unitaries,
                seed: c.seed,
                checks,
                max_deviation,
            },
        ),
        Format::Csv => a.csv("nogo.csv", |buf| {
            csv_rows(
                buf,
                &NOGO_CSV_HEADER,
                checks.iter().enumerate().map(|(i, k)| {
                    [
                        i.to_string(),
                        k.before.to_string(),
                        k.after.to_string(),
                        (k.before - k.after).abs().to_string(),
                    ]
                }),
            )
        }),
    }
}

/// Runs one subcommand and returns its artifacts, manifest last.
pub fn execute(config: &RunConfig) -> Result<Artifacts> {
    let command = config.subcommand.ok_or_else(|| Error::Schema {
        file: "config".into(),
        reason: "no subcommand".into(),
    })?;
    let mut a = Artifacts::new();
    match command {
        SubcommandName::Protective => run_protective(config, &mut a)?,
        SubcommandName::Leak => run_leak(config, &mut a)?,
        SubcommandName::Scan => run_scan(config, &mut a)?,
        SubcommandName::Pbr => run_pbr(config, &mut a)?,
        SubcommandName::Steer => run_steer(config, &mut a)?,
        SubcommandName::Onto => run_onto(config, &mut a)?,
        SubcommandName::Nogo => run_nogo(config, &mut a)?,
    }
    let manifest = Manifest {
        tool: "pmlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: command,
        seed: config.seed,
        files: a.files.iter().map(|(n, _)| n.clone()).collect(),
        versions: versions(),
        config: config.clone(),
    };
    a.json(MANIFEST_FILE, &manifest)?;
    Ok(a)
}

/// Runs and writes every artifact into `config.output.path`.
pub fn run(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let artifacts = execute(config)?;
    let dir = &config.output.path;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in artifacts.files {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn schema_err(file: &Path, reason: impl Into<String>) -> Error {
    Error::Schema {
        file: file.display().to_string(),
        reason: reason.into(),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| schema_err(path, e.to_string()))
}

fn check_csv(path: &Path, header: &[&str], numeric: &[usize]) -> Result<()> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(schema_err(path, format!("header {found:?}, expected {header:?}")));
    }
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for &col in numeric {
            let field = rec.get(col).unwrap_or("");
            if !field.is_empty() && field.parse::<f64>().is_err() {
                return Err(schema_err(path, format!("row {i}: field {col} = {field:?} is not numeric")));
            }
        }
    }
    Ok(())
}

/// Checks one emitted file against the schema implied by its name.
pub fn validate_file(path: &Path) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| schema_err(path, "not a file name"))?;
    match name {
        MANIFEST_FILE => {
            let m: Manifest = parse_json(path)?;
            if m.tool != "pmlab" || m.config.subcommand != Some(m.subcommand) {
                return Err(schema_err(path, "manifest header is inconsistent"));
            }
            if m.seed != m.config.seed {
                return Err(schema_err(path, "seed differs from the config echo"));
            }
        }
        JOINT_FILE => {
            let _: Option<JointSystemPointerState> = parse_json(path)?;
        }
        "protective.json" => {
            let text = fs::read_to_string(path)?;
            let ok = serde_json::from_str::<ProtectiveOutput>(&text).is_ok()
                || serde_json::from_str::<SweepOutput>(&text).is_ok()
                || serde_json::from_str::<TomographyOutput>(&text).is_ok();
            if !ok {
                return Err(schema_err(path, "not a protective, sweep or tomography record"));
            }
        }
        "protective.csv" => {
            let mut r = csv::Reader::from_path(path)?;
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            if h == crate::protective::STEP_LOG_CSV_HEADER {
                check_csv(path, &crate::protective::STEP_LOG_CSV_HEADER, &[0, 1, 2])?;
            } else if h == SWEEP_CSV_HEADER {
                check_csv(path, &SWEEP_CSV_HEADER, &[0, 1, 2, 3, 4, 5])?;
            } else {
                check_csv(path, &TOMOGRAPHY_CSV_HEADER, &[1, 2])?;
            }
        }
        "leak.json" => {
            let _: LeakOutput = parse_json(path)?;
        }
        "leak.csv" => check_csv(path, &crate::protective::STEP_LOG_CSV_HEADER, &[0, 1, 2])?,
        "scan.json" => {
            let s: ScanOutput = parse_json(path)?;
            if s.rows.len() != s.grid.n_points() {
                return Err(schema_err(path, "row count differs from grid size"));
            }
        }
        "scan.csv" => check_csv(path, &crate::weak::SCAN_CSV_HEADER, &[0, 1, 2, 3, 4])?,
        "pbr.json" => {
            let c: PbrCounts = parse_json(path)?;
            c.validate()?;
        }
        "pbr.csv" => check_csv(path, &crate::pbr::PBR_CSV_HEADER, &[1, 2, 3, 4])?,
        "steer.json" => {
            let b: SteeringBatch = parse_json(path)?;
            if b.branches.iter().map(|x| x.count).sum::<u64>() != b.trials {
                return Err(schema_err(path, "branch counts do not sum to trials"));
            }
        }
        "steer.csv" => check_csv(path, &STEER_CSV_HEADER, &[0, 1, 2, 3, 4, 5, 6])?,
        "onto.json" => {
            let o: OntoOutput = parse_json(path)?;
            if o.bound.witnessing_responses.rows.len() != o.pair_model.lambda().size() {
                return Err(schema_err(path, "witness table does not match the pair model"));
            }
        }
        "onto.csv" => check_csv(path, &ONTO_CSV_HEADER, &[1, 2, 3, 4])?,
        "nogo.json" => {
            let n: NogoOutput = parse_json(path)?;
            if n.checks.len() as u64 != n.unitaries {
                return Err(schema_err(path, "check count differs from unitaries"));
            }
        }
        "nogo.csv" => check_csv(path, &NOGO_CSV_HEADER, &[0, 1, 2, 3])?,
        other => return Err(schema_err(path, format!("unrecognized output file {other:?}"))),
    }
    Ok(())
}

/// Validates a run directory through its manifest, or a single file.
pub fn validate_path(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let manifest_path = path.join(MANIFEST_FILE);
        validate_file(&manifest_path)?;
        let m: Manifest = parse_json(&manifest_path)?;
        let mut checked = vec![manifest_path];
        for f in m.files {
            let p = path.join(f);
            validate_file(&p)?;
            checked.push(p);
        }
        Ok(checked)
    } else {
        validate_file(path)?;
        Ok(vec![path.to_path_buf()])
    }
}

/// Parses arguments, runs, and maps the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Validate { path } => validate_path(&path).map(|files| {
            for f in files {
                println!("ok {}", f.display());
            }
        }),
        cmd => {
            let name = cmd.name().expect("experiment subcommand");
            resolve_config(name, &cli.overrides).and_then(|c| {
                run(&c).map(|files| {
                    for f in files {
                        println!("{}", f.display());
                    }
                })
            })
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}

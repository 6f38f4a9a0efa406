//! Command-line front end. Every command writes one canonical JSON report (or
//! a CSV view of it) and exits 0 only when all of its checks pass.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::battery::{run_battery, BatteryConfig, BatteryReport, DEFAULT_SIGNIFICANCE};
use crate::chsh::{self, Averages, CellBattery, ConditionalAverageReport, SweepReport, QUANTUM_AVERAGES, QUANTUM_S_VALUE};
use crate::error::Error;
use crate::ghz::{self, CorrelationReport, EnumerationReport, FeasibilityReport};
use crate::linalg::TOLERANCE;
use crate::prob::FiniteProbabilitySpace;
use crate::worlds::{SamplingOptions, WorldPrefix};

pub const SCHEMA: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "typicality-lab", version, about = "CHSH and GHZ protocols as typical worlds, with local-hidden-variable contrasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample the CHSH protocol and estimate the four conditional averages.
    Chsh(ChshArgs),
    /// Sample the GHZ protocol and check its perfect correlations.
    Ghz(GhzArgs),
    /// Local-hidden-variable analyses.
    #[command(subcommand)]
    Lhv(LhvCommand),
    /// Block-frequency tests of a world file against a probability space file.
    Battery(BatteryArgs),
}

#[derive(Subcommand, Debug)]
pub enum LhvCommand {
    /// CHSH averages for a hidden-variable distribution, or a bound sweep.
    Chsh(LhvChshArgs),
    /// GHZ constraint enumeration and violation masses.
    Ghz(LhvGhzArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

impl FromStr for SeedArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "random" {
            return Ok(SeedArg::Random);
        }
        s.parse().map(SeedArg::Fixed).map_err(|e| format!("seed must be a u64 or 'random': {e}"))
    }
}

impl SeedArg {
    fn resolve(self) -> u64 {
        match self {
            SeedArg::Fixed(s) => s,
            SeedArg::Random => {
                let s = rand::random::<u64>();
                eprintln!("seed: {s}");
                s
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ChshArgs {
    #[arg(long, default_value_t = 200_000)]
    pub trials: usize,
    /// A u64, or `random` to draw one (printed on stderr).
    #[arg(long)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    /// Absolute tolerance replacing the 4-sigma defaults.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Block lengths for the per-cell battery.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    pub blocks: Vec<usize>,
    /// Save the sampled world (JSON, or compact text for a `.txt` path).
    #[arg(long)]
    pub world_out: Option<PathBuf>,
    /// Save the outcome distribution as JSON.
    #[arg(long)]
    pub fps_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GhzArgs {
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    /// Absolute tolerance on the free-triple mean products.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub world_out: Option<PathBuf>,
    #[arg(long)]
    pub fps_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct LhvChshArgs {
    /// JSON probability space on (r,q,s,t) tuples of +1/-1.
    #[arg(long)]
    pub h_file: Option<PathBuf>,
    /// Number of random hidden-variable spaces to evaluate.
    #[arg(long, default_value_t = 0)]
    pub sweep: usize,
    /// Also simulate `H x U x U` for this many trials (needs `--h-file`).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<SeedArg>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct LhvGhzArgs {
    /// JSON probability space on 6-tuples of +1/-1 (default: uniform).
    #[arg(long)]
    pub h_file: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BatteryArgs {
    /// World file: JSON as written by `--world-out`, or compact comma-separated tokens.
    #[arg(long)]
    pub world: PathBuf,
    /// Probability space JSON `{alphabet: [...], weights: [...]}`.
    #[arg(long)]
    pub fps: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    pub blocks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    pub significance: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Why a command could not produce a report.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::InvalidSpace(_)
            | Error::ForeignSymbol(_)
            | Error::Parse(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::InsufficientLength { .. }
            | Error::NotTuple(..) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

/// A finished command: canonical JSON, a CSV view, and its checks.
pub struct Outcome {
    pub json: String,
    pub csv: String,
    pub pass: bool,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    #[serde(flatten)]
    body: &'a T,
    checks: &'a [Check],
    status: &'static str,
    failures: Vec<&'a str>,
}

fn finish<T: Serialize>(body: &T, checks: &[Check], csv: String) -> Result<Outcome, CliError> {
    let pass = checks.iter().all(|c| c.pass);
    let envelope = Envelope {
        schema: SCHEMA,
        body,
        checks,
        status: if pass { "pass" } else { "fail" },
        failures: checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect(),
    };
    let json = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Outcome { json, csv, pass })
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn save_world(path: &Path, world: &WorldPrefix) -> Result<(), CliError> {
    let text = if path.extension().is_some_and(|e| e == "txt") { world.to_compact() } else { world.to_json()? };
    write_file(path, &text)
}

fn load_space(path: &Path, what: &str) -> Result<FiniteProbabilitySpace, CliError> {
    FiniteProbabilitySpace::from_json(&read_file(path)?)
        .map_err(|e| CliError::Usage(format!("{what} file {}: {e}", path.display())))
}

fn check_tolerance(tol: Option<f64>) -> Result<(), CliError> {
    match tol {
        Some(t) if !(t.is_finite() && t >= 0.0) => Err(CliError::Usage(format!("--tolerance must be a non-negative number, got {t}"))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct CrossCheck {
    max_abs_diff: f64,
    tolerance: f64,
    pass: bool,
}

fn cross_check(analytic: &FiniteProbabilitySpace, operators: &FiniteProbabilitySpace) -> Result<CrossCheck, CliError> {
    let max_abs_diff = analytic.max_abs_diff(operators)?;
    Ok(CrossCheck { max_abs_diff, tolerance: TOLERANCE, pass: max_abs_diff <= TOLERANCE })
}

#[derive(Serialize)]
struct ChshBattery {
    significance: f64,
    block_lens: Vec<usize>,
    pass: bool,
    cells: Vec<CellBattery>,
}

#[derive(Serialize)]
struct ChshExpected {
    averages: Averages<f64>,
    s_value: f64,
}

#[derive(Serialize)]
struct ChshBody {
    protocol: &'static str,
    seed: u64,
    trials: usize,
    #[serde(flatten)]
    report: ConditionalAverageReport,
    expected: ChshExpected,
    cross_check: CrossCheck,
    battery: ChshBattery,
}

pub fn cmd_chsh(args: &ChshArgs) -> Result<Outcome, CliError> {
    if args.trials < chsh::MIN_TRIALS {
        return Err(CliError::Usage(format!("--trials must be at least {}, got {}", chsh::MIN_TRIALS, args.trials)));
    }
    check_tolerance(args.tolerance)?;
    let seed = args.seed.resolve();
    let battery_config = BatteryConfig { block_lens: args.blocks.clone(), significance: DEFAULT_SIGNIFICANCE };
    let options = chsh::RunOptions {
        sampling: SamplingOptions { threads: args.threads as usize },
        battery: battery_config.clone(),
    };
    let run = chsh::run_chsh_with(args.trials, seed, &options)?;
    let cc = cross_check(&run.distribution, &chsh::chsh_distribution(chsh::Method::LinearAlgebra)?)?;
    if let Some(path) = &args.world_out {
        save_world(path, &run.world)?;
    }
    if let Some(path) = &args.fps_out {
        write_file(path, &run.distribution.to_json()?)?;
    }

    let report = match args.tolerance {
        Some(t) => run.report.with_absolute_tolerance(t),
        None => run.report,
    };
    let tol = report.tolerances.clone().expect("empirical report carries tolerances");
    let s_dev = (report.s_value - QUANTUM_S_VALUE).abs();
    let mut checks = vec![
        Check::new(
            "distribution_cross_check",
            cc.pass,
            format!("max |analytic - operator| = {:e} (tolerance {:e})", cc.max_abs_diff, cc.tolerance),
        ),
        Check::new(
            "s_value",
            s_dev <= tol.s_value,
            format!("|S - 2 sqrt 2| = {s_dev:.6} (tolerance {:.6})", tol.s_value),
        ),
    ];
    let battery = ChshBattery {
        significance: battery_config.significance,
        block_lens: battery_config.block_lens.clone(),
        pass: run.battery.iter().all(|b| b.report.pass),
        cells: run.battery,
    };
    checks.push(Check::new(
        "battery_informational",
        true,
        format!("conditioned cells {} the block tests (not gating)", if battery.pass { "pass" } else { "do not all pass" }),
    ));

    let a = report.averages;
    let csv = csv_table(
        &["rs", "qs", "rt", "qt", "s_value"],
        &[vec![a.rs.to_string(), a.qs.to_string(), a.rt.to_string(), a.qt.to_string(), report.s_value.to_string()]],
    )?;
    let body = ChshBody {
        protocol: "chsh",
        seed,
        trials: args.trials,
        report,
        expected: ChshExpected { averages: QUANTUM_AVERAGES, s_value: QUANTUM_S_VALUE },
        cross_check: cc,
        battery,
    };
    finish(&body, &checks, csv)
}

#[derive(Serialize)]
struct FreeTripleTolerance {
    sigmas: f64,
    overridden: bool,
    within_tolerance: std::collections::BTreeMap<String, bool>,
}

#[derive(Serialize)]
struct GhzLhv {
    satisfying_count: usize,
    plus_constraints_only_count: usize,
    assignments: usize,
    witnesses: Vec<ghz::Witness>,
}

#[derive(Serialize)]
struct GhzBody {
    protocol: &'static str,
    seed: u64,
    trials: usize,
    cross_check: CrossCheck,
    #[serde(flatten)]
    correlations: CorrelationReport,
    free_triple_tolerance: FreeTripleTolerance,
    lhv: GhzLhv,
}

pub fn cmd_ghz(args: &GhzArgs) -> Result<Outcome, CliError> {
    if args.trials < ghz::MIN_TRIALS {
        return Err(CliError::Usage(format!("--trials must be at least {}, got {}", ghz::MIN_TRIALS, args.trials)));
    }
    check_tolerance(args.tolerance)?;
    let seed = args.seed.resolve();
    let run = ghz::sample_ghz(args.trials, seed, SamplingOptions { threads: args.threads as usize })?;
    let cc = cross_check(&run.distribution, &ghz::ghz_distribution(ghz::Method::LinearAlgebra)?)?;
    if let Some(path) = &args.world_out {
        save_world(path, &run.world)?;
    }
    if let Some(path) = &args.fps_out {
        write_file(path, &run.distribution.to_json()?)?;
    }
    let enumeration = ghz::lhv_ghz_enumerate();

    let sigmas = chsh::DEFAULT_SIGMAS;
    let within_tolerance = run
        .report
        .free_triples
        .iter()
        .map(|(name, t)| {
            let tol = args.tolerance.unwrap_or(sigmas * t.standard_error);
            (name.clone(), t.mean_product.abs() <= tol)
        })
        .collect();

    let mut checks = vec![Check::new(
        "distribution_cross_check",
        cc.pass,
        format!("max |analytic - operator| = {:e} (tolerance {:e})", cc.max_abs_diff, cc.tolerance),
    )];
    for (name, t) in &run.report.perfect_correlation {
        checks.push(Check::new(
            &format!("perfect_correlation_{name}"),
            t.violations == 0,
            format!("{} of {} trials violate m1 m2 m3 = {:+}", t.violations, t.trials, t.required_product),
        ));
    }
    checks.push(Check::new(
        "lhv_enumeration",
        enumeration.satisfying_count == 0,
        format!("{} of {} assignments satisfy all four constraints", enumeration.satisfying_count, enumeration.assignments),
    ));

    let mut rows = Vec::new();
    for (name, t) in &run.report.perfect_correlation {
        rows.push(vec![name.clone(), t.trials.to_string(), t.required_product.to_string(), t.violations.to_string(), String::new()]);
    }
    for (name, t) in &run.report.free_triples {
        rows.push(vec![name.clone(), t.trials.to_string(), String::new(), String::new(), t.mean_product.to_string()]);
    }
    rows.sort();
    let csv = csv_table(&["triple", "trials", "required_product", "violations", "mean_product"], &rows)?;

    let body = GhzBody {
        protocol: "ghz",
        seed,
        trials: args.trials,
        cross_check: cc,
        correlations: run.report,
        free_triple_tolerance: FreeTripleTolerance { sigmas, overridden: args.tolerance.is_some(), within_tolerance },
        lhv: GhzLhv {
            satisfying_count: enumeration.satisfying_count,
            plus_constraints_only_count: enumeration.plus_constraints_only_count,
            assignments: enumeration.assignments,
            witnesses: enumeration.witnesses,
        },
    };
    finish(&body, &checks, csv)
}

#[derive(Serialize)]
struct LhvChshBody {
    protocol: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<ConditionalAverageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<LhvSimulationBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepReport>,
}

#[derive(Serialize)]
struct LhvSimulationBody {
    trials: usize,
    empirical: ConditionalAverageReport,
}

fn within_bound(s: f64) -> bool {
    (-chsh::CLASSICAL_BOUND - TOLERANCE..=chsh::CLASSICAL_BOUND + TOLERANCE).contains(&s)
}

pub fn cmd_lhv_chsh(args: &LhvChshArgs) -> Result<Outcome, CliError> {
    if args.h_file.is_none() && args.sweep == 0 {
        return Err(CliError::Usage("lhv chsh needs --h-file, --sweep N, or both".into()));
    }
    if args.trials.is_some() && args.h_file.is_none() {
        return Err(CliError::Usage("--trials simulates a given distribution and needs --h-file".into()));
    }
    if let Some(t) = args.trials {
        if t < chsh::MIN_TRIALS {
            return Err(CliError::Usage(format!("--trials must be at least {}, got {t}", chsh::MIN_TRIALS)));
        }
    }
    check_tolerance(args.tolerance)?;
    let needs_seed = args.sweep > 0 || args.trials.is_some();
    let seed = match (args.seed, needs_seed) {
        (Some(s), _) => Some(s.resolve()),
        (None, true) => return Err(CliError::Usage("--seed is required with --sweep or --trials".into())),
        (None, false) => None,
    };

    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let row = |source: &str, r: &ConditionalAverageReport| {
        let a = r.averages;
        vec![source.to_string(), a.rs.to_string(), a.qs.to_string(), a.rt.to_string(), a.qt.to_string(), r.s_value.to_string()]
    };

    let mut exact = None;
    let mut simulation = None;
    if let Some(path) = &args.h_file {
        let h = load_space(path, "hidden-variable")?;
        let report = chsh::lhv_chsh_averages(&h).map_err(|e| CliError::Usage(format!("hidden-variable file {}: {e}", path.display())))?;
        checks.push(Check::new(
            "chsh_bound",
            within_bound(report.s_value),
            format!("S = {} against the bound 2", report.s_value),
        ));
        rows.push(row("exact", &report));
        if let Some(trials) = args.trials {
            let sim = chsh::lhv_chsh_simulate(&h, trials, seed.expect("seed checked"), SamplingOptions { threads: args.threads as usize })?;
            let empirical = match args.tolerance {
                Some(t) => sim.empirical.with_absolute_tolerance(t),
                None => sim.empirical,
            };
            let tol = empirical.tolerances.as_ref().map(|t| t.s_value).unwrap_or(0.0);
            checks.push(Check::new(
                "simulated_s_value",
                (empirical.s_value - report.s_value).abs() <= tol && empirical.s_value <= chsh::CLASSICAL_BOUND + tol,
                format!("empirical S = {} vs exact {} (tolerance {tol})", empirical.s_value, report.s_value),
            ));
            rows.push(row("empirical", &empirical));
            simulation = Some(LhvSimulationBody { trials, empirical });
        }
        exact = Some(report);
    }

    let mut sweep = None;
    if args.sweep > 0 {
        let report = chsh::lhv_chsh_sweep(args.sweep, seed.expect("seed checked"))?;
        checks.push(Check::new(
            "sweep_bound",
            report.within_bound,
            format!("max S over {} random spaces and 16 vertices = {}", report.random_spaces, report.max_s_value),
        ));
        checks.push(Check::new(
            "vertex_maximum",
            (report.vertex_max - chsh::CLASSICAL_BOUND).abs() <= TOLERANCE,
            format!("max S over deterministic vertices = {}", report.vertex_max),
        ));
        let blank = || vec![String::new(); 4];
        let mut r = vec!["sweep_max".to_string()];
        r.extend(blank());
        r.push(report.max_s_value.to_string());
        rows.push(r);
        let mut r = vec!["vertex_max".to_string()];
        r.extend(blank());
        r.push(report.vertex_max.to_string());
        rows.push(r);
        sweep = Some(report);
    }

    let csv = csv_table(&["source", "rs", "qs", "rt", "qt", "s_value"], &rows)?;
    let body = LhvChshBody { protocol: "lhv-chsh", seed, bound: chsh::CLASSICAL_BOUND, exact, simulation, sweep };
    finish(&body, &checks, csv)
}

#[derive(Serialize)]
struct LhvGhzBody {
    protocol: &'static str,
    enumeration: EnumerationReport,
    feasibility: FeasibilityReport,
    conclusion: &'static str,
}

pub fn cmd_lhv_ghz(args: &LhvGhzArgs) -> Result<Outcome, CliError> {
    let p = match &args.h_file {
        Some(path) => load_space(path, "hidden-variable")?,
        None => ghz::uniform_assignments(),
    };
    let feasibility = ghz::lhv_ghz_feasibility(&p).map_err(|e| CliError::Usage(e.to_string()))?;
    let enumeration = ghz::lhv_ghz_enumerate();
    let checks = vec![
        Check::new(
            "lhv_enumeration",
            enumeration.satisfying_count == 0,
            format!("{} of {} assignments satisfy all four constraints", enumeration.satisfying_count, enumeration.assignments),
        ),
        Check::new(
            "infeasible",
            !feasibility.feasible && (feasibility.any_violation_mass - 1.0).abs() <= TOLERANCE,
            format!("mass violating at least one constraint = {}", feasibility.any_violation_mass),
        ),
    ];
    let rows: Vec<Vec<String>> = feasibility
        .per_constraint
        .iter()
        .map(|(name, m)| vec![name.clone(), m.satisfying_mass.to_string(), m.violation_mass.to_string()])
        .collect();
    let csv = csv_table(&["constraint", "satisfying_mass", "violation_mass"], &rows)?;
    let body = LhvGhzBody {
        protocol: "lhv-ghz",
        enumeration,
        feasibility,
        conclusion: "no probability space on {+1,-1}^6 gives zero violation mass for all four constraints",
    };
    finish(&body, &checks, csv)
}

#[derive(Serialize)]
struct BatteryBody {
    protocol: &'static str,
    world_length: usize,
    alphabet_size: usize,
    #[serde(flatten)]
    report: BatteryReport,
}

fn load_world(path: &Path, fps: &FiniteProbabilitySpace) -> Result<WorldPrefix, CliError> {
    let text = read_file(path)?;
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Err(CliError::Usage(format!("world file {} is empty", path.display())));
    }
    let world = if trimmed.starts_with('{') {
        WorldPrefix::from_json(trimmed)
    } else {
        WorldPrefix::from_compact(trimmed, fps.alphabet().to_vec())
    }
    .map_err(|e| CliError::Usage(format!("world file {}: {e}", path.display())))?;
    if world.is_empty() {
        return Err(CliError::Usage(format!("world file {} has no symbols", path.display())));
    }
    world
        .alphabet_map(fps)
        .map_err(|e| CliError::Usage(format!("world and probability space alphabets do not match: {e}")))?;
    Ok(world)
}

pub fn cmd_battery(args: &BatteryArgs) -> Result<Outcome, CliError> {
    let fps = load_space(&args.fps, "probability space")?;
    let world = load_world(&args.world, &fps)?;
    let config = BatteryConfig { block_lens: args.blocks.clone(), significance: args.significance };
    let report = run_battery(&world, &fps, &config)?;
    let checks: Vec<Check> = report
        .tests
        .iter()
        .map(|t| {
            Check::new(
                &format!("block_frequency_k{}", t.block_len),
                t.pass,
                format!("chi-square {} vs threshold {} ({} dof)", t.statistic, t.threshold, t.degrees_of_freedom),
            )
        })
        .collect();
    let rows: Vec<Vec<String>> = report
        .tests
        .iter()
        .map(|t| {
            vec![
                t.block_len.to_string(),
                t.blocks.to_string(),
                t.degrees_of_freedom.to_string(),
                t.statistic.to_string(),
                t.threshold.to_string(),
                t.pass.to_string(),
            ]
        })
        .collect();
    let csv = csv_table(&["block_len", "blocks", "degrees_of_freedom", "statistic", "threshold", "pass"], &rows)?;
    let body = BatteryBody { protocol: "battery", world_length: world.len(), alphabet_size: fps.len(), report };
    finish(&body, &checks, csv)
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    schema: u32,
    status: &'static str,
    kind: &'static str,
    message: &'a str,
}

fn output_args(cmd: &Command) -> &OutputArgs {
    match cmd {
        Command::Chsh(a) => &a.output,
        Command::Ghz(a) => &a.output,
        Command::Lhv(LhvCommand::Chsh(a)) => &a.output,
        Command::Lhv(LhvCommand::Ghz(a)) => &a.output,
        Command::Battery(a) => &a.output,
    }
}

/// Runs a parsed command, writes its report, and returns the exit status.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Chsh(a) => cmd_chsh(a),
        Command::Ghz(a) => cmd_ghz(a),
        Command::Lhv(LhvCommand::Chsh(a)) => cmd_lhv_chsh(a),
        Command::Lhv(LhvCommand::Ghz(a)) => cmd_lhv_ghz(a),
        Command::Battery(a) => cmd_battery(a),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(err) => {
            let (kind, code) = match err {
                CliError::Usage(_) => ("usage", EXIT_USAGE),
                CliError::Runtime(_) => ("runtime", EXIT_CHECK_FAILED),
            };
            let message = err.to_string();
            let report = ErrorReport { schema: SCHEMA, status: "error", kind, message: &message };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or(message.clone()));
            return code;
        }
    };
    let out = output_args(&cli.command);
    let mut text = match out.format {
        Format::Json => outcome.json,
        Format::Csv => outcome.csv,
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &out.out {
        Some(path) => {
            if let Err(e) = write_file(path, &text) {
                eprintln!("{e}");
                return EXIT_CHECK_FAILED;
            }
        }
        None => print!("{text}"),
    }
    if outcome.pass {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("typicality-lab").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn seed_parsing() {
        assert_eq!("42".parse::<SeedArg>().unwrap(), SeedArg::Fixed(42));
        assert_eq!("random".parse::<SeedArg>().unwrap(), SeedArg::Random);
        assert!("-1".parse::<SeedArg>().is_err());
    }

    #[test]
    fn seed_is_required() {
        assert!(Cli::try_parse_from(["typicality-lab", "chsh"]).is_err());
        assert!(Cli::try_parse_from(["typicality-lab", "ghz", "--trials", "9000"]).is_err());
    }

    #[test]
    fn blocks_list() {
        let cli = parse(&["battery", "--world", "w", "--fps", "p", "--blocks", "1,4"]);
        match cli.command {
            Command::Battery(a) => assert_eq!(a.blocks, vec![1, 4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_trials_is_usage_error() {
        let Command::Chsh(args) = parse(&["chsh", "--trials", "10", "--seed", "1"]).command else { unreachable!() };
        assert!(matches!(cmd_chsh(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn chsh_csv_header() {
        let Command::Chsh(args) = parse(&["chsh", "--trials", "4000", "--seed", "1", "--blocks", "1"]).command else {
            unreachable!()
        };
        let out = cmd_chsh(&args).unwrap();
        assert!(out.csv.starts_with("rs,qs,rt,qt,s_value\n"));
        assert_eq!(out.csv.lines().count(), 2);
    }

    #[test]
    fn lhv_chsh_needs_input() {
        let Command::Lhv(LhvCommand::Chsh(args)) = parse(&["lhv", "chsh"]).command else { unreachable!() };
        assert!(matches!(cmd_lhv_chsh(&args), Err(CliError::Usage(_))));
        let Command::Lhv(LhvCommand::Chsh(args)) = parse(&["lhv", "chsh", "--sweep", "3"]).command else { unreachable!() };
        assert!(matches!(cmd_lhv_chsh(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn lhv_ghz_default_is_infeasible() {
        let Command::Lhv(LhvCommand::Ghz(args)) = parse(&["lhv", "ghz"]).command else { unreachable!() };
        let out = cmd_lhv_ghz(&args).unwrap();
        assert!(out.pass);
        assert!(out.json.contains("\"satisfying_count\": 0"));
    }
}

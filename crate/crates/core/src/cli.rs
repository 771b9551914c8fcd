//! Command-line front end. Every command writes a JSON report (field-export
//! writes CSV only) with the effective configuration embedded.

use std::ffi::OsString;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use crate::criteria::{lappan_five, lappan_four, write_criterion_csv, CriterionReport};
use crate::error::Error;
use crate::mapfn::{parse_complex_literal, Disc, HarmonicMap};
use crate::normality::{classify_normality, write_trace_csv, NormalityVerdict};
use crate::phi::{reciprocal_convexity_check, smooth_increase_check, PhiWeight, SmoothIncreaseReport};
use crate::rescale::{convergence_probe, extract_sequence, write_sequence_csv, ConvergenceReport, RescalingSequence};
use crate::roots::{find_preimages, write_preimages_csv, PreimageSet, DEFAULT_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Analyze,
    Rescale,
    Preimages,
    Lappan,
    PhiCheck,
    FieldExport,
}

fn complex_arg(s: &str) -> Result<Complex64, String> {
    parse_complex_literal(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Parser)]
#[command(name = "phinormal", version, about = "Weighted spherical-derivative analysis of harmonic maps on the unit disc")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Map file with `h = ...`, `g = ...` and optional `z0`, `singularities`.
    #[arg(long = "map")]
    pub map: Option<PathBuf>,
    /// `classical`, `inv_pow:alpha=<d>` or `inv_log:beta=<d>`.
    #[arg(long = "phi", default_value = "classical")]
    pub phi: String,
    #[arg(long = "rstart", default_value_t = 0.5)]
    pub rstart: f64,
    #[arg(long = "rfactor", default_value_t = 0.5)]
    pub rfactor: f64,
    #[arg(long = "steps", default_value_t = 12)]
    pub steps: usize,
    #[arg(long = "depth", default_value_t = 8)]
    pub depth: usize,
    #[arg(long = "out", default_value = "report.json")]
    pub out: PathBuf,
    #[arg(long = "tol")]
    pub tol: Option<f64>,
    /// Target value; repeat to build the set E.
    #[arg(long = "target", value_parser = complex_arg, allow_hyphen_values = true)]
    pub target: Vec<Complex64>,
    #[arg(long = "radius")]
    pub radius: Option<f64>,
    #[arg(long = "grid")]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub r_start: f64,
    pub r_factor: f64,
    pub steps: usize,
    pub radii: Vec<f64>,
}

impl Schedule {
    /// `r_n = 1 - (1 - r_start) * r_factor^(n - 1)` for `n = 1..=steps`.
    pub fn new(r_start: f64, r_factor: f64, steps: usize) -> Result<Self, CliError> {
        if !(0.0 < r_start && r_start < 1.0) || !(0.0 < r_factor && r_factor < 1.0) || steps == 0 {
            return Err(CliError::Input(format!(
                "schedule needs 0 < rstart < 1, 0 < rfactor < 1 and steps >= 1 (got {r_start}, {r_factor}, {steps})"
            )));
        }
        let radii: Vec<f64> = (0..steps)
            .map(|k| 1.0 - (1.0 - r_start) * r_factor.powi(k as i32))
            .collect();
        if radii.iter().any(|&r| r >= 1.0) || radii.windows(2).any(|p| p[1] <= p[0]) {
            return Err(CliError::Input("schedule radii collapse to 1 in floating point; use fewer steps".into()));
        }
        Ok(Self {
            r_start,
            r_factor,
            steps,
            radii,
        })
    }
}

/// Fully resolved configuration; embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub map_path: Option<PathBuf>,
    pub weight: PhiWeight,
    pub schedule: Schedule,
    pub depth: usize,
    pub output_path: PathBuf,
    pub tol: f64,
    pub targets: Vec<Complex64>,
    pub radius: f64,
    pub grid: usize,
}

impl RunConfig {
    pub fn from_args(args: &Args) -> Result<Self, CliError> {
        let weight: PhiWeight = args.phi.parse().map_err(CliError::from_error)?;
        let schedule = Schedule::new(args.rstart, args.rfactor, args.steps)?;
        let (radius, grid) = match args.command {
            Command::Analyze | Command::Lappan => (args.radius.unwrap_or(0.0), args.grid.unwrap_or(0)),
            Command::Rescale => (args.radius.unwrap_or(1.0), args.grid.unwrap_or(33)),
            Command::Preimages => (args.radius.unwrap_or(0.999), args.grid.unwrap_or(0)),
            Command::PhiCheck => (args.radius.unwrap_or(2.0), args.grid.unwrap_or(1000)),
            Command::FieldExport => (args.radius.unwrap_or(0.9), args.grid.unwrap_or(128)),
        };
        let needs_map = args.command != Command::PhiCheck;
        let map_path = match &args.map {
            Some(p) if p.as_os_str().is_empty() => return Err(CliError::Input("--map path is empty".into())),
            Some(p) => Some(p.clone()),
            None if needs_map => return Err(CliError::Input("--map is required for this command".into())),
            None => None,
        };
        if args.out.as_os_str().is_empty() {
            return Err(CliError::Input("--out path is empty".into()));
        }
        let tol = args.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Input(format!("--tol must be positive, got {tol}")));
        }
        match args.command {
            Command::Preimages if args.target.is_empty() => {
                return Err(CliError::Input("preimages needs at least one --target".into()))
            }
            Command::Lappan if !matches!(args.target.len(), 4 | 5) => {
                return Err(CliError::Input(format!(
                    "lappan needs 4 or 5 --target values, got {}",
                    args.target.len()
                )))
            }
            Command::Preimages | Command::Rescale | Command::FieldExport | Command::PhiCheck
                if !(radius > 0.0 && radius.is_finite()) =>
            {
                return Err(CliError::Input(format!("--radius must be positive, got {radius}")))
            }
            Command::FieldExport if radius >= 1.0 => {
                return Err(CliError::Input(format!("--radius must be below 1 for field-export, got {radius}")))
            }
            Command::Rescale | Command::FieldExport | Command::PhiCheck if grid < 3 => {
                return Err(CliError::Input(format!("--grid must be at least 3, got {grid}")))
            }
            _ => {}
        }
        Ok(Self {
            command: args.command,
            map_path,
            weight,
            schedule,
            depth: args.depth,
            output_path: args.out.clone(),
            tol,
            targets: args.target.clone(),
            radius,
            grid,
        })
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Analysis(String),
}

impl CliError {
    /// Parse, file and weight errors are input errors; the rest are
    /// analysis errors.
    pub fn from_error(e: Error) -> Self {
        match e {
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::MalformedNumber { .. }
            | Error::MapFile(_)
            | Error::InvalidWeight(_)
            | Error::NotNormalized { .. } => CliError::Input(e.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Analysis(_) => EXIT_ANALYSIS,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Analysis(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSummary {
    pub label: String,
    pub h: String,
    pub g: String,
    pub z0: Complex64,
}

impl MapSummary {
    fn of(m: &HarmonicMap) -> Self {
        Self {
            label: m.label().to_string(),
            h: m.h().to_string(),
            g: m.g().to_string(),
            z0: m.z0(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    map: Option<MapSummary>,
    result: T,
}

#[derive(Debug, Serialize)]
struct RescaleResult {
    sequence: RescalingSequence,
    convergence: Option<ConvergenceReport>,
    convergence_skipped: Option<String>,
}

#[derive(Debug, Serialize)]
struct PhiCheckResult {
    smooth_increase: SmoothIncreaseReport,
    reciprocal_convex: bool,
}

/// Files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| io_err(path, e))?;
    out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

fn write_csv_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> crate::Result<()>,
{
    let mut out = create(path)?;
    f(&mut out).map_err(CliError::from_error)?;
    out.flush().map_err(|e| io_err(path, e))
}

fn load_map(config: &RunConfig) -> Result<HarmonicMap, CliError> {
    let path = config
        .map_path
        .as_deref()
        .ok_or_else(|| CliError::Input("--map is required for this command".into()))?;
    HarmonicMap::from_map_file(path).map_err(CliError::from_error)
}

/// Runs one command and writes its outputs.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let json_path = config.output_path.clone();
    let csv_path = config.output_path.with_extension("csv");
    let analysis = CliError::from_error;
    match config.command {
        Command::Analyze => {
            let m = load_map(config)?;
            let verdict: NormalityVerdict =
                classify_normality(&m, &config.weight, &config.schedule.radii, config.depth).map_err(analysis)?;
            write_json(&json_path, &Report { config, map: Some(MapSummary::of(&m)), result: &verdict })?;
            write_csv_with(&csv_path, |w| write_trace_csv(&verdict.sup_trace, w))?;
        }
        Command::Rescale => {
            let m = load_map(config)?;
            let sequence =
                extract_sequence(&m, &config.weight, &config.schedule.radii, config.depth).map_err(analysis)?;
            let (convergence, convergence_skipped) =
                match convergence_probe(&m, &config.weight, &sequence, config.radius, config.grid) {
                    Ok(r) => (Some(r), None),
                    Err(Error::Precondition(msg)) => (None, Some(msg)),
                    Err(e) => return Err(analysis(e)),
                };
            let result = RescaleResult {
                sequence,
                convergence,
                convergence_skipped,
            };
            write_json(&json_path, &Report { config, map: Some(MapSummary::of(&m)), result: &result })?;
            write_csv_with(&csv_path, |w| write_sequence_csv(&result.sequence, w))?;
        }
        Command::Preimages => {
            let m = load_map(config)?;
            let region = Disc::centered(config.radius);
            let sets = config
                .targets
                .iter()
                .map(|&a| find_preimages(&m, a, &region, config.tol))
                .collect::<crate::Result<Vec<PreimageSet>>>()
                .map_err(analysis)?;
            write_json(&json_path, &Report { config, map: Some(MapSummary::of(&m)), result: &sets })?;
            write_csv_with(&csv_path, |w| write_preimages_csv(&sets, w))?;
        }
        Command::Lappan => {
            let m = load_map(config)?;
            let radii = &config.schedule.radii;
            let report: CriterionReport = if config.targets.len() == 5 {
                lappan_five(&m, &config.weight, &config.targets, radii, config.tol)
            } else {
                lappan_four(&m, &config.weight, &config.targets, radii, config.tol)
            }
            .map_err(analysis)?;
            write_json(&json_path, &Report { config, map: Some(MapSummary::of(&m)), result: &report })?;
            write_csv_with(&csv_path, |w| write_criterion_csv(&report, w))?;
        }
        Command::PhiCheck => {
            let result = PhiCheckResult {
                smooth_increase: smooth_increase_check(&config.weight, &config.schedule.radii, config.radius),
                reciprocal_convex: reciprocal_convexity_check(&config.weight, config.grid).map_err(analysis)?,
            };
            write_json(&json_path, &Report { config, map: None, result: &result })?;
            write_csv_with(&csv_path, |w| write_phi_csv(&config.weight, &result.smooth_increase, w))?;
            return Ok(RunSummary { written: vec![json_path, csv_path] });
        }
        Command::FieldExport => {
            let m = load_map(config)?;
            write_csv_with(&json_path, |w| write_field_csv(&m, &config.weight, config.radius, config.grid, w))?;
            return Ok(RunSummary { written: vec![json_path] });
        }
    }
    Ok(RunSummary { written: vec![json_path, csv_path] })
}

fn write_phi_csv<W: Write>(w: &PhiWeight, rep: &SmoothIncreaseReport, out: W) -> crate::Result<()> {
    let io = |e: csv::Error| Error::MapFile(format!("csv write failed: {e}"));
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["radius", "phi", "phi_times_one_minus_r", "ratio_sup_deviation", "excluded"]).map_err(io)?;
    for (k, &r) in rep.radii.iter().enumerate() {
        wtr.write_record([
            r.to_string(),
            w.eval(r).map(|v| v.to_string()).unwrap_or_default(),
            rep.growth_trend[k].to_string(),
            rep.ratio_sup_deviation[k].to_string(),
            rep.excluded_samples[k].to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::MapFile(format!("csv write failed: {e}")))?;
    Ok(())
}

/// `grid` x `grid` polar samples of `|z| <= radius`: rows
/// `x,y,re_f,im_f,fsharp,ratio`, blank where evaluation fails.
pub fn write_field_csv<W: Write>(m: &HarmonicMap, w: &PhiWeight, radius: f64, grid: usize, out: W) -> crate::Result<()> {
    use rayon::prelude::*;
    let io = |e: csv::Error| Error::MapFile(format!("csv write failed: {e}"));
    let points: Vec<Complex64> = (0..grid)
        .flat_map(|i| {
            let r = radius * i as f64 / (grid - 1) as f64;
            (0..grid).map(move |j| Complex64::from_polar(r, TAU * j as f64 / grid as f64))
        })
        .collect();
    let rows: Vec<[String; 6]> = points
        .par_iter()
        .map(|&z| {
            let mut row: [String; 6] = Default::default();
            row[0] = z.re.to_string();
            row[1] = z.im.to_string();
            if let Ok(jet) = m.jet(z) {
                let f = jet.value();
                let s = jet.spherical_derivative();
                row[2] = f.re.to_string();
                row[3] = f.im.to_string();
                row[4] = s.to_string();
                if let Ok(p) = w.eval(z.norm()) {
                    row[5] = (s / p).to_string();
                }
            }
            row
        })
        .collect();
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["x", "y", "re_f", "im_f", "fsharp", "ratio"]).map_err(io)?;
    for row in &rows {
        wtr.write_record(row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::MapFile(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Parses arguments, runs, prints diagnostics and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = RunConfig::from_args(&args).and_then(|config| run(&config));
    match outcome {
        Ok(summary) => {
            for p in summary.written {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

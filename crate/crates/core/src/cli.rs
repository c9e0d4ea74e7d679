//! Command-line front end.
//!
//! Reports go to stdout, diagnostics to stderr, artifacts to files. Exit
//! codes: 0 success, 2 usage or I/O, 3 condition or stability failure,
//! 4 chattering, 5 solver, 6 inconclusive, 7 detection, 8 fit.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::design::{solve_design, CycleSpec, SolveOptions};
use crate::error::Error;
use crate::identify::{identify_psas, load_timeseries, DetectOptions, ExtremumKind, IdentifyOptions};
use crate::linalg::Vec2;
use crate::model::Psas;
use crate::refosc::{generate, RelaxOscParams, Y_INIT};
use crate::simulate::{detect_limit_cycle, run as simulate_run, write_events_csv, write_trajectory_csv, CycleEstimate};
use crate::verify::{check_global_stability, check_theorem1_auto, grid, locate_cycle, CheckOptions, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAIL: i32 = 3;
pub const EXIT_CHATTERING: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_INCONCLUSIVE: i32 = 6;
pub const EXIT_DETECTION: i32 = 7;
pub const EXIT_FIT: i32 = 8;

#[derive(Debug, Parser)]
#[command(
    name = "psas",
    version,
    about = "Design, simulate, verify and identify planar switching affine oscillators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the sufficient cycle conditions on a model.
    Validate(ValidateArgs),
    /// Simulate a model and write its trajectory.
    Simulate(SimulateArgs),
    /// Synthesise a model from a cycle spec.
    Design(DesignArgs),
    /// Certify global stability of a model's limit cycle.
    Verify(VerifyArgs),
    /// Identify a model from measured data.
    Identify(IdentifyArgs),
    /// Generate data from the relaxation oscillator.
    Gendata(GendataArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Initial state as "x1,x2".
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long)]
    pub t_end: f64,
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model JSON used as the starting point.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Grid as "x1min,x1max,x2min,x2max,n".
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExtremumArg {
    Auto,
    Max,
    Min,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Moving-average window in samples.
    #[arg(long, default_value_t = 11)]
    pub smooth: usize,
    /// Kink threshold in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub curvature: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub extremum: ExtremumArg,
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub t_end: f64,
    #[arg(long)]
    pub dt: f64,
    /// Overrides the seed in the parameter file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Initial state as "y1,y2".
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

type CmdResult = std::result::Result<i32, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Exit code for a library error outside any pipeline stage.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Stage { stage, source } => match *stage {
            "detect" => EXIT_DETECTION,
            "fit" | "extrema" | "spec" => EXIT_FIT,
            "design" | "simulate" => match exit_code(source) {
                EXIT_CHATTERING => EXIT_CHATTERING,
                _ => EXIT_SOLVER,
            },
            _ => exit_code(source),
        },
        Error::ChatteringDetected { .. } => EXIT_CHATTERING,
        Error::NoConvergence { .. } | Error::SingularJacobian { .. } | Error::NonFiniteResidual => EXIT_SOLVER,
        Error::NoSwitchDetected(_) => EXIT_DETECTION,
        Error::DegeneratePoints | Error::InsufficientPeriod => EXIT_FIT,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        usage(e.to_string())
    }
}

fn parse_vec2(s: &str) -> std::result::Result<Vec2, Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => Ok(Vec2::new(a, b)),
            _ => Err(usage(format!("cannot parse {s:?} as two numbers"))),
        },
        _ => Err(usage(format!("expected \"a,b\", got {s:?}"))),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::result::Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> std::result::Result<Psas, Failure> {
    Psas::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Design(a) => cmd_design(&a, stdout, stderr),
        Command::Verify(a) => cmd_verify(&a, stdout, stderr),
        Command::Identify(a) => cmd_identify(&a, stdout),
        Command::Gendata(a) => cmd_gendata(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let psas = load_model(&a.model)?;
    let (report, _) = check_theorem1_auto(&psas, &CheckOptions::default());
    print_json(out, &report)?;
    Ok(if report.overall { EXIT_OK } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct SimulateSummary {
    events: usize,
    samples: usize,
    cycle: Option<CycleEstimate>,
    omega: Option<f64>,
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    if !(a.t_end > 0.0) {
        return Err(usage(format!("--t-end must be positive, got {}", a.t_end)));
    }
    if !(a.dt > 0.0) {
        return Err(usage(format!("--dt must be positive, got {}", a.dt)));
    }
    let x0 = parse_vec2(&a.x0)?;
    let psas = load_model(&a.model)?;
    let traj = simulate_run(&psas, x0, a.t_end, a.dt)?;
    write_trajectory_csv(&traj, create(&a.out)?)?;
    if let Some(p) = &a.events {
        write_events_csv(&traj.events, create(p)?)?;
    }
    let cycle = detect_limit_cycle(&traj, 1e-6).ok();
    let summary = SimulateSummary {
        events: traj.events.len(),
        samples: traj.samples.len(),
        cycle,
        omega: cycle.and_then(|c| c.frequency().ok()),
    };
    print_json(out, &summary)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DesignSummary<'a> {
    converged: bool,
    residual_norm: f64,
    iterations: usize,
    start: usize,
    phase_consistent: bool,
    conditions_hold: bool,
    failed_conditions: Vec<&'a str>,
    model: PathBuf,
}

fn failed_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.failed.json"))
}

fn cmd_design(a: &DesignArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let spec = CycleSpec::load(&a.spec).map_err(|e| usage(format!("{}: {e}", a.spec.display())))?;
    let init = match &a.init {
        Some(p) => Some(load_model(p)?.to_params()),
        None => None,
    };
    let opts = SolveOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolveOptions::default()
    };
    match solve_design(&spec, init, &opts) {
        Ok(res) => {
            write_json(&a.out, &res.psas)?;
            let failures = res.report.failures();
            print_json(
                out,
                &DesignSummary {
                    converged: true,
                    residual_norm: res.residual_norm,
                    iterations: res.iterations,
                    start: res.start,
                    phase_consistent: res.phase_consistent,
                    conditions_hold: res.report.overall,
                    failed_conditions: failures,
                    model: a.out.clone(),
                },
            )?;
            Ok(EXIT_OK)
        }
        Err(Error::NoConvergence { best }) => {
            let path = failed_path(&a.out);
            write_json(&path, &best.psas)?;
            print_json(
                out,
                &DesignSummary {
                    converged: false,
                    residual_norm: best.residual_norm,
                    iterations: best.iterations,
                    start: best.start,
                    phase_consistent: best.phase_consistent,
                    conditions_hold: best.report.overall,
                    failed_conditions: best.report.failures(),
                    model: path.clone(),
                },
            )?;
            let _ = writeln!(
                err,
                "error: design did not converge (best residual {:e}); best candidate written to {}",
                best.residual_norm,
                path.display()
            );
            Ok(EXIT_SOLVER)
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_grid(s: &str) -> std::result::Result<Vec<Vec2>, Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || usage(format!("grid must be \"x1min,x1max,x2min,x2max,n\", got {s:?}"));
    if parts.len() != 5 {
        return Err(bad());
    }
    let mut v = [0.0; 4];
    for k in 0..4 {
        v[k] = parts[k].parse::<f64>().map_err(|_| bad())?;
        if !v[k].is_finite() {
            return Err(bad());
        }
    }
    let n: usize = parts[4].parse().map_err(|_| bad())?;
    if n == 0 || v[0] > v[1] || v[2] > v[3] {
        return Err(bad());
    }
    Ok(grid((v[0], v[1]), (v[2], v[3]), n))
}

#[derive(Serialize)]
struct NoCycle {
    verdict: Verdict,
    reason: String,
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let psas = load_model(&a.model)?;
    let explicit = a.grid.as_deref().map(parse_grid).transpose()?;
    let cycle = match locate_cycle(&psas) {
        Ok(c) if c.converged => c,
        Ok(_) | Err(_) => {
            let reason = match locate_cycle(&psas) {
                Ok(_) => "cycle search did not converge".to_string(),
                Err(e) => e.to_string(),
            };
            let _ = writeln!(err, "no limit cycle found: {reason}");
            print_json(
                out,
                &NoCycle {
                    verdict: Verdict::Inconclusive,
                    reason,
                },
            )?;
            return Ok(EXIT_INCONCLUSIVE);
        }
    };
    let points = match explicit {
        Some(g) => g,
        None => {
            let lo = Vec2::new(cycle.x_s0.x1.min(cycle.x_s1.x1), cycle.x_s0.x2.min(cycle.x_s1.x2));
            let hi = Vec2::new(cycle.x_s0.x1.max(cycle.x_s1.x1), cycle.x_s0.x2.max(cycle.x_s1.x2));
            let pad = (hi - lo).norm();
            grid((lo.x1 - pad, hi.x1 + pad), (lo.x2 - pad, hi.x2 + pad), 5)
        }
    };
    let cert = check_global_stability(&psas, &cycle, &points);
    print_json(out, &cert)?;
    Ok(match cert.verdict {
        Verdict::Certified => EXIT_OK,
        Verdict::Refuted => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn cmd_identify(a: &IdentifyArgs, out: &mut dyn Write) -> CmdResult {
    let data = load_timeseries(&a.data).map_err(|e| usage(format!("{}: {e}", a.data.display())))?;
    let opts = IdentifyOptions {
        detect: DetectOptions {
            smooth_window: a.smooth,
            curvature_threshold: a.curvature,
        },
        extremum: match a.extremum {
            ExtremumArg::Auto => ExtremumKind::Auto,
            ExtremumArg::Max => ExtremumKind::Max,
            ExtremumArg::Min => ExtremumKind::Min,
        },
        ..IdentifyOptions::default()
    };
    let report = identify_psas(&data, &opts)?;
    write_json(&a.out, &report.design.psas)?;
    write_json(&a.report, &report)?;
    #[derive(Serialize)]
    struct Summary {
        fitted_line: crate::model::SwitchingLine,
        switches: usize,
        cycle_deviation: f64,
        stability: Verdict,
    }
    print_json(
        out,
        &Summary {
            fitted_line: report.fitted_line,
            switches: report.switch_points.len(),
            cycle_deviation: report.cycle_deviation,
            stability: report.stability,
        },
    )?;
    Ok(EXIT_OK)
}

fn cmd_gendata(a: &GendataArgs) -> CmdResult {
    if !(a.dt > 0.0) {
        return Err(usage(format!("--dt must be positive, got {}", a.dt)));
    }
    let mut params = RelaxOscParams::load(&a.params).map_err(|e| usage(format!("{}: {e}", a.params.display())))?;
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    let y0 = match &a.y0 {
        Some(s) => parse_vec2(s)?,
        None => Y_INIT,
    };
    let data = generate(&params, y0, a.t_end, a.dt).map_err(|e| usage(e.to_string()))?;
    data.write_csv(create(&a.out)?)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_path_keeps_directory() {
        assert_eq!(
            failed_path(Path::new("/tmp/x/model.json")),
            PathBuf::from("/tmp/x/model.failed.json")
        );
    }

    #[test]
    fn vec2_parsing() {
        assert_eq!(parse_vec2("-1.5,-4.5").ok(), Some(Vec2::new(-1.5, -4.5)));
        assert!(parse_vec2("1").is_err());
        assert!(parse_vec2("a,b").is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("-3,3,-7,-1,5").ok().map(|g| g.len()), Some(25));
        assert!(parse_grid("-3,3,-7,-1").is_err());
        assert!(parse_grid("3,-3,-7,-1,5").is_err());
    }

    #[test]
    fn stage_exit_codes() {
        let e = Error::NoSwitchDetected("x".into()).in_stage("detect");
        assert_eq!(exit_code(&e), EXIT_DETECTION);
        assert_eq!(exit_code(&Error::DegeneratePoints.in_stage("fit")), EXIT_FIT);
        assert_eq!(exit_code(&Error::NonFiniteResidual.in_stage("design")), EXIT_SOLVER);
        assert_eq!(
            exit_code(&Error::ChatteringDetected { t: 0.0, events: 2 }),
            EXIT_CHATTERING
        );
        let e = Error::ChatteringDetected { t: 0.0, events: 2 }.in_stage("simulate");
        assert_eq!(exit_code(&e), EXIT_CHATTERING);
    }
}

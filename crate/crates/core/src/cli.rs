//! Command-line driver. Exit codes: 0 success, 1 usage or I/O, 2 invalid
//! scenario, 3 audit violations, 4 solver failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::diagnostics::{audit_trajectory, brute_force_minimizer, gravity_equilibrium_oracle, ColumnSpec};
use crate::output::{fmt_f64, series_text, violations_text, write_snapshot};
use crate::scenario::{parse_scenario, Scenario, ScenarioError, Setup};
use crate::solver::{Simulator, SolverState, Trajectory};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_AUDIT: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "twophase", version, about = "Two-phase porous media flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides the scenario's).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// End time in seconds (overrides the scenario's).
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    /// Seed for randomized initial conditions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for cell-local evaluation; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate, write the time series and snapshots.
    Run { scenario: PathBuf },
    /// Parse and check a scenario.
    Validate { scenario: PathBuf },
    /// Simulate and audit conservation, energy decay and bounds.
    Audit { scenario: PathBuf },
    /// Equilibrium and brute-force minimizer profiles for the scenario's oil volume.
    Oracle { scenario: PathBuf },
}

struct Failure(i32, String);

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure(EXIT_INVALID, e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure(EXIT_USAGE, format!("{}: {e}", path.display()))
}

pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn load(path: &Path, t_end: Option<f64>) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut scenario = parse_scenario(&text)?;
    if let Some(t) = t_end {
        scenario.t_end = t;
        let problems = scenario.validate();
        if !problems.is_empty() {
            return Err(ScenarioError::Validation(problems).into());
        }
    }
    Ok(scenario)
}

fn out_dir(cli: &Cli, scenario: &Scenario) -> Result<PathBuf, Failure> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&scenario.output.dir));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate { scenario } => {
            let s = load(scenario, cli.t_end)?;
            s.build(cli.seed)?;
            println!("{}: ok", s.name);
            Ok(())
        }
        Command::Run { scenario } | Command::Audit { scenario } => {
            let s = load(scenario, cli.t_end)?;
            let mut setup = s.build(cli.seed)?;
            setup.problem = setup.problem.with_threads(cli.threads);
            let dir = out_dir(cli, &s)?;
            let traj = simulate(&s, &setup, &dir)?;
            let report = audit_trajectory(&setup.problem, &traj);
            let series = dir.join("series.csv");
            fs::write(&series, series_text(&report)).map_err(io_err(&series))?;
            let last = report.records.last().expect("initial record");
            println!(
                "{}: t = {} E = {} m_o = {} m_w = {} steps = {}",
                s.name,
                fmt_f64(last.t),
                fmt_f64(last.energy),
                fmt_f64(last.m_o),
                fmt_f64(last.m_w),
                traj.steps.len()
            );
            if matches!(cli.command, Command::Audit { .. }) {
                let path = dir.join("violations.csv");
                fs::write(&path, violations_text(&report)).map_err(io_err(&path))?;
                if !report.passed() {
                    for v in &report.violations {
                        println!("violation at step {}: {:?} ({})", v.step, v.kind, fmt_f64(v.magnitude));
                    }
                    return Err(Failure(EXIT_AUDIT, format!("{} audit violations", report.violations.len())));
                }
                println!("audit passed");
            }
            Ok(())
        }
        Command::Oracle { scenario } => {
            let s = load(scenario, cli.t_end)?;
            let setup = s.build(cli.seed)?;
            let dir = out_dir(cli, &s)?;
            oracle(&setup, &dir)
        }
    }
}

fn snapshot_all(s: &Scenario, setup: &Setup, dir: &Path, state: &SolverState, step: usize) -> Result<(), Failure> {
    for &fmt in &s.output.formats {
        let ext = match fmt {
            crate::scenario::SnapshotFormat::Csv => "csv",
            crate::scenario::SnapshotFormat::Vtk => "vtk",
        };
        let path = dir.join(format!("snapshot_{step:06}.{ext}"));
        write_snapshot(state, &setup.problem, &path, fmt).map_err(io_err(&path))?;
    }
    Ok(())
}

fn simulate(s: &Scenario, setup: &Setup, dir: &Path) -> Result<Trajectory, Failure> {
    snapshot_all(s, setup, dir, &setup.initial, 0)?;
    let mut sim = Simulator::new(&setup.problem, s.controls, setup.initial.clone());
    let mut step = 0;
    let mut written = Ok(());
    let every = s.output.snapshot_every;
    let traj = sim
        .advance(s.t_end, &mut |state, _| {
            step += 1;
            if every > 0 && step % every == 0 && written.is_ok() {
                written = snapshot_all(s, setup, dir, state, step);
            }
        })
        .map_err(|e| Failure(EXIT_SOLVER, e.to_string()))?;
    written?;
    let n = traj.steps.len();
    if every == 0 || n % every != 0 {
        snapshot_all(s, setup, dir, traj.last_state(), n)?;
    }
    Ok(traj)
}

fn oracle(setup: &Setup, dir: &Path) -> Result<(), Failure> {
    let p = &setup.problem;
    let spec = ColumnSpec::new(p.clone(), setup.m_o);
    let eq = gravity_equilibrium_oracle(&spec).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
    let brute = if p.n_cells() <= 6 {
        Some(brute_force_minimizer(&spec).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?)
    } else {
        None
    };
    let mut out = String::from(if brute.is_some() { "k,z,s_o_equilibrium,s_o_brute_force\n" } else { "k,z,s_o_equilibrium\n" });
    for k in 0..p.n_cells() {
        write!(out, "{},{},{}", k, fmt_f64(p.grid.depth[k]), fmt_f64(eq.s_o[k])).unwrap();
        if let Some(b) = &brute {
            write!(out, ",{}", fmt_f64(b.s_o[k])).unwrap();
        }
        out.push('\n');
    }
    let path = dir.join("oracle.csv");
    fs::write(&path, out).map_err(io_err(&path))?;
    println!("C = {} m_o = {}", fmt_f64(eq.c), fmt_f64(setup.m_o));
    if let Some(b) = &brute {
        let dev = (0..p.n_cells()).map(|k| (b.s_o[k] - eq.s_o[k]).abs()).fold(0.0, f64::max);
        println!("max |brute force - equilibrium| = {}", fmt_f64(dev));
    }
    Ok(())
}

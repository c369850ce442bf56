use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use hypflow::flow::{epsilon_continuation, run_flow, solve_stationary, StationaryError, Trajectory};
use hypflow::monitors::{comparison_check, identity_study, verdict_table, IdentityStudy, MonitorTolerances};
use hypflow::symfunc::{check_structure, ConeSampler, CurvatureFamily, CurvatureFunctionSpec, StructureTolerances};
use hypflow::Verdict;
use serde::Serialize;

use crate::output::{self, ContinuationSummary, LevelSummary, RunSummary};
use crate::scenario::{parse_scenario, Scenario};
use crate::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "hypflow", version, about = "Curvature flow of graphs in hyperbolic space toward constant-curvature caps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the flow to t_max or steady state and write diagnostics.
    Flow { scenario: PathBuf },
    /// Run until steady; non-convergence is an error.
    Stationary { scenario: PathBuf },
    /// Solve for eps_k = eps 2^-k, k = 0..=levels.
    Continuation { scenario: PathBuf },
    /// Check the structure conditions of a curvature function (JSON to stdout).
    CheckF {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convergence orders of the evolution identities along a short flow.
    Identities {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        #[arg(long, default_value_t = 0.04)]
        dt0: f64,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 1e-8)]
        floor_dt: f64,
    },
    /// Flow two scenarios and check ordering and common limit.
    Compare { scenario_a: PathBuf, scenario_b: PathBuf },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FamilyArg {
    Mean,
    Gauss,
    Quotient,
}

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit::ERROR
        }
    }
}

fn verdict_code(failed: bool) -> i32 {
    if failed {
        exit::FAIL
    } else {
        exit::OK
    }
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Flow { scenario } => flow(&parse_scenario(&scenario)?),
        Command::Stationary { scenario } => stationary(&parse_scenario(&scenario)?),
        Command::Continuation { scenario } => continuation(&parse_scenario(&scenario)?),
        Command::CheckF { family, n, l, samples, seed } => check_f(family, n, l, samples, seed),
        Command::Identities { scenario, warmup, dt0, levels, floor_dt } => {
            identities(&parse_scenario(&scenario)?, warmup, dt0, levels, floor_dt)
        }
        Command::Compare { scenario_a, scenario_b } => compare(&parse_scenario(&scenario_a)?, &parse_scenario(&scenario_b)?),
    }
}

fn print_summary(summary: &RunSummary, files: &[PathBuf]) {
    println!(
        "{}: {} after {} steps, t = {:.6}, residual {:.3e}, {:.2}s",
        summary.command, summary.termination, summary.steps, summary.t_final, summary.final_residual, summary.wall_clock_seconds
    );
    for row in &summary.verdicts {
        println!("  {:<6} {:<12} {:>12.5e} {:>12.5e}  {}", row.tag, format!("{:?}", row.verdict).to_uppercase(), row.lhs, row.rhs, row.note);
    }
    println!("  c_fit {:.6}, lambda_hat {:.6}", summary.c_fit, summary.lambda_hat);
    for f in files {
        println!("  wrote {}", f.display());
    }
}

fn report(command: &str, s: &Scenario, traj: &Trajectory<f64>, start: Instant) -> Result<RunSummary, CliError> {
    let table = verdict_table(traj, &s.config, &MonitorTolerances::default());
    let summary = RunSummary::new(command, traj, &s.config, table, start.elapsed().as_secs_f64(), &s.echo);
    let files = output::write_outputs(traj, &s.config, &summary, &s.output)?;
    print_summary(&summary, &files);
    Ok(summary)
}

fn flow(s: &Scenario) -> Result<i32, CliError> {
    let start = Instant::now();
    let traj = run_flow(&s.config)?;
    let summary = report("flow", s, &traj, start)?;
    if let Some(err) = &traj.failure {
        eprintln!("flow stopped: {err}");
    }
    Ok(verdict_code(summary.any_fail()))
}

fn stationary(s: &Scenario) -> Result<i32, CliError> {
    let start = Instant::now();
    match solve_stationary(&s.config) {
        Ok(sol) => {
            let summary = report("stationary", s, &sol.trajectory, start)?;
            println!("  sup |u - cap| = {:.6e}", summary.stationary_error);
            Ok(verdict_code(summary.any_fail()))
        }
        Err(StationaryError::Setup(e)) => Err(e.into()),
        Err(StationaryError::NotSteady(traj)) => {
            report("stationary", s, &traj, start)?;
            Err(CliError::Run(format!("no steady state reached: {}", traj.termination)))
        }
    }
}

fn continuation(s: &Scenario) -> Result<i32, CliError> {
    let start = Instant::now();
    let res = match epsilon_continuation(&s.config, s.levels) {
        Ok(res) => res,
        Err(StationaryError::Setup(e)) => return Err(e.into()),
        Err(StationaryError::NotSteady(traj)) => {
            return Err(CliError::Run(format!(
                "continuation level with eps = {} did not reach a steady state: {}",
                traj.epsilon, traj.termination
            )))
        }
    };
    s.output.ensure_directory()?;
    let mut files = Vec::new();
    let mut levels = Vec::new();
    for level in &res.levels {
        let cfg = s.config.with_epsilon(level.epsilon)?;
        let traj = &level.solution.trajectory;
        let final_u = s.output.path(&format!("final_u_k{}.csv", level.k));
        let diag = s.output.path(&format!("diag_k{}.csv", level.k));
        output::write_final_state(&final_u, &level.solution.state.u, &cfg)?;
        output::write_diagnostics(&diag, &traj.records)?;
        files.extend([diag, final_u]);
        levels.push(LevelSummary {
            k: level.k,
            epsilon: level.epsilon,
            steps: traj.steps,
            t_final: traj.final_state.t,
            final_residual: traj.final_residual,
            boundary_w: level.boundary_w,
        });
    }
    let finest = res.levels.last().expect("at least two levels");
    let cfg = s.config.with_epsilon(finest.epsilon)?;
    let traj = &finest.solution.trajectory;
    let table = verdict_table(traj, &cfg, &MonitorTolerances::default());
    let mut summary = RunSummary::new("continuation", traj, &cfg, table, start.elapsed().as_secs_f64(), &s.echo);
    summary.continuation =
        Some(ContinuationSummary { levels, cauchy: res.cauchy.clone(), cauchy_over_eps: res.cauchy_over_eps.clone() });
    let json = s.output.path("summary.json");
    output::write_json(&json, &summary)?;
    files.push(json);
    print_summary(&summary, &files);
    for l in &res.levels {
        println!("  k = {}: eps = {:.4e}, boundary w = {:.6}", l.k, l.epsilon, l.boundary_w);
    }
    println!("  d_k = {:?}, d_k / eps_k = {:?}", res.cauchy, res.cauchy_over_eps);
    Ok(verdict_code(summary.any_fail()))
}

fn check_f(family: FamilyArg, n: usize, l: Option<usize>, samples: usize, seed: u64) -> Result<i32, CliError> {
    let family = match family {
        FamilyArg::Mean => CurvatureFamily::MeanH1,
        FamilyArg::Gauss => CurvatureFamily::GaussRoot,
        FamilyArg::Quotient => CurvatureFamily::HessianQuotient,
    };
    if l.is_some() && family != CurvatureFamily::HessianQuotient {
        return Err(CliError::Run("--l applies only to --family quotient".into()));
    }
    let spec = CurvatureFunctionSpec::new(family, n, l.unwrap_or(n.saturating_sub(1)))?;
    let report = check_structure(&spec, &ConeSampler::new(samples, seed), &StructureTolerances::default())?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(verdict_code(report.any_fail()))
}

#[derive(Serialize)]
struct IdentityReport {
    verdict: Verdict,
    min_evo10_order: f64,
    floor_bound: f64,
    study: IdentityStudy,
}

fn identities(s: &Scenario, warmup: usize, dt0: f64, levels: usize, floor_dt: f64) -> Result<i32, CliError> {
    let study = identity_study(&s.config, warmup, dt0, levels, floor_dt)?;
    let floor_bound = 10.0 * study.h * study.h;
    let min_order = study.min_evo10_order();
    let verdict = Verdict::from_bool(min_order >= 0.9 && study.evo10_floor <= floor_bound);
    let report = IdentityReport { verdict, min_evo10_order: min_order, floor_bound, study };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(verdict_code(verdict.is_fail()))
}

fn compare(a: &Scenario, b: &Scenario) -> Result<i32, CliError> {
    if a.config.domain != b.config.domain {
        return Err(CliError::Run("scenarios must share the domain and grid".into()));
    }
    let ta = run_flow(&a.config)?;
    let tb = run_flow(&b.config)?;
    let rep = comparison_check(&ta, &tb, &a.config.domain, &MonitorTolerances::default())?;
    println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
    Ok(verdict_code(rep.verdict.is_fail()))
}

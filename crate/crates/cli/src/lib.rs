//! Command-line front end: problem loading, run configuration, the
//! solve/simulate/verify pipelines and their artifacts.

pub mod defaults;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use diffctl_core::artifacts::{read_value_csv, write_json, write_paths_csv, write_value_csv};
use diffctl_core::builtin::{builtin, GridSpec};
use diffctl_core::solver::{hjb_residual_field, policy_improvement};
use diffctl_core::verify::SummaryRow;
use diffctl_core::{
    estimate_cost, run_pipeline, simulate_path, ControlGrid, ControlLaw, ControlProblem, CostEstimate,
    FeedbackPolicy, PipelineConfig, PipelineOutput, ReportEntry, SimConfig, SolveError, SolveOptions, Solution,
    SpatialGrid, Tolerances, ValueField, VerificationReport,
};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const NOT_CONVERGED: i32 = 2;
    pub const VERIFY_FAILED: i32 = 3;
}

#[derive(Parser, Debug)]
#[command(name = "diffctl", version, about = "Discounted stochastic control: HJB solve, simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the HJB equation and write the value field.
    Solve(CommonArgs),
    /// Solve, then estimate the closed-loop cost of the argmin feedback.
    Simulate(CommonArgs),
    /// Solve, then run the full verification battery.
    Verify(CommonArgs),
    /// Solve and verify the built-in advertising model.
    DemoAdvertising(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Problem JSON file, or a builtin name (constant-unit-cost, ou-quadratic, advertising).
    #[arg(long)]
    pub problem: Option<String>,
    /// Spatial grid as LO:HI:N.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
    /// Control grid size K.
    #[arg(long)]
    pub controls: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    /// Truncation horizon T; defaults to the tail rule.
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Exit radius R.
    #[arg(long, allow_hyphen_values = true)]
    pub radius: Option<f64>,
    /// Howard iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start points, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Value CSV from an earlier `solve` (simulate only); solved inline otherwise.
    #[arg(long)]
    pub value: Option<PathBuf>,
    /// Write the first N paths of the first start point to paths.csv (simulate only).
    #[arg(long, default_value_t = 0)]
    pub write_paths: usize,
    /// Shift the solved value by this multiple of sup|l|/rho before verifying (negative control).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub corrupt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected LO:HI:N, got `{s}`"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| format!("grid: bad LO `{}`", parts[0]))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| format!("grid: bad HI `{}`", parts[1]))?;
    let nodes: usize = parts[2].trim().parse().map_err(|_| format!("grid: bad N `{}`", parts[2]))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("grid: need finite LO < HI, got {lo}:{hi}"));
    }
    if nodes < 3 {
        return Err(format!("grid: need N >= 3, got {nodes}"));
    }
    Ok(GridSpec { x_lo: lo, x_hi: hi, nodes })
}

/// Fully resolved settings of one run. Embedded in every JSON artifact and
/// written to `run_config.json`; the output directory is left out so that
/// runs differing only in where they write produce identical artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    /// Problem file path or builtin name.
    pub problem: String,
    pub grid: GridSpec,
    pub controls: usize,
    pub solve: SolveOptions,
    pub sim: SimConfig,
    pub x0s: Vec<f64>,
    pub corrupt: f64,
    pub write_paths: usize,
    #[serde(skip)]
    pub out: PathBuf,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    fn input(error: anyhow::Error) -> Self {
        CliError { code: exit::INPUT, error }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError::input(error)
    }
}

/// Loads a problem from a JSON file, or a builtin when no such file exists.
pub fn load_problem(spec: &str) -> anyhow::Result<(ControlProblem, Option<GridSpec>, Option<usize>)> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("problem: cannot read `{spec}`"))?;
        let problem = ControlProblem::from_json(&text).map_err(|e| anyhow!("problem: {spec}: {e}"))?;
        return Ok((problem, None, None));
    }
    match builtin(spec) {
        Some(b) => Ok((b.problem, Some(b.grid), Some(b.controls))),
        None => bail!("problem: `{spec}` is neither a readable file nor a builtin name"),
    }
}

impl RunConfig {
    /// Applies defaults and validates every numeric field before any
    /// computation starts.
    pub fn resolve(subcommand: &str, args: &CommonArgs) -> anyhow::Result<(RunConfig, ControlProblem)> {
        let problem_spec = match (subcommand, &args.problem) {
            ("demo-advertising", None) => "advertising".to_string(),
            (_, Some(p)) => p.clone(),
            (_, None) => bail!("problem: --problem is required"),
        };
        let (problem, own_grid, own_k) = load_problem(&problem_spec)?;
        let grid = args.grid.or(own_grid).unwrap_or(defaults::FILE_GRID);
        SpatialGrid::new(grid.x_lo, grid.x_hi, grid.nodes).map_err(|e| anyhow!("grid: {e}"))?;
        let controls = args.controls.or(own_k).unwrap_or(defaults::CONTROLS);
        ControlGrid::uniform(&problem.control_set, controls).map_err(|e| anyhow!("controls: {e}"))?;
        let max_iter = args.max_iter.unwrap_or(SolveOptions::default().max_iter);
        if max_iter == 0 {
            bail!("max-iter: must be at least 1");
        }
        let dt = args.dt.unwrap_or(defaults::DT);
        if !(dt.is_finite() && dt > 0.0) {
            bail!("dt: must be positive, got {dt}");
        }
        let horizon = match args.horizon {
            Some(t) => t,
            None => SimConfig::aligned_horizon(&problem, defaults::TAIL_TOL, dt).unwrap_or(defaults::UNBOUNDED_HORIZON),
        };
        let sim = SimConfig {
            horizon,
            dt,
            paths: args.paths.unwrap_or(defaults::PATHS),
            radius: args.radius.unwrap_or(defaults::RADIUS),
            seed: args.seed.unwrap_or(defaults::SEED),
            tail_tol: defaults::TAIL_TOL,
        };
        if subcommand != "solve" {
            sim.validate_for(&problem).map_err(|e| anyhow!("{e}"))?;
        }
        let x0s = match &args.x0 {
            Some(v) if !v.is_empty() => v.clone(),
            Some(_) => bail!("x0: need at least one start point"),
            None if problem_spec == "advertising" || problem_spec == "demo-advertising" => {
                defaults::ADVERTISING_X0S.to_vec()
            }
            None => defaults::X0S.to_vec(),
        };
        if let Some(x) = x0s.iter().find(|x| !x.is_finite()) {
            bail!("x0: start point {x} is not finite");
        }
        if !args.corrupt.is_finite() {
            bail!("corrupt: must be finite");
        }
        let config = RunConfig {
            subcommand: subcommand.to_string(),
            problem: problem_spec,
            grid,
            controls,
            solve: SolveOptions { max_iter, ..SolveOptions::default() },
            sim,
            x0s,
            corrupt: args.corrupt,
            write_paths: args.write_paths,
            out: args.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        };
        Ok((config, problem))
    }

    pub fn pipeline(&self, problem: &ControlProblem) -> PipelineConfig {
        let mut tolerances = Tolerances::for_problem(problem);
        tolerances.lower_bound = 0.0;
        PipelineConfig {
            grid: self.grid,
            controls: self.controls,
            solve: self.solve.clone(),
            sim: self.sim.clone(),
            x0s: self.x0s.clone(),
            tolerances,
            challenger_constants: defaults::CHALLENGER_CONSTANTS,
            challenger_random: defaults::CHALLENGER_RANDOM,
            corrupt_shift: self.corrupt * problem.value_bound().unwrap_or(1.0),
            dynkin: None,
            moment_m: Some(defaults::MOMENT_M),
            necessary_paths: defaults::NECESSARY_PATHS,
            simulate_transversality: false,
            negative_control: None,
        }
    }
}

/// A JSON artifact: the payload's fields plus the run configuration.
fn with_config<T: Serialize>(config: &RunConfig, payload: &T) -> anyhow::Result<serde_json::Value> {
    let mut value = serde_json::to_value(payload)?;
    let config = serde_json::to_value(config)?;
    match &mut value {
        serde_json::Value::Object(map) => {
            map.insert("run_config".to_string(), config);
            Ok(value)
        }
        other => Ok(serde_json::json!({ "run_config": config, "data": other })),
    }
}

fn write_json_artifact<T: Serialize>(dir: &Path, name: &str, config: &RunConfig, payload: &T) -> anyhow::Result<()> {
    let file = fs::File::create(dir.join(name)).with_context(|| format!("out: cannot create {name}"))?;
    write_json(std::io::BufWriter::new(file), &with_config(config, payload)?)?;
    Ok(())
}

fn create_out(config: &RunConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&config.out).with_context(|| format!("out: cannot create `{}`", config.out.display()))?;
    let file = fs::File::create(config.out.join("run_config.json"))?;
    write_json(std::io::BufWriter::new(file), config)?;
    Ok(&config.out)
}

fn write_value(dir: &Path, problem: &ControlProblem, value: &ValueField, policy: &FeedbackPolicy) -> anyhow::Result<()> {
    let residual = hjb_residual_field(problem, value, policy.controls())?;
    let file = fs::File::create(dir.join("value.csv"))?;
    write_value_csv(std::io::BufWriter::new(file), value, policy, &residual)?;
    Ok(())
}

fn solve_inline(config: &RunConfig, problem: &ControlProblem) -> Result<Solution, SolveError> {
    let grid = SpatialGrid::new(config.grid.x_lo, config.grid.x_hi, config.grid.nodes)?;
    let controls = ControlGrid::uniform(&problem.control_set, config.controls)?;
    diffctl_core::solve_hjb(problem, &grid, &controls, &config.solve)
}

/// `solve`: value CSV and solve report; exit 2 when Howard iteration does not
/// converge (the last iterate is still written).
pub fn cmd_solve(config: &RunConfig, problem: &ControlProblem) -> Result<i32, CliError> {
    let dir = create_out(config)?;
    let (solution, code) = match solve_inline(config, problem) {
        Ok(s) => (s, exit::OK),
        Err(SolveError::NotConverged { last, .. }) => (*last, exit::NOT_CONVERGED),
        Err(e) => return Err(CliError::input(anyhow!("{e}"))),
    };
    write_value(dir, problem, &solution.value, &solution.policy)?;
    write_json_artifact(dir, "solve_report.json", config, &solution.report)?;
    println!(
        "{} after {} iterations, residual {:.3e}",
        if solution.report.converged { "converged" } else { "not converged" },
        solution.report.iterations,
        solution.report.residual
    );
    Ok(code)
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    x0: f64,
    v: f64,
    #[serde(flatten)]
    estimate: &'a CostEstimate,
}

#[derive(Serialize)]
struct Estimates<'a> {
    estimates: Vec<EstimateRecord<'a>>,
}

/// `simulate`: closed-loop cost estimates of the argmin feedback at each start
/// point, optionally with stored paths.
pub fn cmd_simulate(config: &RunConfig, problem: &ControlProblem, value_csv: Option<&Path>) -> Result<i32, CliError> {
    let dir = create_out(config)?;
    let (value, policy) = match value_csv {
        Some(path) => {
            let file = fs::File::open(path).with_context(|| format!("value: cannot open `{}`", path.display()))?;
            let value = read_value_csv(file).map_err(|e| anyhow!("value: {e}"))?;
            let controls = ControlGrid::uniform(&problem.control_set, config.controls).map_err(|e| anyhow!("{e}"))?;
            let policy = policy_improvement(problem, value.grid(), &value, &controls).map_err(|e| anyhow!("value: {e}"))?;
            (value, policy)
        }
        None => match solve_inline(config, problem) {
            Ok(s) => (s.value, s.policy),
            Err(SolveError::NotConverged { .. }) => {
                return Err(CliError { code: exit::NOT_CONVERGED, error: anyhow!("policy iteration did not converge") })
            }
            Err(e) => return Err(CliError::input(anyhow!("{e}"))),
        },
    };
    let law = ControlLaw::feedback(policy);
    let estimates: Vec<(f64, CostEstimate)> = config
        .x0s
        .iter()
        .map(|&x0| estimate_cost(problem, &law, x0, &config.sim).map(|e| (x0, e)))
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!("{e}"))?;
    let records = estimates
        .iter()
        .map(|(x0, e)| EstimateRecord { x0: *x0, v: value.interpolate(*x0), estimate: e })
        .collect();
    write_json_artifact(dir, "estimates.json", config, &Estimates { estimates: records })?;
    if config.write_paths > 0 {
        let paths = (0..config.write_paths as u64)
            .map(|p| simulate_path(problem, &law, config.x0s[0], &config.sim, p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| anyhow!("{e}"))?;
        let file = fs::File::create(dir.join("paths.csv")).context("out: cannot create paths.csv")?;
        write_paths_csv(std::io::BufWriter::new(file), problem, &paths).map_err(anyhow::Error::from)?;
    }
    for (x0, e) in &estimates {
        println!("x0={x0:<6} v={:<10.6} J={:<10.6} se={:.2e}", value.interpolate(*x0), e.mean, e.se);
    }
    Ok(exit::OK)
}

/// Re-solves on the box widened by `factor` about its centre at the same
/// spacing and compares the values at the start points.
pub fn box_check(config: &RunConfig, problem: &ControlProblem, value: &ValueField, factor: f64) -> anyhow::Result<ReportEntry> {
    let g = config.grid;
    let (mid, half) = (0.5 * (g.x_lo + g.x_hi), 0.5 * (g.x_hi - g.x_lo) * factor);
    let cells = ((g.nodes - 1) as f64 * factor).round() as usize;
    let wide = RunConfig {
        grid: GridSpec { x_lo: mid - half, x_hi: mid + half, nodes: cells + 1 },
        ..config.clone()
    };
    let wide_solution = solve_inline(&wide, problem).map_err(|e| anyhow!("{e}"))?;
    let diff = config
        .x0s
        .iter()
        .map(|&x| (wide_solution.value.interpolate(x) - value.interpolate(x)).abs())
        .fold(0.0, f64::max);
    let tolerance = Tolerances::for_problem(problem).optimality;
    Ok(ReportEntry {
        id: "box-insensitivity".to_string(),
        x0: None,
        measured: diff,
        tolerance,
        passed: diff <= tolerance,
        mandatory: true,
        provenance: "truncation of the state space with reflecting ends does not move v at the start points".to_string(),
        detail: format!("box [{}, {}] vs [{}, {}]", g.x_lo, g.x_hi, wide.grid.x_lo, wide.grid.x_hi),
    })
}

/// Everything a verify run produces.
pub struct VerifyRun {
    pub output: PipelineOutput,
    pub report: VerificationReport,
}

/// Runs the pipeline plus the box check and writes all artifacts to
/// `config.out`.
pub fn run_verify(config: &RunConfig, problem: &ControlProblem) -> Result<VerifyRun, CliError> {
    run_verify_with(config, problem, &config.pipeline(problem))
}

/// [`run_verify`] with an explicit pipeline configuration.
pub fn run_verify_with(config: &RunConfig, problem: &ControlProblem, pipeline: &PipelineConfig) -> Result<VerifyRun, CliError> {
    let dir = create_out(config)?;
    let output = match run_pipeline(problem, pipeline) {
        Ok(o) => o,
        Err(diffctl_core::VerifyError::Solve(SolveError::NotConverged { .. })) => {
            return Err(CliError { code: exit::NOT_CONVERGED, error: anyhow!("policy iteration did not converge") })
        }
        Err(e) => return Err(CliError::input(anyhow!("{e}"))),
    };
    let mut entries = output.report.entries.clone();
    entries.push(box_check(config, problem, &output.solution.value, defaults::BOX_WIDENING)?);
    let report = VerificationReport::from_entries(entries);

    write_value(dir, problem, &output.verified_value, &output.solution.policy)?;
    write_json_artifact(dir, "solve_report.json", config, &output.solution.report)?;
    let records = output
        .estimates
        .iter()
        .map(|(x0, e)| EstimateRecord { x0: *x0, v: output.verified_value.interpolate(*x0), estimate: e })
        .collect();
    write_json_artifact(dir, "estimates.json", config, &Estimates { estimates: records })?;
    write_json_artifact(dir, "verification_report.json", config, &report)?;
    fs::write(dir.join("verification_report.txt"), report.render_text()).context("out: verification_report.txt")?;
    write_summary_csv(dir, &output.summary)?;
    Ok(VerifyRun { output, report })
}

fn write_summary_csv(dir: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut text = String::from("x0,v,j_psi,se,slack\n");
    for r in rows {
        text.push_str(&format!("{},{},{},{},{}\n", r.x0, r.v, r.j_psi, r.se, r.slack));
    }
    fs::write(dir.join("summary.csv"), text)?;
    Ok(())
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!("{:>8} {:>12} {:>12} {:>10} {:>12}\n", "x0", "v(x0)", "J(psi)", "se", "slack");
    for r in rows {
        out.push_str(&format!("{:>8} {:>12.6} {:>12.6} {:>10.2e} {:>12.6}\n", r.x0, r.v, r.j_psi, r.se, r.slack));
    }
    out
}

/// `verify` and `demo-advertising`: exit 0 iff the report passes.
pub fn cmd_verify(config: &RunConfig, problem: &ControlProblem) -> Result<i32, CliError> {
    let run = run_verify(config, problem)?;
    print!("{}", run.report.render_text());
    print!("{}", summary_table(&run.output.summary));
    Ok(if run.report.verdict { exit::OK } else { exit::VERIFY_FAILED })
}

/// Parses `argv`, runs the subcommand and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, args) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Verify(a) => ("verify", a),
        Command::DemoAdvertising(a) => ("demo-advertising", a),
    };
    let result = RunConfig::resolve(name, args).map_err(CliError::input).and_then(|(config, problem)| match name {
        "solve" => cmd_solve(&config, &problem),
        "simulate" => cmd_simulate(&config, &problem, args.value.as_deref()),
        _ => cmd_verify(&config, &problem),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
    }
}

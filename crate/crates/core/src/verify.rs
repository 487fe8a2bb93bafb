//! Numerical verification of a candidate value function and feedback law.
//!
//! Each check produces [`ReportEntry`] values: the measured quantity, the
//! tolerance it was held to, and the optimality condition it instantiates.
//! Path-a.e. conditions are tested on simulated step grids, with states near
//! coefficient breakpoints excluded and a declared violation budget.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builtin::GridSpec;
use crate::error::{SimError, SolveError, VerifyError};
use crate::grid::{SpatialGrid, ValueField};
use crate::problem::{ControlGrid, ControlProblem};
use crate::sde::{
    dynkin_residual, estimate_cost, mean_and_se, moment_check, simulate_path, states_at_steps, ControlLaw,
    CostEstimate, MomentOutcome, SamplePath, SimConfig,
};
use crate::solver::{saturating_initial_value, solve_hjb, Solution, SolveOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub id: String,
    pub x0: Option<f64>,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub mandatory: bool,
    /// Optimality condition the entry instantiates.
    pub provenance: String,
    pub detail: String,
}

impl ReportEntry {
    fn new(id: &str, x0: Option<f64>, measured: f64, tolerance: f64, passed: bool, provenance: &str) -> Self {
        ReportEntry {
            id: id.to_string(),
            x0,
            measured,
            tolerance,
            passed,
            mandatory: true,
            provenance: provenance.to_string(),
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn informational(mut self) -> Self {
        self.mandatory = false;
        self
    }
}

const PROV_TRANSVERSALITY: &str = "transversality: e^{-rho s} E|v(y(s))| -> 0 as s -> inf";
const PROV_LOWER_BOUND: &str = "sufficient verification, subsolution part: v(x) <= J(x, u) for every admissible u";
const PROV_OPTIMALITY: &str = "sufficient verification: argmin feedback gives J(x, psi) = v(x) = V(x)";
const PROV_NECESSARY: &str = "necessary condition: u*(s) in argmin_u H_cv(y*(s), Dv, D^2 v, u) a.e.";
const PROV_UNIQUENESS: &str = "uniqueness of the strong solution with polynomial growth";
const PROV_DYNKIN: &str = "Dynkin formula for the stopped discounted value";
const PROV_MOMENT: &str = "state moment estimate E|y(t)|^m <= C t^m (1 + |x|^m) under bounded b, sigma";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<ReportEntry>,
    pub verdict: bool,
}

impl VerificationReport {
    pub fn from_entries(entries: Vec<ReportEntry>) -> Self {
        let verdict = entries.iter().all(|e| !e.mandatory || e.passed);
        VerificationReport { entries, verdict }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let x0 = e.x0.map(|x| format!("{x}")).unwrap_or_else(|| "-".into());
            let flag = match (e.passed, e.mandatory) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            out.push_str(&format!(
                "{flag:4}  {:<22} x0={x0:<6} measured={:<12.6e} tol={:<12.6e} {}\n",
                e.id, e.measured, e.tolerance, e.detail
            ));
        }
        out.push_str(&format!("verdict: {}\n", if self.verdict { "PASS" } else { "FAIL" }));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowance on `|J(psi) - v(x0)|` on top of `2 SE`.
    pub optimality: f64,
    /// Allowance in `v(x0) <= J(challenger) + 2 SE + lower_bound`.
    pub lower_bound: f64,
    /// Largest admissible fraction of steps violating the argmin condition.
    pub necessary_budget: f64,
    /// Sup-norm agreement of two initializations.
    pub uniqueness: f64,
    /// Sup-norm agreement across control-grid refinement.
    pub refinement: f64,
}

impl Tolerances {
    /// Tolerances scaled by `sup|l| / rho` (or `scale` when the cost is
    /// unbounded): optimality `5e-3`, refinement `1e-3` relative.
    pub fn scaled(scale: f64) -> Self {
        Tolerances {
            optimality: 5e-3 * scale,
            lower_bound: 5e-3 * scale,
            necessary_budget: 0.01,
            uniqueness: 1e-8,
            refinement: 1e-3 * scale,
        }
    }

    pub fn for_problem(problem: &ControlProblem) -> Self {
        Self::scaled(problem.value_bound().unwrap_or(1.0))
    }
}

/// Constant controls spread over the control grid plus seeded random
/// piecewise-constant schedules on `[0, horizon]`.
pub fn challenger_family(
    controls: &ControlGrid,
    horizon: f64,
    seed: u64,
    constants: usize,
    random: usize,
) -> Vec<ControlLaw> {
    let k = controls.len();
    let mut idx: Vec<usize> = match constants {
        0 => vec![],
        1 => vec![0],
        c => (0..c).map(|j| ((j * (k - 1)) as f64 / (c - 1) as f64).round() as usize).collect(),
    };
    idx.dedup();
    let mut laws: Vec<ControlLaw> = idx.into_iter().map(|j| ControlLaw::Constant { u: controls.get(j) }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c4a1_1e96_e500);
    for _ in 0..random {
        let switches = rng.random_range(2..=8);
        let mut times: Vec<f64> = (0..switches).map(|_| rng.random_range(0.0..horizon)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values = (0..=times.len()).map(|_| controls.get(rng.random_range(0..k))).collect();
        laws.push(ControlLaw::schedule(times, values).expect("sorted schedule"));
    }
    laws
}

/// Result of [`Verifier::check_optimality`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCheck {
    pub entry: ReportEntry,
    pub value_at_x0: f64,
    pub feedback_estimate: CostEstimate,
    pub lower_bound: Vec<ReportEntry>,
}

/// Runs checks for one problem and simulation config. Cost estimates are
/// pure functions of `(law, x0)` and are memoized.
pub struct Verifier<'a> {
    problem: &'a ControlProblem,
    cfg: SimConfig,
    tol: Tolerances,
    cache: Mutex<HashMap<(String, u64), CostEstimate>>,
}

impl<'a> Verifier<'a> {
    pub fn new(problem: &'a ControlProblem, cfg: SimConfig, tol: Tolerances) -> Self {
        Verifier { problem, cfg, tol, cache: Mutex::new(HashMap::new()) }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn estimate(&self, law: &ControlLaw, x0: f64) -> Result<CostEstimate, SimError> {
        let key = (serde_json::to_string(law).expect("serializable law"), x0.to_bits());
        if let Some(e) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(e.clone());
        }
        let e = estimate_cost(self.problem, law, x0, &self.cfg)?;
        self.cache.lock().expect("cache lock").insert(key, e.clone());
        Ok(e)
    }

    /// `e^{-rho s} E|v(y(s))|` at `s = T/2, 3T/4, T`. A field bounded by `B`
    /// passes analytically when `e^{-rho T} B <= tail_tol`, unless
    /// `simulate` is set.
    pub fn check_transversality(
        &self,
        value: &ValueField,
        law: &ControlLaw,
        x0: f64,
        simulate: bool,
    ) -> Result<ReportEntry, SimError> {
        let rho = self.problem.rho;
        let t = self.cfg.horizon;
        let bound = value.sup_abs();
        let analytic = (-rho * t).exp() * bound;
        if !simulate && analytic <= self.cfg.tail_tol {
            return Ok(ReportEntry::new("transversality", Some(x0), analytic, self.cfg.tail_tol, true, PROV_TRANSVERSALITY)
                .with_detail(format!("analytic: e^(-rho T) sup|v| with sup|v| = {bound:.6}")));
        }
        let n = self.cfg.steps();
        let checkpoints = [n / 2, 3 * n / 4, n];
        let states = states_at_steps(self.problem, law, x0, &self.cfg, &checkpoints)?;
        let points: Vec<(f64, f64)> = checkpoints
            .iter()
            .zip(&states)
            .map(|(&k, ys)| {
                let disc = (-rho * k as f64 * self.cfg.dt).exp();
                let abs_v: Vec<f64> = ys.iter().map(|y| disc * value.interpolate(*y).abs()).collect();
                mean_and_se(&abs_v)
            })
            .collect();
        let decreasing = points.windows(2).all(|w| w[1].0 <= w[0].0 + 3.0 * (w[0].1 + w[1].1));
        let (last, last_se) = points[2];
        let tolerance = self.cfg.tail_tol + 3.0 * last_se;
        Ok(ReportEntry::new("transversality", Some(x0), last, tolerance, decreasing && last <= tolerance, PROV_TRANSVERSALITY)
            .with_detail(format!(
                "simulated: {:.3e}, {:.3e}, {:.3e}{}",
                points[0].0,
                points[1].0,
                points[2].0,
                if decreasing { "" } else { " (not decreasing)" }
            )))
    }

    /// `v(x0) <= J(x0, challenger) + 2 SE + tol.lower_bound` for every
    /// challenger. Strictness is reported in the detail, never required.
    pub fn check_lower_bound(
        &self,
        value: &ValueField,
        challengers: &[ControlLaw],
        x0: f64,
    ) -> Result<Vec<ReportEntry>, SimError> {
        let v0 = value.interpolate(x0);
        challengers
            .iter()
            .map(|law| {
                let est = self.estimate(law, x0)?;
                let slack = est.mean - v0;
                let tolerance = 2.0 * est.se + self.tol.lower_bound;
                let passed = slack >= -tolerance;
                let strict = if slack > 2.0 * est.se { "strict" } else { "not strict" };
                let mut entry = ReportEntry::new("lower-bound", Some(x0), slack, tolerance, passed, PROV_LOWER_BOUND)
                    .with_detail(format!("{}: J={:.6} se={:.2e} ({strict})", law.label(), est.mean, est.se));
                if !passed {
                    entry.detail.push_str(&format!("; offending control {}", serde_json::to_string(law).unwrap_or_default()));
                }
                Ok(entry)
            })
            .collect()
    }

    /// Two-sided check: `|J(x0, psi) - v(x0)| <= 2 SE + tol.optimality`, and
    /// the lower bound against every challenger.
    pub fn check_optimality(
        &self,
        value: &ValueField,
        feedback: &ControlLaw,
        challengers: &[ControlLaw],
        x0: f64,
    ) -> Result<OptimalityCheck, SimError> {
        let v0 = value.interpolate(x0);
        let est = self.estimate(feedback, x0)?;
        let gap = (est.mean - v0).abs();
        let tolerance = 2.0 * est.se + self.tol.optimality;
        let lower_bound = self.check_lower_bound(value, challengers, x0)?;
        let lb_ok = lower_bound.iter().all(|e| e.passed);
        let passed = gap <= tolerance && lb_ok;
        let entry = ReportEntry::new("optimality", Some(x0), gap, tolerance, passed, PROV_OPTIMALITY).with_detail(format!(
            "v={v0:.6} J(psi)={:.6} se={:.2e}; lower bound {}",
            est.mean,
            est.se,
            if lb_ok { "holds" } else { "violated" }
        ));
        Ok(OptimalityCheck { entry, value_at_x0: v0, feedback_estimate: est, lower_bound })
    }
}

/// Checks along stored paths that each control used is an argmin of the
/// current value Hamiltonian at the state's nearest node (central `Dv`,
/// `D^2 v`). The per-step slack is twice the largest gap between upwind and
/// central drift terms at that node, the discrepancy between the scheme and
/// the pointwise operator. Steps near breakpoints or at the box ends are
/// excluded.
pub fn check_necessary(
    problem: &ControlProblem,
    value: &ValueField,
    controls: &ControlGrid,
    paths: &[SamplePath],
    budget: f64,
) -> Result<ReportEntry, VerifyError> {
    let grid = value.grid();
    let h = grid.spacing();
    let v = value.values();
    let breakpoints = problem.breakpoints();
    let n = grid.len();
    let (mut checked, mut violations) = (0usize, 0usize);
    for path in paths {
        for (k, &u) in path.controls.iter().enumerate() {
            let i = grid.nearest(path.states[k]);
            if i == 0 || i + 1 == n || grid.near_breakpoint(i, &breakpoints) {
                continue;
            }
            let x = grid.node(i);
            let (p, z) = (value.dv(i), value.d2v(i));
            let (h_min, _) = problem.hamiltonian_min(x, p, z, controls)?;
            let mut gap: f64 = 0.0;
            for &w in controls.points().iter().chain(std::iter::once(&u)) {
                let b = problem.eval_drift(x, w)?;
                let upwind = if b >= 0.0 { (v[i + 1] - v[i]) / h } else { (v[i] - v[i - 1]) / h };
                gap = gap.max((b * (upwind - p)).abs());
            }
            let h_used = problem.hamiltonian_cv(x, p, z, u)?;
            checked += 1;
            if h_used > h_min + 2.0 * gap + 1e-10 * (1.0 + h_min.abs()) {
                violations += 1;
            }
        }
    }
    let fraction = if checked == 0 { 0.0 } else { violations as f64 / checked as f64 };
    let passed = fraction <= budget;
    Ok(ReportEntry::new("necessary-argmin", None, fraction, budget, passed, PROV_NECESSARY).with_detail(format!(
        "{violations} of {checked} steps off argmin{}",
        if passed { "" } else { " (not argmin)" }
    )))
}

/// Solves from the zero field and from the saturating constant `sup|l|/rho`
/// (same fixed point expected), and with the control grid refined
/// `K -> 2K - 1`.
pub fn uniqueness_cross_check(
    problem: &ControlProblem,
    grid: &SpatialGrid,
    controls: &ControlGrid,
    opts: &SolveOptions,
    tol: &Tolerances,
) -> Result<(Solution, Vec<ReportEntry>), SolveError> {
    let base = solve_hjb(problem, grid, controls, &SolveOptions { initial_value: 0.0, ..opts.clone() })?;
    let high = saturating_initial_value(problem, grid, controls)?;
    let other = solve_hjb(problem, grid, controls, &SolveOptions { initial_value: high, ..opts.clone() })?;
    let d_init = base.value.sup_distance(&other.value);
    let finer_grid = controls.refined(&problem.control_set)?;
    let finer = solve_hjb(problem, grid, &finer_grid, opts)?;
    let d_ref = base.value.sup_distance(&finer.value);
    let monotone = finer
        .value
        .values()
        .iter()
        .zip(base.value.values())
        .all(|(f, c)| *f <= *c + 1e-9);
    let entries = vec![
        ReportEntry::new("uniqueness-init", None, d_init, tol.uniqueness, d_init <= tol.uniqueness, PROV_UNIQUENESS)
            .with_detail(format!("starts 0 and {high:.6}")),
        ReportEntry::new(
            "uniqueness-refinement",
            None,
            d_ref,
            tol.refinement,
            d_ref <= tol.refinement && monotone,
            PROV_UNIQUENESS,
        )
        .with_detail(format!(
            "K={} -> {}{}",
            controls.len(),
            finer_grid.len(),
            if monotone { "" } else { " (refined value not below coarse)" }
        )),
    ];
    Ok((base, entries))
}

/// Dynkin residual entry: passes when `|residual| <= 3 SE + allowance`.
pub fn dynkin_entry(
    problem: &ControlProblem,
    value: &ValueField,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
    t: f64,
    radius: f64,
    allowance: f64,
) -> Result<ReportEntry, SimError> {
    let d = dynkin_residual(problem, value, law, x0, cfg, t, radius)?;
    let tolerance = 3.0 * d.se + allowance;
    Ok(ReportEntry::new("dynkin", Some(x0), d.residual.abs(), tolerance, d.residual.abs() <= tolerance, PROV_DYNKIN)
        .with_detail(format!("t={t} R={radius} residual={:.3e} se={:.2e}", d.residual, d.se)))
}

/// Moment-bound entry; not-applicable problems yield an informational entry.
pub fn moment_entry(
    problem: &ControlProblem,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
    m: f64,
) -> Result<ReportEntry, SimError> {
    Ok(match moment_check(problem, law, x0, cfg, m)? {
        MomentOutcome::NotApplicable { reason } => {
            ReportEntry::new("moment-bound", Some(x0), f64::NAN, 0.0, false, PROV_MOMENT)
                .informational()
                .with_detail(format!("not applicable: {reason}"))
        }
        MomentOutcome::Checked { points, passed, .. } => {
            let margin = points.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
            let detail = points
                .iter()
                .map(|p| format!("t={:.3}: {:.4} <= {:.4}", p.t, p.estimate, p.bound))
                .collect::<Vec<_>>()
                .join(", ");
            ReportEntry::new("moment-bound", Some(x0), margin, 0.0, passed, PROV_MOMENT).with_detail(detail)
        }
    })
}

/// Settings for the full solve, synthesize, simulate, verify pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub grid: GridSpec,
    pub controls: usize,
    pub solve: SolveOptions,
    pub sim: SimConfig,
    pub x0s: Vec<f64>,
    pub tolerances: Tolerances,
    pub challenger_constants: usize,
    pub challenger_random: usize,
    /// Shift applied to the solved value before verification (negative
    /// control); zero in normal runs.
    pub corrupt_shift: f64,
    /// `(t, R, allowance)` for the Dynkin check at the first `x0`.
    pub dynkin: Option<(f64, f64, f64)>,
    /// Moment exponent for the moment check at every `x0`.
    pub moment_m: Option<f64>,
    /// Closed-loop paths per `x0` used for the necessary-condition check.
    pub necessary_paths: usize,
    /// Simulate the transversality check even when the analytic bound applies.
    pub simulate_transversality: bool,
    /// When set, the optimality check is repeated with the verified value
    /// shifted by this amount, reusing the cached estimates. A working
    /// verifier must reject the shifted field.
    pub negative_control: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub x0: f64,
    pub v: f64,
    pub j_psi: f64,
    pub se: f64,
    /// `min over challengers of J - v(x0)`.
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub solution: Solution,
    /// Value field actually verified (the solution, possibly shifted).
    pub verified_value: ValueField,
    pub report: VerificationReport,
    pub estimates: Vec<(f64, CostEstimate)>,
    pub summary: Vec<SummaryRow>,
    /// Optimality checks of the shifted field, one per `x0`; empty unless
    /// [`PipelineConfig::negative_control`] is set.
    pub negative_control: Vec<OptimalityCheck>,
}

pub fn run_pipeline(problem: &ControlProblem, cfg: &PipelineConfig) -> Result<PipelineOutput, VerifyError> {
    let grid = SpatialGrid::new(cfg.grid.x_lo, cfg.grid.x_hi, cfg.grid.nodes)?;
    let controls = ControlGrid::uniform(&problem.control_set, cfg.controls)?;
    let (solution, mut entries) = uniqueness_cross_check(problem, &grid, &controls, &cfg.solve, &cfg.tolerances)?;
    let value = solution.value.shifted(cfg.corrupt_shift);
    let feedback = ControlLaw::feedback(solution.policy.clone());
    let challengers = challenger_family(
        &controls,
        cfg.sim.horizon,
        cfg.sim.seed,
        cfg.challenger_constants,
        cfg.challenger_random,
    );
    let verifier = Verifier::new(problem, cfg.sim.clone(), cfg.tolerances.clone());

    let mut per_x0 = Vec::new();
    let mut estimates = Vec::new();
    let mut summary = Vec::new();
    let mut paths = Vec::new();
    for &x0 in &cfg.x0s {
        let opt = verifier.check_optimality(&value, &feedback, &challengers, x0)?;
        let slack = opt.lower_bound.iter().map(|e| e.measured).fold(f64::INFINITY, f64::min);
        summary.push(SummaryRow {
            x0,
            v: opt.value_at_x0,
            j_psi: opt.feedback_estimate.mean,
            se: opt.feedback_estimate.se,
            slack,
        });
        estimates.push((x0, opt.feedback_estimate.clone()));
        per_x0.push(opt.entry);
        per_x0.extend(opt.lower_bound);
        per_x0.push(verifier.check_transversality(&value, &feedback, x0, cfg.simulate_transversality)?);
        if let Some(m) = cfg.moment_m {
            per_x0.push(moment_entry(problem, &feedback, x0, &cfg.sim, m)?);
        }
        for p in 0..cfg.necessary_paths as u64 {
            paths.push(simulate_path(problem, &feedback, x0, &cfg.sim, p)?);
        }
    }
    if cfg.necessary_paths > 0 {
        per_x0.push(check_necessary(problem, &value, &controls, &paths, cfg.tolerances.necessary_budget)?);
    }
    if let (Some((t, r, allowance)), Some(&x0)) = (cfg.dynkin, cfg.x0s.first()) {
        per_x0.push(dynkin_entry(problem, &value, &feedback, x0, &cfg.sim, t, r, allowance)?);
    }
    per_x0.append(&mut entries);
    let mut negative_control = Vec::new();
    if let Some(shift) = cfg.negative_control {
        let shifted = value.shifted(shift);
        for &x0 in &cfg.x0s {
            negative_control.push(verifier.check_optimality(&shifted, &feedback, &challengers, x0)?);
        }
    }
    Ok(PipelineOutput {
        solution,
        verified_value: value,
        report: VerificationReport::from_entries(per_x0),
        estimates,
        summary,
        negative_control,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::constant_unit_cost;

    #[test]
    fn challenger_family_shape() {
        let b = constant_unit_cost();
        let cg = ControlGrid::uniform(&b.problem.control_set, 41).unwrap();
        let fam = challenger_family(&cg, 20.0, 7, 5, 10);
        assert_eq!(fam.len(), 15);
        let consts: Vec<f64> = fam
            .iter()
            .filter_map(|l| match l {
                ControlLaw::Constant { u } => Some(*u),
                _ => None,
            })
            .collect();
        assert_eq!(consts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(fam, challenger_family(&cg, 20.0, 7, 5, 10));
        for law in &fam[5..] {
            match law {
                ControlLaw::Schedule { switch_times, values } => {
                    assert!(switch_times.iter().all(|t| (0.0..20.0).contains(t)));
                    assert!(values.iter().all(|u| cg.points().contains(u)));
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn report_verdict_ignores_informational_entries() {
        let ok = ReportEntry::new("a", None, 0.0, 1.0, true, "p");
        let info = ReportEntry::new("b", None, 2.0, 1.0, false, "p").informational();
        assert!(VerificationReport::from_entries(vec![ok.clone(), info]).verdict);
        let bad = ReportEntry::new("c", None, 2.0, 1.0, false, "p");
        let r = VerificationReport::from_entries(vec![ok, bad]);
        assert!(!r.verdict);
        assert!(r.render_text().contains("FAIL"));
    }

    #[test]
    fn zero_value_transversality_passes() {
        let b = constant_unit_cost();
        let g = SpatialGrid::new(-2.0, 2.0, 21).unwrap();
        let v = ValueField::constant(g, 0.0).unwrap();
        let cfg = SimConfig { horizon: 2.0, dt: 0.01, paths: 100, radius: 10.0, seed: 1, tail_tol: 1e-3 };
        let ver = Verifier::new(&b.problem, cfg, Tolerances::for_problem(&b.problem));
        let e = ver.check_transversality(&v, &ControlLaw::Constant { u: 0.0 }, 0.0, true).unwrap();
        assert!(e.passed);
        assert_eq!(e.measured, 0.0);
    }

    #[test]
    fn bounded_value_transversality_short_circuits() {
        let b = constant_unit_cost();
        let g = SpatialGrid::new(-2.0, 2.0, 21).unwrap();
        let v = ValueField::constant(g, 2.0).unwrap();
        let cfg = SimConfig { horizon: 20.0, dt: 0.01, paths: 1, radius: 10.0, seed: 1, tail_tol: 1e-4 };
        let ver = Verifier::new(&b.problem, cfg, Tolerances::for_problem(&b.problem));
        let e = ver.check_transversality(&v, &ControlLaw::Constant { u: 0.0 }, 0.0, false).unwrap();
        assert!(e.passed);
        assert!(e.detail.starts_with("analytic"));
    }
}

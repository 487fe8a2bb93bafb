//! Euler–Maruyama simulation of controlled and closed-loop paths, discounted
//! cost estimation, Dynkin-formula residuals and moment checks.
//!
//! Paths are independent; per-path results are collected in path order and
//! reduced with a fixed pairwise summation, so estimates do not depend on the
//! number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CompiledExpr;
use crate::error::{ModelError, SimError};
use crate::grid::{FeedbackPolicy, NodeLocator, FieldDerivatives, ValueField};
use crate::problem::ControlProblem;
use crate::rng::{path_key, step_normal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Truncation horizon `T`.
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    /// Exit radius `R` of the stopping time `tau^R`.
    pub radius: f64,
    pub seed: u64,
    /// Largest admissible deterministic tail `e^{-rho T} sup|l| / rho`.
    pub tail_tol: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::config("dt", "must be positive"));
        }
        if !(self.horizon.is_finite() && self.dt <= self.horizon) {
            return Err(SimError::config("horizon", format!("need dt <= T, got T = {}", self.horizon)));
        }
        if self.paths == 0 {
            return Err(SimError::config("paths", "need at least one path"));
        }
        if !(self.radius > 0.0) {
            return Err(SimError::config("radius", "must be positive"));
        }
        if !(self.tail_tol > 0.0) {
            return Err(SimError::config("tail_tol", "must be positive"));
        }
        Ok(())
    }

    /// Validates the config and, for bounded costs, the tail rule.
    pub fn validate_for(&self, problem: &ControlProblem) -> Result<(), SimError> {
        self.validate()?;
        if let Some(tail) = self.tail_bound(problem) {
            if tail > self.tail_tol * (1.0 + 1e-9) {
                return Err(SimError::config(
                    "horizon",
                    format!("tail bound {tail:e} exceeds tail_tol {:e}; need T >= {}", self.tail_tol, Self::horizon_for_tail(problem, self.tail_tol).unwrap_or(f64::NAN)),
                ));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// `e^{-rho T} sup|l| / rho`, or `None` when the cost is unbounded.
    pub fn tail_bound(&self, problem: &ControlProblem) -> Option<f64> {
        problem.value_bound().map(|b| (-problem.rho * self.horizon).exp() * b)
    }

    /// Smallest multiple of `dt` meeting the tail rule for a bounded cost.
    pub fn aligned_horizon(problem: &ControlProblem, tail_tol: f64, dt: f64) -> Option<f64> {
        Self::horizon_for_tail(problem, tail_tol).map(|t| ((t / dt).ceil() * dt).max(dt))
    }

    /// Smallest horizon meeting the tail rule for a bounded cost.
    pub fn horizon_for_tail(problem: &ControlProblem, tail_tol: f64) -> Option<f64> {
        problem
            .value_bound()
            .map(|b| if b <= tail_tol { 0.0 } else { (b / tail_tol).ln() / problem.rho })
    }
}

/// Control used while simulating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlLaw {
    Constant { u: f64 },
    /// Open-loop piecewise-constant schedule: `values[j]` on
    /// `[switch_times[j-1], switch_times[j])`.
    Schedule { switch_times: Vec<f64>, values: Vec<f64> },
    Feedback { policy: FeedbackPolicy },
}

impl ControlLaw {
    pub fn schedule(switch_times: Vec<f64>, values: Vec<f64>) -> Result<Self, SimError> {
        if values.len() != switch_times.len() + 1 {
            return Err(SimError::config("schedule", "need one more value than switch times"));
        }
        if switch_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::config("schedule", "switch times must increase"));
        }
        Ok(ControlLaw::Schedule { switch_times, values })
    }

    pub fn feedback(policy: FeedbackPolicy) -> Self {
        ControlLaw::Feedback { policy }
    }

    /// Slot of an open-loop law in effect at time `t`: 0 for a constant,
    /// the schedule segment otherwise. Feedback laws have no time slot.
    #[inline]
    fn control_slot(&self, t: f64) -> usize {
        match self {
            ControlLaw::Schedule { switch_times, .. } => switch_times.partition_point(|s| *s <= t),
            _ => 0,
        }
    }

    #[inline]
    pub fn control(&self, t: f64, y: f64) -> f64 {
        match self {
            ControlLaw::Constant { u } => *u,
            ControlLaw::Schedule { switch_times, values } => values[switch_times.partition_point(|s| *s <= t)],
            ControlLaw::Feedback { policy } => policy.lookup(y),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ControlLaw::Constant { u } => format!("constant u={u}"),
            ControlLaw::Schedule { switch_times, .. } => format!("schedule with {} switches", switch_times.len()),
            ControlLaw::Feedback { .. } => "feedback".to_string(),
        }
    }
}

/// A stored Euler–Maruyama trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub path_index: u64,
    pub dt: f64,
    pub horizon: f64,
    /// `y_0 .. y_K`, one more entry than `controls`.
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub increments: Vec<f64>,
    /// First `k` with `|y_k| > R`, if the path exited.
    pub exit_index: Option<usize>,
}

impl SamplePath {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.controls.len()
    }
}

#[derive(Clone, Copy, Debug)]
struct Step {
    k: usize,
    y: f64,
    c: Coeffs,
    dw: f64,
}

#[derive(Clone, Copy, Debug)]
struct PathEnd {
    k_end: usize,
    y_end: f64,
    exited: bool,
}

/// Control-dependent parts of the separable coefficients at one control
/// value.
#[derive(Clone, Copy, Debug)]
struct ControlParts {
    u: f64,
    b: f64,
    s: f64,
    l: f64,
}

/// State-dependent parts `(b, sigma, l)` of the separable coefficients.
const TABLE_ENDS: usize = 8;

enum StateParts {
    /// All three parts piecewise constant with at most `TABLE_ENDS`
    /// breakpoints in total: one lookup in the merged table.
    Table { ends: Vec<f64>, rows: Vec<[f64; 3]> },
    Exprs([CompiledExpr; 3]),
}

impl StateParts {
    fn new(problem: &ControlProblem) -> Self {
        let exprs = [
            CompiledExpr::new(&problem.drift.state),
            CompiledExpr::new(&problem.diffusion.state),
            CompiledExpr::new(&problem.cost.state),
        ];
        if exprs.iter().any(|e| matches!(e, CompiledExpr::General(_))) {
            return StateParts::Exprs(exprs);
        }
        let mut ends: Vec<f64> = exprs
            .iter()
            .flat_map(|e| match e {
                CompiledExpr::Steps { ends, .. } => ends.clone(),
                _ => Vec::new(),
            })
            .collect();
        ends.sort_by(f64::total_cmp);
        ends.dedup();
        if ends.len() > TABLE_ENDS {
            return StateParts::Exprs(exprs);
        }
        // pieces are left-closed, so each interval takes its value at its left end
        let rows = std::iter::once(f64::NEG_INFINITY)
            .chain(ends.iter().copied())
            .map(|x| [exprs[0].eval(x), exprs[1].eval(x), exprs[2].eval(x)])
            .collect();
        StateParts::Table { ends, rows }
    }

    #[inline(always)]
    fn at(&self, y: f64) -> [f64; 3] {
        match self {
            StateParts::Table { ends, rows } => {
                let mut j = 0;
                while j < ends.len() && ends[j] <= y {
                    j += 1;
                }
                rows[j]
            }
            StateParts::Exprs([b, s, l]) => [b.eval(y), s.eval(y), l.eval(y)],
        }
    }
}

/// Coefficient evaluation along paths of one law. The control parts are
/// evaluated once per control value the law can emit; the per-step checks
/// fall back to the checked evaluators only to build the error.
struct Stepper<'a> {
    problem: &'a ControlProblem,
    law: &'a ControlLaw,
    parts: Vec<ControlParts>,
    state: StateParts,
    locator: Option<NodeLocator>,
    /// Whether every reachable `(b, sigma, l)` passed the per-step checks
    /// in advance, which is decidable when the state parts form a table.
    prechecked: bool,
}

/// Coefficients at one step; `l` is unchecked until [`Stepper::cost`].
#[derive(Clone, Copy, Debug)]
struct Coeffs {
    u: f64,
    b: f64,
    s: f64,
    l: f64,
}

impl<'a> Stepper<'a> {
    fn new(problem: &'a ControlProblem, law: &'a ControlLaw) -> Result<Self, SimError> {
        let values: Vec<f64> = match law {
            ControlLaw::Constant { u } => vec![*u],
            ControlLaw::Schedule { values, .. } => values.clone(),
            // one entry per node, so the lookup is a single load
            ControlLaw::Feedback { policy } => (0..policy.grid().len()).map(|i| policy.control_at_node(i)).collect(),
        };
        let parts: Vec<ControlParts> = values
            .into_iter()
            .map(|u| {
                if !problem.control_set.contains(u) {
                    return Err(SimError::Model(ModelError::ControlOutOfDomain { u }));
                }
                Ok(ControlParts {
                    u,
                    b: problem.drift.control.eval(u),
                    s: problem.diffusion.control.eval(u),
                    l: problem.cost.control.eval(u),
                })
            })
            .collect::<Result<_, _>>()?;
        let locator = match law {
            ControlLaw::Feedback { policy } => Some(policy.grid().locator()),
            _ => None,
        };
        let state = StateParts::new(problem);
        let prechecked = match &state {
            StateParts::Table { rows, .. } => {
                let md = &problem.metadata;
                rows.iter().all(|&[sb, ss, sl]| {
                    parts.iter().all(|c: &ControlParts| {
                        let (b, s, l) = (sb + c.b, ss + c.s, sl + c.l);
                        b.is_finite()
                            && s.is_finite()
                            && (md.allow_degenerate || s.abs() >= md.ellipticity)
                            && l.is_finite()
                            && l.abs() <= md.growth.c
                    })
                })
            }
            StateParts::Exprs(_) => false,
        };
        Ok(Stepper { problem, law, parts, state, locator, prechecked })
    }

    /// Index into `parts`: the schedule slot, or the nearest node for a
    /// feedback law.
    #[inline]
    fn index(&self, t: f64, y: f64) -> usize {
        match (self.law, self.locator) {
            (ControlLaw::Feedback { .. }, Some(l)) => l.nearest(y),
            (law, _) => law.control_slot(t),
        }
    }

    /// Coefficients at state `y` and law index `j` (see [`Self::index`]); `None` when drift or
    /// diffusion fails its checks (see [`Self::coeff_error`]).
    #[inline(always)]
    fn coeffs(&self, y: f64, j: usize) -> Option<Coeffs> {
        let c = &self.parts[j];
        let [sb, ss, sl] = self.state.at(y);
        let (b, s) = (sb + c.b, ss + c.s);
        let md = &self.problem.metadata;
        if b.is_finite() && s.is_finite() && (md.allow_degenerate || s.abs() >= md.ellipticity) {
            Some(Coeffs { u: c.u, b, s, l: sl + c.l })
        } else {
            None
        }
    }

    /// [`Self::coeffs`] without checks, for laws whose every reachable
    /// coefficient value was verified in [`Self::new`].
    #[inline(always)]
    fn coeffs_unchecked(&self, y: f64, j: usize) -> Coeffs {
        let c = &self.parts[j];
        let [sb, ss, sl] = self.state.at(y);
        Coeffs { u: c.u, b: sb + c.b, s: ss + c.s, l: sl + c.l }
    }

    #[cold]
    fn coeff_error(&self, y: f64, j: usize, path: u64, step: usize) -> SimError {
        let u = self.parts[j].u;
        let err = self.problem.eval_drift(y, u).and_then(|_| self.problem.eval_diffusion(y, u));
        match err {
            // a finite state whose coefficients overflow has escaped as well
            Err(ModelError::NonFinite { .. }) | Ok(_) => SimError::Diverged { path, step },
            Err(e) => e.into(),
        }
    }

    /// Checked running cost for coefficients returned by [`Self::coeffs`].
    #[inline(always)]
    fn cost(&self, y: f64, c: &Coeffs) -> Result<f64, SimError> {
        // |l| <= c never exceeds the growth bound c (1 + |x|^m)
        if c.l.is_finite() && c.l.abs() <= self.problem.metadata.growth.c {
            return Ok(c.l);
        }
        self.cost_slow(y, c.u)
    }

    #[cold]
    fn cost_slow(&self, y: f64, u: f64) -> Result<f64, SimError> {
        Ok(self.problem.eval_cost(y, u)?)
    }
}

/// Runs one path for at most `steps` steps, calling `on_step` before each
/// update. With `radius = Some(R)` the path stops at the first grid time
/// with `|y| > R`.
fn run_path(
    stepper: &Stepper,
    x0: f64,
    dt: f64,
    steps: usize,
    radius: Option<f64>,
    seed: u64,
    path: u64,
    mut on_step: impl FnMut(&Step) -> Result<(), SimError>,
) -> Result<PathEnd, SimError> {
    let key = path_key(seed, path);
    let sqrt_dt = dt.sqrt();
    let r = radius.unwrap_or(f64::INFINITY);
    let mut y = x0;
    for k in 0..steps {
        if y.abs() > r {
            return Ok(PathEnd { k_end: k, y_end: y, exited: true });
        }
        let j = stepper.index(k as f64 * dt, y);
        let Some(c) = stepper.coeffs(y, j) else {
            return Err(stepper.coeff_error(y, j, path, k));
        };
        let dw = sqrt_dt * step_normal(key, k);
        on_step(&Step { k, y, c, dw })?;
        y += c.b * dt + c.s * dw;
        if !y.is_finite() {
            return Err(SimError::Diverged { path, step: k });
        }
    }
    Ok(PathEnd { k_end: steps, y_end: y, exited: y.abs() > r })
}

fn check_start(x0: f64) -> Result<(), SimError> {
    if x0.is_finite() {
        Ok(())
    } else {
        Err(SimError::config("x0", "initial state must be finite"))
    }
}

/// Simulates and stores path `path_index`, stopping at `tau^R`.
pub fn simulate_path(
    problem: &ControlProblem,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<SamplePath, SimError> {
    cfg.validate()?;
    check_start(x0)?;
    let stepper = Stepper::new(problem, law)?;
    let n = cfg.steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut increments = Vec::with_capacity(n);
    let end = run_path(&stepper, x0, cfg.dt, n, Some(cfg.radius), cfg.seed, path_index, |st| {
        states.push(st.y);
        controls.push(st.c.u);
        increments.push(st.dw);
        Ok(())
    })?;
    states.push(end.y_end);
    Ok(SamplePath {
        path_index,
        dt: cfg.dt,
        horizon: cfg.horizon,
        states,
        controls,
        increments,
        exit_index: end.exited.then_some(end.k_end),
    })
}

/// First grid time with `|y| > R`, capped at the horizon.
pub fn exit_time(path: &SamplePath, radius: f64) -> f64 {
    match path.states.iter().position(|y| y.abs() > radius) {
        Some(k) => path.time(k).min(path.horizon),
        None => path.horizon,
    }
}

/// Mean and standard error of the discrete exit time `min(tau^R, T)` over
/// `cfg.paths` paths, without storing them.
pub fn estimate_exit_time(
    problem: &ControlProblem,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
) -> Result<(f64, f64), SimError> {
    cfg.validate()?;
    check_start(x0)?;
    let stepper = Stepper::new(problem, law)?;
    let n = cfg.steps();
    let times = per_path(cfg.paths, |p| {
        let end = run_path(&stepper, x0, cfg.dt, n, Some(cfg.radius), cfg.seed, p, |_| Ok(()))?;
        Ok(end.k_end as f64 * cfg.dt)
    })?;
    Ok(mean_and_se(&times))
}

/// Pairwise sum in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = pairwise_sum(xs) / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn per_path<F>(paths: usize, f: F) -> Result<Vec<f64>, SimError>
where
    F: Fn(u64) -> Result<f64, SimError> + Sync + Send,
{
    (0..paths as u64).into_par_iter().map(f).collect()
}

const LANES: usize = 4;

/// Truncated discounted costs of paths `first..first + lanes`, stepped in
/// lockstep so that their dependency chains overlap. Each lane performs
/// exactly the arithmetic of [`run_path`] for its path.
fn discounted_costs(
    stepper: &Stepper,
    x0: f64,
    cfg: &SimConfig,
    first: u64,
    lanes: usize,
) -> Result<[f64; LANES], SimError> {
    // dispatch once so the step loop is specialized per law kind
    let none = |_: f64| 0;
    match (stepper.law, stepper.prechecked) {
        (ControlLaw::Feedback { policy }, pre) => {
            let loc = policy.grid().locator();
            let by_state = |y: f64| loc.nearest(y);
            if pre {
                lockstep::<false, true>(stepper, none, by_state, x0, cfg, first, lanes)
            } else {
                lockstep::<true, true>(stepper, none, by_state, x0, cfg, first, lanes)
            }
        }
        (law, pre) => {
            let by_time = |t: f64| law.control_slot(t);
            if pre {
                lockstep::<false, false>(stepper, by_time, none, x0, cfg, first, lanes)
            } else {
                lockstep::<true, false>(stepper, by_time, none, x0, cfg, first, lanes)
            }
        }
    }
}

/// `BY_STATE` laws pick their control slot from each lane's state, the
/// others from the time alone (once per step for all lanes).
#[inline(always)]
fn lockstep<const CHECKED: bool, const BY_STATE: bool>(
    stepper: &Stepper,
    by_time: impl Fn(f64) -> usize,
    by_state: impl Fn(f64) -> usize,
    x0: f64,
    cfg: &SimConfig,
    first: u64,
    lanes: usize,
) -> Result<[f64; LANES], SimError> {
    let (dt, r) = (cfg.dt, cfg.radius);
    let sqrt_dt = dt.sqrt();
    let decay = (-stepper.problem.rho * dt).exp();
    let mut keys = [0u64; LANES];
    let mut live = [false; LANES];
    for l in 0..lanes {
        keys[l] = path_key(cfg.seed, first + l as u64);
        live[l] = true;
    }
    let mut y = [x0; LANES];
    let mut acc = [0.0; LANES];
    let mut disc = 1.0;
    for k in 0..cfg.steps() {
        let t = k as f64 * dt;
        let slot = if BY_STATE { 0 } else { by_time(t) };
        let mut any = false;
        for l in 0..LANES {
            if !live[l] {
                continue;
            }
            let yl = y[l];
            if yl.abs() > r {
                live[l] = false;
                continue;
            }
            any = true;
            let j = if BY_STATE { by_state(yl) } else { slot };
            let (b, s, cost) = if CHECKED {
                let Some(c) = stepper.coeffs(yl, j) else {
                    return Err(stepper.coeff_error(yl, j, first + l as u64, k));
                };
                (c.b, c.s, stepper.cost(yl, &c)?)
            } else {
                let c = stepper.coeffs_unchecked(yl, j);
                (c.b, c.s, c.l)
            };
            acc[l] += disc * cost;
            let dw = sqrt_dt * step_normal(keys[l], k);
            let next = yl + (b * dt + s * dw);
            if !next.is_finite() {
                return Err(SimError::Diverged { path: first + l as u64, step: k });
            }
            y[l] = next;
        }
        if !any {
            break;
        }
        disc *= decay;
    }
    Ok(acc.map(|a| a * dt))
}

/// Truncated discounted cost of every path, in path order.
fn path_costs(problem: &ControlProblem, law: &ControlLaw, x0: f64, cfg: &SimConfig) -> Result<Vec<f64>, SimError> {
    let stepper = Stepper::new(problem, law)?;
    let batches = cfg.paths.div_ceil(LANES);
    Ok((0..batches)
        .into_par_iter()
        .map(|b| {
            let first = (b * LANES) as u64;
            let lanes = LANES.min(cfg.paths - b * LANES);
            discounted_costs(&stepper, x0, cfg, first, lanes)
        })
        .collect::<Result<Vec<_>, SimError>>()?
        .into_iter()
        .flatten()
        .take(cfg.paths)
        .collect())
}

/// Monte Carlo estimate of the discounted cost `J(x0, u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub se: f64,
    pub m_paths: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    /// `None` when the cost is unbounded ("tail unbounded").
    pub tail_bound: Option<f64>,
}

impl CostEstimate {
    /// `mean -/+ (2 SE + tail)`.
    pub fn interval(&self) -> (f64, f64) {
        let w = 2.0 * self.se + self.tail_bound.unwrap_or(f64::INFINITY);
        (self.mean - w, self.mean + w)
    }
}

pub fn estimate_cost(
    problem: &ControlProblem,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
) -> Result<CostEstimate, SimError> {
    cfg.validate_for(problem)?;
    check_start(x0)?;
    let costs = path_costs(problem, law, x0, cfg)?;
    let (mean, se) = mean_and_se(&costs);
    Ok(CostEstimate {
        mean,
        se,
        m_paths: cfg.paths,
        horizon: cfg.horizon,
        dt: cfg.dt,
        tail_bound: cfg.tail_bound(problem),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynkinEstimate {
    pub residual: f64,
    pub se: f64,
    pub t: f64,
    pub radius: f64,
    pub m_paths: usize,
}

/// Monte Carlo residual of Dynkin's formula for the stopped discounted value:
/// `E[e^{-rho(t^tau)} v(y(t^tau))] - v(x0) - E int_0^{t^tau} e^{-rho s}
/// (-rho v + b Dv + sigma^2 D^2 v / 2)(y(s)) ds`, with `v`, `Dv`, `D^2 v`
/// linearly interpolated from the grid field.
pub fn dynkin_residual(
    problem: &ControlProblem,
    value: &ValueField,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
    t: f64,
    radius: f64,
) -> Result<DynkinEstimate, SimError> {
    cfg.validate()?;
    check_start(x0)?;
    let stepper = Stepper::new(problem, law)?;
    if !(t > 0.0 && t <= cfg.horizon * (1.0 + 1e-12)) {
        return Err(SimError::config("t", format!("need 0 < t <= T = {}", cfg.horizon)));
    }
    if !(radius > 0.0) {
        return Err(SimError::config("radius", "must be positive"));
    }
    let grid = value.grid();
    if grid.x_lo() > -radius || grid.x_hi() < radius {
        return Err(SimError::config(
            "radius",
            format!("value grid [{}, {}] does not cover [-{radius}, {radius}]", grid.x_lo(), grid.x_hi()),
        ));
    }
    let field: FieldDerivatives = value.derivatives();
    let v0 = field.at(x0).0;
    let steps = (t / cfg.dt).round() as usize;
    let rho = problem.rho;
    let decay = (-rho * cfg.dt).exp();
    let samples = per_path(cfg.paths, |p| {
        let mut integral = 0.0;
        let mut disc = 1.0;
        let end = run_path(&stepper, x0, cfg.dt, steps, Some(radius), cfg.seed, p, |st| {
            let (v, dv, d2v) = field.at(st.y);
            integral += disc * (-rho * v + st.c.b * dv + 0.5 * st.c.s * st.c.s * d2v);
            disc *= decay;
            Ok(())
        })?;
        let stop = end.k_end as f64 * cfg.dt;
        let terminal = (-rho * stop).exp() * field.at(end.y_end).0;
        Ok(terminal - v0 - integral * cfg.dt)
    })?;
    let (residual, se) = mean_and_se(&samples);
    Ok(DynkinEstimate { residual, se, t, radius, m_paths: cfg.paths })
}

/// States `y_k` of every path at the requested step indices (each at most
/// `cfg.steps()`), without stopping at the exit radius. Returns one vector
/// per checkpoint, in path order.
pub fn states_at_steps(
    problem: &ControlProblem,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
    checkpoints: &[usize],
) -> Result<Vec<Vec<f64>>, SimError> {
    cfg.validate()?;
    check_start(x0)?;
    let stepper = Stepper::new(problem, law)?;
    let n = checkpoints.iter().copied().max().unwrap_or(0);
    let rows = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut at = vec![f64::NAN; checkpoints.len()];
            let end = run_path(&stepper, x0, cfg.dt, n, None, cfg.seed, p, |st| {
                for (slot, &c) in at.iter_mut().zip(checkpoints) {
                    if st.k == c {
                        *slot = st.y;
                    }
                }
                Ok(())
            })?;
            for (slot, &c) in at.iter_mut().zip(checkpoints) {
                if c == n {
                    *slot = end.y_end;
                }
            }
            Ok(at)
        })
        .collect::<Result<Vec<Vec<f64>>, SimError>>()?;
    Ok((0..checkpoints.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub t: f64,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    /// `bound - estimate`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum MomentOutcome {
    NotApplicable { reason: String },
    Checked { m: f64, constant: f64, points: Vec<MomentPoint>, passed: bool },
}

/// Checks `E|y(t)|^m <= C (1+t)^m (1+|x0|^m)` at `t = T/4, T/2, T` with the
/// surrogate constant `C = (1 + |b|_inf + |sigma|_inf sqrt(m))^m`. Paths are
/// not stopped at the exit radius.
pub fn moment_check(
    problem: &ControlProblem,
    law: &ControlLaw,
    x0: f64,
    cfg: &SimConfig,
    m: f64,
) -> Result<MomentOutcome, SimError> {
    cfg.validate()?;
    check_start(x0)?;
    let (bb, bs) = match (problem.metadata.drift_bound, problem.metadata.diffusion_bound) {
        (Some(b), Some(s)) => (b, s),
        _ => {
            return Ok(MomentOutcome::NotApplicable {
                reason: "drift or diffusion has no declared bound".to_string(),
            })
        }
    };
    let n = cfg.steps();
    let checkpoints = [n / 4, n / 2, n];
    let states = states_at_steps(problem, law, x0, cfg, &checkpoints)?;
    let constant = (1.0 + bb + bs * m.sqrt()).powf(m);
    let points: Vec<MomentPoint> = checkpoints
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let col: Vec<f64> = states[j].iter().map(|y| y.abs().powf(m)).collect();
            let (estimate, se) = mean_and_se(&col);
            let t = c as f64 * cfg.dt;
            let bound = constant * (1.0 + t).powf(m) * (1.0 + x0.abs().powf(m));
            MomentPoint { t, estimate, se, bound, margin: bound - estimate }
        })
        .collect();
    let passed = points.iter().all(|p| p.margin > 0.0);
    Ok(MomentOutcome::Checked { m, constant, points, passed })
}

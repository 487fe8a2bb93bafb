//! Control problems: coefficients, discount, control set, and Hamiltonians.

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientExpr;
use crate::error::ModelError;

/// Admissible control values. Control dimension is 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSet {
    Interval { lo: f64, hi: f64 },
    Finite { values: Vec<f64> },
}

impl ControlSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        ControlSet::Interval { lo, hi }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ControlSet::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(ModelError::field("control_set", format!("need finite lo <= hi, got [{lo}, {hi}]")));
                }
            }
            ControlSet::Finite { values } => {
                if values.is_empty() {
                    return Err(ModelError::field("control_set", "finite set must be non-empty"));
                }
                if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ModelError::field("control_set", "finite values must be finite and strictly increasing"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, u: f64) -> bool {
        match self {
            ControlSet::Interval { lo, hi } => *lo <= u && u <= *hi,
            ControlSet::Finite { values } => values.binary_search_by(|v| v.total_cmp(&u)).is_ok(),
        }
    }

    /// Smallest and largest admissible control.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ControlSet::Interval { lo, hi } => (*lo, *hi),
            ControlSet::Finite { values } => (values[0], values[values.len() - 1]),
        }
    }
}

/// Finite, strictly increasing subset of the control set over which
/// Hamiltonians are minimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    points: Vec<f64>,
}

impl ControlGrid {
    pub fn new(points: Vec<f64>, set: &ControlSet) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::field("controls", "control grid must be non-empty"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::field("controls", "control grid must be strictly increasing"));
        }
        if let Some(u) = points.iter().find(|u| !set.contains(**u)) {
            return Err(ModelError::ControlOutOfDomain { u: *u });
        }
        Ok(ControlGrid { points })
    }

    /// `k` equispaced points of an interval set (both ends included), or the
    /// whole finite set.
    pub fn uniform(set: &ControlSet, k: usize) -> Result<Self, ModelError> {
        set.validate()?;
        match set {
            ControlSet::Interval { lo, hi } => {
                if k == 0 {
                    return Err(ModelError::field("controls", "K must be at least 1"));
                }
                if k == 1 || lo == hi {
                    return ControlGrid::new(vec![*lo], set);
                }
                let mut pts: Vec<f64> =
                    (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect();
                pts[k - 1] = *hi;
                ControlGrid::new(pts, set)
            }
            ControlSet::Finite { values } => ControlGrid::new(values.clone(), set),
        }
    }

    /// Grid with every midpoint inserted (`K -> 2K - 1`); a finite control
    /// set has nothing to refine.
    pub fn refined(&self, set: &ControlSet) -> Result<Self, ModelError> {
        match set {
            ControlSet::Finite { .. } => Ok(self.clone()),
            ControlSet::Interval { .. } => {
                let mut pts = Vec::with_capacity(2 * self.points.len() - 1);
                for w in self.points.windows(2) {
                    pts.push(w[0]);
                    pts.push(0.5 * (w[0] + w[1]));
                }
                pts.push(self.points[self.points.len() - 1]);
                ControlGrid::new(pts, set)
            }
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.points[index]
    }
}

/// A coefficient of the form `state(x) + control(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableCoeff {
    #[serde(default = "zero_expr")]
    pub state: CoefficientExpr,
    #[serde(default = "zero_expr")]
    pub control: CoefficientExpr,
}

fn zero_expr() -> CoefficientExpr {
    CoefficientExpr::Constant(0.0)
}

impl SeparableCoeff {
    pub fn new(state: CoefficientExpr, control: CoefficientExpr) -> Self {
        SeparableCoeff { state, control }
    }

    pub fn state_only(state: CoefficientExpr) -> Self {
        SeparableCoeff { state, control: zero_expr() }
    }

    pub fn constant(c: f64) -> Self {
        Self::state_only(CoefficientExpr::Constant(c))
    }

    #[inline]
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        self.state.eval(x) + self.control.eval(u)
    }

    /// Range over all states and controls in `[u_lo, u_hi]`.
    pub fn range(&self, u_lo: f64, u_hi: f64) -> Option<(f64, f64)> {
        let (a, b) = self.state.range_on(f64::NEG_INFINITY, f64::INFINITY)?;
        let (c, d) = self.control.range_on(u_lo, u_hi)?;
        Some((a + c, b + d))
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        self.state
            .validate()
            .and_then(|_| self.control.validate())
            .map_err(|e| ModelError::field(name, e.to_string()))
    }
}

/// `|l(x, u)| <= c * (1 + |x|^m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthBound {
    pub c: f64,
    pub m: f64,
}

impl GrowthBound {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.c * (1.0 + x.abs().powf(self.m))
    }
}

/// Declared model constants. Bounds are spot-checked at evaluation time, not
/// proven.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemMetadata {
    #[serde(default = "one")]
    pub state_dim: usize,
    /// Lower bound `lambda` on `|sigma(x, u)|`.
    pub ellipticity: f64,
    /// Skips the ellipticity check; only meant for deterministic test dynamics.
    #[serde(default)]
    pub allow_degenerate: bool,
    #[serde(default)]
    pub drift_bound: Option<f64>,
    #[serde(default)]
    pub diffusion_bound: Option<f64>,
    /// `sup |l|`, when the running cost is bounded.
    #[serde(default)]
    pub cost_bound: Option<f64>,
    pub growth: GrowthBound,
}

fn one() -> usize {
    1
}

/// Infinite-horizon discounted control problem
/// `min E int_0^inf e^{-rho t} l(y, u) dt`, `dy = b(y, u) dt + sigma(y, u) dW`.
///
/// The JSON problem file has exactly the fields of this struct; unknown fields
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct ControlProblem {
    pub rho: f64,
    pub control_set: ControlSet,
    pub drift: SeparableCoeff,
    pub diffusion: SeparableCoeff,
    pub cost: SeparableCoeff,
    pub metadata: ProblemMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    rho: f64,
    control_set: ControlSet,
    drift: SeparableCoeff,
    diffusion: SeparableCoeff,
    cost: SeparableCoeff,
    metadata: ProblemMetadata,
}

impl TryFrom<ProblemFile> for ControlProblem {
    type Error = ModelError;

    fn try_from(f: ProblemFile) -> Result<Self, ModelError> {
        ControlProblem::new(f.rho, f.control_set, f.drift, f.diffusion, f.cost, f.metadata)
    }
}

impl From<ControlProblem> for ProblemFile {
    fn from(p: ControlProblem) -> Self {
        ProblemFile {
            rho: p.rho,
            control_set: p.control_set,
            drift: p.drift,
            diffusion: p.diffusion,
            cost: p.cost,
            metadata: p.metadata,
        }
    }
}

impl ControlProblem {
    pub fn new(
        rho: f64,
        control_set: ControlSet,
        drift: SeparableCoeff,
        diffusion: SeparableCoeff,
        cost: SeparableCoeff,
        metadata: ProblemMetadata,
    ) -> Result<Self, ModelError> {
        let p = ControlProblem { rho, control_set, drift, diffusion, cost, metadata };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(ModelError::field("rho", format!("discount must be positive, got {}", self.rho)));
        }
        self.control_set.validate()?;
        self.drift.validate("drift")?;
        self.diffusion.validate("diffusion")?;
        self.cost.validate("cost")?;
        let m = &self.metadata;
        if m.state_dim != 1 {
            return Err(ModelError::field("metadata.state_dim", "only state dimension 1 is supported"));
        }
        if !m.allow_degenerate && !(m.ellipticity.is_finite() && m.ellipticity > 0.0) {
            return Err(ModelError::field("metadata.ellipticity", "lambda must be positive"));
        }
        if !(m.growth.c > 0.0 && m.growth.m >= 0.0) {
            return Err(ModelError::field("metadata.growth", "need c > 0 and m >= 0"));
        }
        for (name, bound) in [
            ("metadata.drift_bound", m.drift_bound),
            ("metadata.diffusion_bound", m.diffusion_bound),
            ("metadata.cost_bound", m.cost_bound),
        ] {
            if let Some(b) = bound {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(ModelError::field(name, "bound must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn check_control(&self, u: f64) -> Result<(), ModelError> {
        if self.control_set.contains(u) {
            Ok(())
        } else {
            Err(ModelError::ControlOutOfDomain { u })
        }
    }

    #[inline]
    pub fn eval_drift(&self, x: f64, u: f64) -> Result<f64, ModelError> {
        self.check_control(u)?;
        let b = self.drift.eval(x, u);
        if !b.is_finite() {
            return Err(ModelError::NonFinite { x, u });
        }
        Ok(b)
    }

    #[inline]
    pub fn eval_diffusion(&self, x: f64, u: f64) -> Result<f64, ModelError> {
        self.check_control(u)?;
        let s = self.diffusion.eval(x, u);
        if !s.is_finite() {
            return Err(ModelError::NonFinite { x, u });
        }
        let lambda = self.metadata.ellipticity;
        if !self.metadata.allow_degenerate && s.abs() < lambda {
            return Err(ModelError::Ellipticity { x, u, value: s.abs(), lambda });
        }
        Ok(s)
    }

    #[inline]
    pub fn eval_cost(&self, x: f64, u: f64) -> Result<f64, ModelError> {
        self.check_control(u)?;
        let l = self.cost.eval(x, u);
        if !l.is_finite() {
            return Err(ModelError::NonFinite { x, u });
        }
        let bound = self.metadata.growth.at(x);
        if l.abs() > bound * (1.0 + 1e-12) {
            return Err(ModelError::Growth { x, u, value: l.abs(), bound });
        }
        Ok(l)
    }

    /// `(b, sigma, l)` at `(x, u)` with all checks applied.
    #[inline]
    pub fn coefficients(&self, x: f64, u: f64) -> Result<(f64, f64, f64), ModelError> {
        Ok((self.eval_drift(x, u)?, self.eval_diffusion(x, u)?, self.eval_cost(x, u)?))
    }

    /// Current value Hamiltonian `b p + sigma^2 Z / 2 + l`.
    pub fn hamiltonian_cv(&self, x: f64, p: f64, z: f64, u: f64) -> Result<f64, ModelError> {
        let (b, s, l) = self.coefficients(x, u)?;
        Ok(b * p + 0.5 * s * s * z + l)
    }

    /// Minimum of the current value Hamiltonian over the control grid, with
    /// the smallest minimizing index.
    pub fn hamiltonian_min(&self, x: f64, p: f64, z: f64, grid: &ControlGrid) -> Result<(f64, usize), ModelError> {
        let mut best = (f64::INFINITY, 0);
        for (j, &u) in grid.points().iter().enumerate() {
            let h = self.hamiltonian_cv(x, p, z, u)?;
            if h < best.0 {
                best = (h, j);
            }
        }
        Ok(best)
    }

    /// Sorted breakpoints of every state-dependent coefficient part.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = [&self.drift.state, &self.diffusion.state, &self.cost.state]
            .iter()
            .flat_map(|e| e.breakpoints())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// `sup |l| / rho` when the cost is bounded.
    pub fn value_bound(&self) -> Option<f64> {
        self.metadata.cost_bound.map(|c| c / self.rho)
    }

    pub fn has_bounded_dynamics(&self) -> bool {
        self.metadata.drift_bound.is_some() && self.metadata.diffusion_bound.is_some()
    }
}

/// Parameters of the goodwill advertising model
/// `dy = [a(y) + c u] dt + [nu(y) + gamma u] dW`, cost `h(u) - g(y)`,
/// controls in `[0, u_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvertisingParams {
    /// Goodwill deterioration, non-positive and bounded.
    pub a: CoefficientExpr,
    /// Investment effectiveness.
    pub c: f64,
    /// Baseline noise intensity, bounded below by `delta`.
    pub nu: CoefficientExpr,
    pub gamma: f64,
    pub u_max: f64,
    /// Investment cost as a function of the rate.
    pub h: CoefficientExpr,
    /// Utility of goodwill, bounded.
    pub g: CoefficientExpr,
    pub rho: f64,
    pub delta: f64,
}

impl AdvertisingParams {
    /// Default demo instance: deterioration doubles above goodwill 1, utility
    /// jumps at goodwill 0.5, quadratic investment cost.
    pub fn demo() -> Self {
        AdvertisingParams {
            a: CoefficientExpr::step(1.0, -0.3, -0.6).expect("valid step"),
            c: 1.0,
            nu: CoefficientExpr::constant(0.4),
            gamma: 0.1,
            u_max: 1.0,
            h: CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0]),
            g: CoefficientExpr::step(0.5, 0.0, 1.0).expect("valid step"),
            rho: 0.5,
            delta: 0.4,
        }
    }
}

const REAL_LINE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

pub fn make_advertising_problem(params: &AdvertisingParams) -> Result<ControlProblem, ModelError> {
    let p = params;
    for (name, v) in [("c", p.c), ("u_max", p.u_max), ("rho", p.rho), ("delta", p.delta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::field(name, format!("must be positive, got {v}")));
        }
    }
    if !(p.gamma.is_finite() && p.gamma >= 0.0) {
        return Err(ModelError::field("gamma", format!("must be non-negative, got {}", p.gamma)));
    }
    let a_range = p
        .a
        .range_on(REAL_LINE.0, REAL_LINE.1)
        .ok_or_else(|| ModelError::field("a", "must be bounded"))?;
    if a_range.1 > 0.0 {
        return Err(ModelError::field("a", format!("must be non-positive, max is {}", a_range.1)));
    }
    let nu_range = p
        .nu
        .range_on(REAL_LINE.0, REAL_LINE.1)
        .ok_or_else(|| ModelError::field("nu", "must be bounded"))?;
    if nu_range.0 < p.delta {
        return Err(ModelError::field("nu", format!("must be >= delta = {}, min is {}", p.delta, nu_range.0)));
    }
    let h_range = p
        .h
        .range_on(0.0, p.u_max)
        .ok_or_else(|| ModelError::field("h", "must be bounded on [0, u_max]"))?;
    let g_range = p
        .g
        .range_on(REAL_LINE.0, REAL_LINE.1)
        .ok_or_else(|| ModelError::field("g", "must be bounded"))?;

    let drift_bound = a_range.0.abs().max((a_range.1 + p.c * p.u_max).abs());
    let diffusion_bound = nu_range.1 + p.gamma * p.u_max;
    let cost_bound = (h_range.1 - g_range.0).abs().max((h_range.0 - g_range.1).abs());
    let metadata = ProblemMetadata {
        state_dim: 1,
        ellipticity: p.delta,
        allow_degenerate: false,
        drift_bound: Some(drift_bound),
        diffusion_bound: Some(diffusion_bound),
        cost_bound: Some(cost_bound),
        growth: GrowthBound { c: cost_bound.max(f64::MIN_POSITIVE), m: 0.0 },
    };
    ControlProblem::new(
        p.rho,
        ControlSet::interval(0.0, p.u_max),
        SeparableCoeff::new(p.a.clone(), CoefficientExpr::polynomial(vec![0.0, p.c])),
        SeparableCoeff::new(p.nu.clone(), CoefficientExpr::polynomial(vec![0.0, p.gamma])),
        SeparableCoeff::new(p.g.negated(), p.h.clone()),
        metadata,
    )
}

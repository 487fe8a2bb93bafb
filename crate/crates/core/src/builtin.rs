//! Built-in problems with their default solve settings.

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientExpr;
use crate::problem::{
    make_advertising_problem, AdvertisingParams, ControlProblem, ControlSet, GrowthBound, ProblemMetadata,
    SeparableCoeff,
};

/// Default solve grid for a problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug)]
pub struct Builtin {
    pub name: &'static str,
    pub problem: ControlProblem,
    pub grid: GridSpec,
    pub controls: usize,
}

pub const BUILTIN_NAMES: [&str; 3] = ["constant-unit-cost", "ou-quadratic", "advertising"];

/// `b = 0`, `sigma = 1`, `l = 1`, `rho = 0.5`; the value is `1 / rho = 2`.
pub fn constant_unit_cost() -> Builtin {
    let problem = ControlProblem::new(
        0.5,
        ControlSet::interval(0.0, 1.0),
        SeparableCoeff::constant(0.0),
        SeparableCoeff::constant(1.0),
        SeparableCoeff::constant(1.0),
        ProblemMetadata {
            state_dim: 1,
            ellipticity: 1.0,
            allow_degenerate: false,
            drift_bound: Some(0.0),
            diffusion_bound: Some(1.0),
            cost_bound: Some(1.0),
            growth: GrowthBound { c: 1.0, m: 0.0 },
        },
    )
    .expect("valid builtin");
    Builtin {
        name: "constant-unit-cost",
        problem,
        grid: GridSpec { x_lo: -2.0, x_hi: 2.0, nodes: 201 },
        controls: 5,
    }
}

/// Uncontrolled Ornstein–Uhlenbeck process `b = -x/2` (clipped at +-10),
/// `sigma = 1`, `l = x^2`, `rho = 1`; the value is `x^2 / 2 + 1 / 2`.
pub fn ou_quadratic() -> Builtin {
    let problem = ControlProblem::new(
        1.0,
        ControlSet::Finite { values: vec![0.0] },
        SeparableCoeff::state_only(CoefficientExpr::clipped(vec![0.0, -0.5], -10.0, 10.0).expect("valid clip")),
        SeparableCoeff::constant(1.0),
        SeparableCoeff::state_only(CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0])),
        ProblemMetadata {
            state_dim: 1,
            ellipticity: 1.0,
            allow_degenerate: false,
            drift_bound: Some(10.0),
            diffusion_bound: Some(1.0),
            cost_bound: None,
            growth: GrowthBound { c: 1.0, m: 2.0 },
        },
    )
    .expect("valid builtin");
    Builtin {
        name: "ou-quadratic",
        problem,
        grid: GridSpec { x_lo: -6.0, x_hi: 6.0, nodes: 4001 },
        controls: 1,
    }
}

/// Closed-form value of [`ou_quadratic`].
pub fn ou_quadratic_value(x: f64) -> f64 {
    0.5 * x * x + 0.5
}

/// The goodwill advertising demo with [`AdvertisingParams::demo`].
pub fn advertising() -> Builtin {
    Builtin {
        name: "advertising",
        problem: make_advertising_problem(&AdvertisingParams::demo()).expect("valid builtin"),
        grid: GridSpec { x_lo: -4.0, x_hi: 6.0, nodes: 2001 },
        controls: 41,
    }
}

pub fn builtin(name: &str) -> Option<Builtin> {
    match name {
        "constant-unit-cost" => Some(constant_unit_cost()),
        "ou-quadratic" => Some(ou_quadratic()),
        "advertising" | "demo-advertising" => Some(advertising()),
        _ => None,
    }
}

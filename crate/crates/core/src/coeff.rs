//! Serializable scalar coefficient expressions.
//!
//! A coefficient is one of three kinds: a constant, a polynomial clipped to a
//! range `[lo, hi]`, or a piecewise expression whose pieces partition the real
//! line into left-closed/right-open intervals. Piecewise coefficients may jump
//! at their breakpoints; the value *at* a breakpoint is the value of the piece
//! to its right.
//!
//! JSON form (tagged by `kind`, infinite bounds written as `null`):
//!
//! ```text
//! {"kind": "constant", "value": 0.3}
//! {"kind": "polynomial-clipped", "coefficients": [0.0, -0.5], "lo": -10.0, "hi": 10.0}
//! {"kind": "piecewise", "pieces": [
//!     {"from": null, "to": 1.0, "expr": {"kind": "constant", "value": -0.3}},
//!     {"from": 1.0, "to": null, "expr": {"kind": "constant", "value": -0.6}}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Number of samples used when bounding a polynomial over a bounded interval.
const RANGE_SAMPLES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExpr", into = "RawExpr")]
pub enum CoefficientExpr {
    Constant(f64),
    /// `clamp(sum_k coefficients[k] * x^k, lo, hi)`; `lo`/`hi` may be infinite.
    PolynomialClipped { coefficients: Vec<f64>, lo: f64, hi: f64 },
    Piecewise(Vec<Piece>),
}

/// One piece of a piecewise coefficient, active on `[from, to)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub from: f64,
    pub to: f64,
    pub expr: CoefficientExpr,
}

/// Flattened form for hot loops: piecewise-constant expressions become a
/// breakpoint table evaluated without recursion.
#[derive(Clone, Debug)]
pub(crate) enum CompiledExpr {
    Constant(f64),
    Steps { ends: Vec<f64>, values: Vec<f64> },
    General(CoefficientExpr),
}

impl CompiledExpr {
    pub(crate) fn new(expr: &CoefficientExpr) -> Self {
        match expr {
            CoefficientExpr::Constant(c) => CompiledExpr::Constant(*c),
            CoefficientExpr::Piecewise(pieces) if pieces.iter().all(|p| matches!(p.expr, CoefficientExpr::Constant(_))) => {
                let ends = pieces[..pieces.len() - 1].iter().map(|p| p.to).collect();
                let values = pieces
                    .iter()
                    .map(|p| match p.expr {
                        CoefficientExpr::Constant(c) => c,
                        _ => unreachable!(),
                    })
                    .collect();
                CompiledExpr::Steps { ends, values }
            }
            other => CompiledExpr::General(other.clone()),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match self {
            CompiledExpr::Constant(c) => *c,
            CompiledExpr::Steps { ends, values } => values[ends.iter().filter(|&&e| e <= x).count()],
            CompiledExpr::General(e) => e.eval(x),
        }
    }
}

impl CoefficientExpr {
    pub fn constant(value: f64) -> Self {
        CoefficientExpr::Constant(value)
    }

    /// Unclipped polynomial with coefficients in increasing degree.
    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        CoefficientExpr::PolynomialClipped {
            coefficients,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn clipped(coefficients: Vec<f64>, lo: f64, hi: f64) -> Result<Self, ModelError> {
        let expr = CoefficientExpr::PolynomialClipped { coefficients, lo, hi };
        expr.validate()?;
        Ok(expr)
    }

    /// Piecewise expression from interior breakpoints `b_0 < b_1 < ...` and
    /// `breakpoints.len() + 1` pieces.
    pub fn piecewise(breakpoints: &[f64], exprs: Vec<CoefficientExpr>) -> Result<Self, ModelError> {
        if exprs.len() != breakpoints.len() + 1 {
            return Err(ModelError::field(
                "pieces",
                format!("{} breakpoints need {} pieces, got {}", breakpoints.len(), breakpoints.len() + 1, exprs.len()),
            ));
        }
        let mut pieces = Vec::with_capacity(exprs.len());
        for (j, expr) in exprs.into_iter().enumerate() {
            let from = if j == 0 { f64::NEG_INFINITY } else { breakpoints[j - 1] };
            let to = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
            pieces.push(Piece { from, to, expr });
        }
        let expr = CoefficientExpr::Piecewise(pieces);
        expr.validate()?;
        Ok(expr)
    }

    /// Two-valued step: `left` for `x < at`, `right` for `x >= at`.
    pub fn step(at: f64, left: f64, right: f64) -> Result<Self, ModelError> {
        Self::piecewise(&[at], vec![Self::constant(left), Self::constant(right)])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            CoefficientExpr::Constant(c) => {
                if !c.is_finite() {
                    return Err(ModelError::field("value", "constant must be finite"));
                }
            }
            CoefficientExpr::PolynomialClipped { coefficients, lo, hi } => {
                if coefficients.is_empty() {
                    return Err(ModelError::field("coefficients", "must be non-empty"));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(ModelError::field("coefficients", "must be finite"));
                }
                if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                    return Err(ModelError::field("lo/hi", format!("invalid clip range [{lo}, {hi}]")));
                }
            }
            CoefficientExpr::Piecewise(pieces) => {
                let (first, last) = match (pieces.first(), pieces.last()) {
                    (Some(f), Some(l)) => (f, l),
                    _ => return Err(ModelError::field("pieces", "must be non-empty")),
                };
                if first.from != f64::NEG_INFINITY {
                    return Err(ModelError::field("pieces", "first piece must start at -infinity"));
                }
                if last.to != f64::INFINITY {
                    return Err(ModelError::field("pieces", "last piece must extend to +infinity"));
                }
                for (j, piece) in pieces.iter().enumerate() {
                    if !(piece.from < piece.to) {
                        return Err(ModelError::field("pieces", format!("piece {j} has empty interval")));
                    }
                    if j > 0 && pieces[j - 1].to != piece.from {
                        return Err(ModelError::field(
                            "pieces",
                            format!("pieces {} and {j} do not share an endpoint", j - 1),
                        ));
                    }
                    piece.expr.validate()?;
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CoefficientExpr::Constant(c) => *c,
            CoefficientExpr::PolynomialClipped { coefficients, lo, hi } => {
                let raw = coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c);
                raw.clamp(*lo, *hi)
            }
            CoefficientExpr::Piecewise(pieces) => {
                // first piece whose right end lies strictly beyond x
                let j = if pieces.len() <= 8 {
                    pieces[..pieces.len() - 1].iter().take_while(|p| p.to <= x).count()
                } else {
                    pieces.partition_point(|p| p.to <= x).min(pieces.len() - 1)
                };
                match &pieces[j].expr {
                    CoefficientExpr::Constant(c) => *c,
                    e => e.eval(x),
                }
            }
        }
    }

    /// All finite breakpoints where the expression may be discontinuous, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(f64::NEG_INFINITY, f64::INFINITY, &mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        if let CoefficientExpr::Piecewise(pieces) = self {
            for piece in pieces {
                let from = piece.from.max(lo);
                let to = piece.to.min(hi);
                if from >= to {
                    continue;
                }
                if piece.from.is_finite() && piece.from > lo {
                    out.push(piece.from);
                }
                piece.expr.collect_breakpoints(from, to, out);
            }
        }
    }

    /// The expression `-self`, kept within the same three kinds.
    pub fn negated(&self) -> Self {
        match self {
            CoefficientExpr::Constant(c) => CoefficientExpr::Constant(-c),
            CoefficientExpr::PolynomialClipped { coefficients, lo, hi } => CoefficientExpr::PolynomialClipped {
                coefficients: coefficients.iter().map(|c| -c).collect(),
                lo: -hi,
                hi: -lo,
            },
            CoefficientExpr::Piecewise(pieces) => CoefficientExpr::Piecewise(
                pieces
                    .iter()
                    .map(|p| Piece { from: p.from, to: p.to, expr: p.expr.negated() })
                    .collect(),
            ),
        }
    }

    /// Range `(min, max)` of the expression over `[lo, hi]`, or `None` when it
    /// is unbounded there. Polynomials on bounded intervals are bounded by
    /// dense sampling, which is exact for the monotone and convex shapes used
    /// in practice and approximate otherwise.
    pub fn range_on(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        match self {
            CoefficientExpr::Constant(c) => Some((*c, *c)),
            CoefficientExpr::PolynomialClipped { coefficients, lo: clo, hi: chi } => {
                if coefficients.len() == 1 {
                    let c = coefficients[0].clamp(*clo, *chi);
                    return Some((c, c));
                }
                if lo.is_finite() && hi.is_finite() {
                    let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
                    for k in 0..=RANGE_SAMPLES {
                        let x = lo + (hi - lo) * k as f64 / RANGE_SAMPLES as f64;
                        let v = self.eval(x);
                        mn = mn.min(v);
                        mx = mx.max(v);
                    }
                    Some((mn, mx))
                } else if clo.is_finite() && chi.is_finite() {
                    Some((*clo, *chi))
                } else {
                    None
                }
            }
            CoefficientExpr::Piecewise(pieces) => {
                let mut acc: Option<(f64, f64)> = None;
                for piece in pieces {
                    let from = piece.from.max(lo);
                    let to = piece.to.min(hi);
                    if from > to || (from == to && piece.to <= from) {
                        continue;
                    }
                    let (a, b) = piece.expr.range_on(from, to)?;
                    acc = Some(match acc {
                        None => (a, b),
                        Some((mn, mx)) => (mn.min(a), mx.max(b)),
                    });
                }
                acc
            }
        }
    }

    /// `sup |expr|` over `[lo, hi]`, if bounded.
    pub fn sup_abs_on(&self, lo: f64, hi: f64) -> Option<f64> {
        self.range_on(lo, hi).map(|(a, b)| a.abs().max(b.abs()))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CoefficientExpr::Constant(c) if *c == 0.0)
    }
}

// Wire representation: explicit `null` for infinite bounds.

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawExpr {
    Constant {
        value: f64,
    },
    PolynomialClipped {
        coefficients: Vec<f64>,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
    Piecewise {
        pieces: Vec<RawPiece>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    from: Option<f64>,
    to: Option<f64>,
    expr: CoefficientExpr,
}

fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl TryFrom<RawExpr> for CoefficientExpr {
    type Error = ModelError;

    fn try_from(raw: RawExpr) -> Result<Self, Self::Error> {
        let expr = match raw {
            RawExpr::Constant { value } => CoefficientExpr::Constant(value),
            RawExpr::PolynomialClipped { coefficients, lo, hi } => CoefficientExpr::PolynomialClipped {
                coefficients,
                lo: lo.unwrap_or(f64::NEG_INFINITY),
                hi: hi.unwrap_or(f64::INFINITY),
            },
            RawExpr::Piecewise { pieces } => CoefficientExpr::Piecewise(
                pieces
                    .into_iter()
                    .map(|p| Piece {
                        from: p.from.unwrap_or(f64::NEG_INFINITY),
                        to: p.to.unwrap_or(f64::INFINITY),
                        expr: p.expr,
                    })
                    .collect(),
            ),
        };
        expr.validate()?;
        Ok(expr)
    }
}

impl From<CoefficientExpr> for RawExpr {
    fn from(expr: CoefficientExpr) -> Self {
        match expr {
            CoefficientExpr::Constant(value) => RawExpr::Constant { value },
            CoefficientExpr::PolynomialClipped { coefficients, lo, hi } => RawExpr::PolynomialClipped {
                coefficients,
                lo: finite_or_null(lo),
                hi: finite_or_null(hi),
            },
            CoefficientExpr::Piecewise(pieces) => RawExpr::Piecewise {
                pieces: pieces
                    .into_iter()
                    .map(|p| RawPiece { from: finite_or_null(p.from), to: finite_or_null(p.to), expr: p.expr })
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn piecewise_is_left_closed() {
        let a = CoefficientExpr::step(0.0, -1.0, -2.0).unwrap();
        assert_eq!(a.eval(-0.1), -1.0);
        assert_eq!(a.eval(0.0), -2.0);
        assert_eq!(a.eval(5.0), -2.0);
        assert_eq!(a.breakpoints(), vec![0.0]);
    }

    #[test]
    fn rejects_gaps_and_bad_ends() {
        let gap = RawExpr::Piecewise {
            pieces: vec![
                RawPiece { from: None, to: Some(0.0), expr: CoefficientExpr::constant(1.0) },
                RawPiece { from: Some(0.5), to: None, expr: CoefficientExpr::constant(2.0) },
            ],
        };
        assert!(CoefficientExpr::try_from(gap).is_err());
        let open_end = RawExpr::Piecewise {
            pieces: vec![RawPiece { from: None, to: Some(0.0), expr: CoefficientExpr::constant(1.0) }],
        };
        assert!(CoefficientExpr::try_from(open_end).is_err());
        assert!(CoefficientExpr::clipped(vec![1.0], 2.0, 1.0).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let json = r#"{"kind":"piecewise","pieces":[
            {"from":null,"to":1.0,"expr":{"kind":"constant","value":-0.3}},
            {"from":1.0,"to":null,"expr":{"kind":"polynomial-clipped","coefficients":[0.0,2.0],"lo":-1.0,"hi":null}}]}"#;
        let e: CoefficientExpr = serde_json::from_str(json).unwrap();
        assert_eq!(e.eval(0.0), -0.3);
        assert_eq!(e.eval(2.0), 4.0);
        let back: CoefficientExpr = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
        let bad = r#"{"kind":"constant","value":1.0,"extra":3}"#;
        assert!(serde_json::from_str::<CoefficientExpr>(bad).is_err());
    }

    #[test]
    fn ranges() {
        let h = CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0]);
        assert_eq!(h.range_on(0.0, 1.0), Some((0.0, 1.0)));
        assert_eq!(h.range_on(f64::NEG_INFINITY, 0.0), None);
        let g = CoefficientExpr::step(0.5, 0.0, 1.0).unwrap();
        assert_eq!(g.range_on(f64::NEG_INFINITY, f64::INFINITY), Some((0.0, 1.0)));
        assert_eq!(g.range_on(-3.0, 0.2), Some((0.0, 0.0)));
        assert_eq!(g.negated().range_on(f64::NEG_INFINITY, f64::INFINITY), Some((-1.0, 0.0)));
    }

    proptest! {
        #[test]
        fn clipped_stays_in_range(c0 in -5.0..5.0f64, c1 in -5.0..5.0f64, c2 in -5.0..5.0f64,
                                  lo in -3.0..0.0f64, w in 0.0..4.0f64, x in -100.0..100.0f64) {
            let e = CoefficientExpr::clipped(vec![c0, c1, c2], lo, lo + w).unwrap();
            let v = e.eval(x);
            prop_assert!(v >= lo && v <= lo + w);
        }

        #[test]
        fn negation_is_pointwise(x in -10.0..10.0f64, at in -2.0..2.0f64, l in -3.0..3.0f64, r in -3.0..3.0f64) {
            let e = CoefficientExpr::piecewise(&[at], vec![
                CoefficientExpr::constant(l),
                CoefficientExpr::clipped(vec![r, 1.0], -4.0, 4.0).unwrap(),
            ]).unwrap();
            prop_assert_eq!(e.negated().eval(x), -e.eval(x));
        }
    }
}

use serde::{Deserialize, Serialize};

use super::domain::MetricModel;
use crate::error::{Error, Result};

/// Expression tree of a continuous function on a [`MetricModel`].
///
/// `Add`, `Min` and `Max` are n-ary; `Pl` composes a piecewise-linear
/// univariate map (constant beyond the outer knots) with its argument;
/// `DistTo` is the model distance to a fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExprJson", try_from = "ExprJson")]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    Abs(Box<Expr>),
    Clamp { arg: Box<Expr>, lo: f64, hi: f64 },
    Pl { arg: Box<Expr>, knots: Vec<(f64, f64)> },
    DistTo(Vec<f64>),
}

/// Interval enclosure of an expression over the model bounds together with
/// its structural Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    pub lo: f64,
    pub hi: f64,
    pub lip: f64,
}

impl Analysis {
    pub fn sup_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

pub fn constant(c: f64) -> Expr {
    Expr::Const(c)
}

pub fn coord(i: usize) -> Expr {
    Expr::Coord(i)
}

pub fn add(a: Expr, b: Expr) -> Expr {
    Expr::Add(vec![a, b])
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(Box::new(a), Box::new(b))
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Mul(Box::new(a), Box::new(b))
}

pub fn min2(a: Expr, b: Expr) -> Expr {
    Expr::Min(vec![a, b])
}

pub fn max2(a: Expr, b: Expr) -> Expr {
    Expr::Max(vec![a, b])
}

pub fn abs(a: Expr) -> Expr {
    Expr::Abs(Box::new(a))
}

pub fn clamp(a: Expr, lo: f64, hi: f64) -> Expr {
    Expr::Clamp { arg: Box::new(a), lo, hi }
}

pub fn pl(a: Expr, knots: Vec<(f64, f64)>) -> Expr {
    Expr::Pl { arg: Box::new(a), knots }
}

pub fn dist_to(p: Vec<f64>) -> Expr {
    Expr::DistTo(p)
}

fn pl_eval(knots: &[(f64, f64)], x: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    // left knot <= x < right knot, so a knot abscissa maps to its ordinate exactly
    let i = knots.partition_point(|k| k.0 <= x) - 1;
    let (x0, y0) = knots[i];
    let (x1, y1) = knots[i + 1];
    y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
}

fn pl_max_slope(knots: &[(f64, f64)]) -> f64 {
    knots.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max)
}

impl Expr {
    pub fn eval(&self, x: &[f64], model: &MetricModel) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => x[*i],
            Expr::Add(args) => args.iter().map(|a| a.eval(x, model)).sum(),
            Expr::Sub(a, b) => a.eval(x, model) - b.eval(x, model),
            Expr::Mul(a, b) => a.eval(x, model) * b.eval(x, model),
            Expr::Min(args) => args.iter().map(|a| a.eval(x, model)).fold(f64::INFINITY, f64::min),
            Expr::Max(args) => args.iter().map(|a| a.eval(x, model)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Abs(a) => a.eval(x, model).abs(),
            Expr::Clamp { arg, lo, hi } => arg.eval(x, model).clamp(*lo, *hi),
            Expr::Pl { arg, knots } => pl_eval(knots, arg.eval(x, model)),
            Expr::DistTo(p) => model.dist_unchecked(x, p),
        }
    }

    pub fn validate(&self, model: &MetricModel) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedExpression(m));
        match self {
            Expr::Const(c) if !c.is_finite() => bad(format!("non-finite constant {c}")),
            Expr::Const(_) => Ok(()),
            Expr::Coord(i) if *i >= model.dim() => {
                bad(format!("coordinate {i} out of range for dimension {}", model.dim()))
            }
            Expr::Coord(_) => Ok(()),
            Expr::Add(args) | Expr::Min(args) | Expr::Max(args) => {
                if args.is_empty() {
                    return bad("n-ary node without arguments".into());
                }
                args.iter().try_for_each(|a| a.validate(model))
            }
            Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.validate(model)?;
                b.validate(model)
            }
            Expr::Abs(a) => a.validate(model),
            Expr::Clamp { arg, lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return bad(format!("clamp bounds [{lo}, {hi}]"));
                }
                arg.validate(model)
            }
            Expr::Pl { arg, knots } => {
                if knots.is_empty() {
                    return bad("piecewise-linear node without knots".into());
                }
                if knots.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
                    return bad("non-finite knot".into());
                }
                if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return bad("knot abscissae must be strictly increasing".into());
                }
                arg.validate(model)
            }
            Expr::DistTo(p) => {
                if p.len() != model.dim() {
                    return Err(Error::DimensionMismatch { expected: model.dim(), got: p.len() });
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite anchor point".into());
                }
                Ok(())
            }
        }
    }

    /// Interval evaluation over the model bounds plus structural Lipschitz
    /// constant. Never underestimates either quantity (up to rounding).
    pub fn analyze(&self, model: &MetricModel) -> Result<Analysis> {
        let a = self.analyze_inner(model)?;
        if a.lo.is_finite() && a.hi.is_finite() && a.lip.is_finite() {
            Ok(a)
        } else {
            Err(Error::UnboundedExpression)
        }
    }

    fn analyze_inner(&self, model: &MetricModel) -> Result<Analysis> {
        Ok(match self {
            Expr::Const(c) => Analysis { lo: *c, hi: *c, lip: 0.0 },
            Expr::Coord(i) => {
                let b = model.bounds();
                Analysis { lo: b.lo()[*i], hi: b.hi()[*i], lip: model.coord_lipschitz(*i) }
            }
            Expr::Add(args) => {
                let mut acc = Analysis { lo: 0.0, hi: 0.0, lip: 0.0 };
                for a in args {
                    let r = a.analyze_inner(model)?;
                    acc = Analysis { lo: acc.lo + r.lo, hi: acc.hi + r.hi, lip: acc.lip + r.lip };
                }
                acc
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.analyze_inner(model)?, b.analyze_inner(model)?);
                Analysis { lo: a.lo - b.hi, hi: a.hi - b.lo, lip: a.lip + b.lip }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.analyze_inner(model)?, b.analyze_inner(model)?);
                let p = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
                Analysis {
                    lo: p.iter().copied().fold(f64::INFINITY, f64::min),
                    hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    lip: a.sup_abs() * b.lip + b.sup_abs() * a.lip,
                }
            }
            Expr::Min(args) | Expr::Max(args) => {
                let is_min = matches!(self, Expr::Min(_));
                let mut it = args.iter();
                let mut acc = it.next().expect("validated").analyze_inner(model)?;
                for a in it {
                    let r = a.analyze_inner(model)?;
                    acc = if is_min {
                        Analysis { lo: acc.lo.min(r.lo), hi: acc.hi.min(r.hi), lip: acc.lip.max(r.lip) }
                    } else {
                        Analysis { lo: acc.lo.max(r.lo), hi: acc.hi.max(r.hi), lip: acc.lip.max(r.lip) }
                    };
                }
                acc
            }
            Expr::Abs(a) => {
                let r = a.analyze_inner(model)?;
                let lo = if r.lo <= 0.0 && r.hi >= 0.0 { 0.0 } else { r.lo.abs().min(r.hi.abs()) };
                Analysis { lo, hi: r.sup_abs(), lip: r.lip }
            }
            Expr::Clamp { arg, lo, hi } => {
                let r = arg.analyze_inner(model)?;
                Analysis { lo: r.lo.clamp(*lo, *hi), hi: r.hi.clamp(*lo, *hi), lip: r.lip }
            }
            Expr::Pl { arg, knots } => {
                let r = arg.analyze_inner(model)?;
                let mut lo = pl_eval(knots, r.lo).min(pl_eval(knots, r.hi));
                let mut hi = pl_eval(knots, r.lo).max(pl_eval(knots, r.hi));
                for (kx, ky) in knots {
                    if *kx > r.lo && *kx < r.hi {
                        lo = lo.min(*ky);
                        hi = hi.max(*ky);
                    }
                }
                Analysis { lo, hi, lip: pl_max_slope(knots) * r.lip }
            }
            Expr::DistTo(p) => Analysis { lo: 0.0, hi: model.max_dist_from(p), lip: 1.0 },
        })
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Add(a) | Expr::Min(a) | Expr::Max(a) => a.iter().map(Expr::node_count).sum(),
            Expr::Sub(a, b) | Expr::Mul(a, b) => a.node_count() + b.node_count(),
            Expr::Abs(a) | Expr::Clamp { arg: a, .. } | Expr::Pl { arg: a, .. } => a.node_count(),
            _ => 0,
        }
    }
}

/// Wire form: `{"op": ..., "args": [...], "value": .., "coord": ..}` plus
/// `lo`/`hi` for clamp, `knots` for pl and `point` for dist_to.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprJson {
    op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    args: Vec<ExprJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coord: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knots: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<Vec<f64>>,
}

impl ExprJson {
    fn op(op: &str, args: Vec<ExprJson>) -> Self {
        ExprJson { op: op.into(), args, value: None, coord: None, lo: None, hi: None, knots: None, point: None }
    }
}

impl From<Expr> for ExprJson {
    fn from(e: Expr) -> Self {
        let many = |xs: Vec<Expr>| xs.into_iter().map(ExprJson::from).collect();
        match e {
            Expr::Const(c) => ExprJson { value: Some(c), ..ExprJson::op("const", vec![]) },
            Expr::Coord(i) => ExprJson { coord: Some(i), ..ExprJson::op("coord", vec![]) },
            Expr::Add(a) => ExprJson::op("add", many(a)),
            Expr::Sub(a, b) => ExprJson::op("sub", vec![(*a).into(), (*b).into()]),
            Expr::Mul(a, b) => ExprJson::op("mul", vec![(*a).into(), (*b).into()]),
            Expr::Min(a) => ExprJson::op("min", many(a)),
            Expr::Max(a) => ExprJson::op("max", many(a)),
            Expr::Abs(a) => ExprJson::op("abs", vec![(*a).into()]),
            Expr::Clamp { arg, lo, hi } => {
                ExprJson { lo: Some(lo), hi: Some(hi), ..ExprJson::op("clamp", vec![(*arg).into()]) }
            }
            Expr::Pl { arg, knots } => ExprJson {
                knots: Some(knots.into_iter().map(|(a, b)| [a, b]).collect()),
                ..ExprJson::op("pl", vec![(*arg).into()])
            },
            Expr::DistTo(p) => ExprJson { point: Some(p), ..ExprJson::op("dist_to", vec![]) },
        }
    }
}

impl TryFrom<ExprJson> for Expr {
    type Error = Error;
    fn try_from(j: ExprJson) -> Result<Self> {
        let bad = |m: &str| Error::MalformedExpression(format!("{}: {m}", j.op));
        let mut args = j.args.iter().cloned().map(Expr::try_from).collect::<Result<Vec<_>>>()?;
        let arity = |n: usize, args: &Vec<Expr>| {
            if args.len() == n {
                Ok(())
            } else {
                Err(bad(&format!("expected {n} argument(s), got {}", args.len())))
            }
        };
        Ok(match j.op.as_str() {
            "const" => Expr::Const(j.value.ok_or_else(|| bad("missing value"))?),
            "coord" => Expr::Coord(j.coord.ok_or_else(|| bad("missing coord"))?),
            "add" => Expr::Add(args),
            "min" => Expr::Min(args),
            "max" => Expr::Max(args),
            "sub" | "mul" => {
                arity(2, &args)?;
                let b = Box::new(args.pop().unwrap());
                let a = Box::new(args.pop().unwrap());
                if j.op == "sub" {
                    Expr::Sub(a, b)
                } else {
                    Expr::Mul(a, b)
                }
            }
            "abs" => {
                arity(1, &args)?;
                Expr::Abs(Box::new(args.pop().unwrap()))
            }
            "clamp" => {
                arity(1, &args)?;
                Expr::Clamp {
                    arg: Box::new(args.pop().unwrap()),
                    lo: j.lo.ok_or_else(|| bad("missing lo"))?,
                    hi: j.hi.ok_or_else(|| bad("missing hi"))?,
                }
            }
            "pl" => {
                arity(1, &args)?;
                let knots = j.knots.clone().ok_or_else(|| bad("missing knots"))?;
                Expr::Pl { arg: Box::new(args.pop().unwrap()), knots: knots.into_iter().map(|[a, b]| (a, b)).collect() }
            }
            "dist_to" => Expr::DistTo(j.point.clone().ok_or_else(|| bad("missing point"))?),
            other => return Err(Error::MalformedExpression(format!("unknown op `{other}`"))),
        })
    }
}

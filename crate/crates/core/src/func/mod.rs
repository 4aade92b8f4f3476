//! Continuous functions on compact metric models.

pub mod domain;
pub mod expr;
pub mod partition;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use domain::{lerp_grid, BoxDomain, MetricModel};
pub use expr::{Analysis, Expr};
pub use partition::{partition_of_unity, PartitionOfUnity, SupportedFn};

use crate::error::{Error, Result};

/// A continuous scalar function: an expression tree on a metric model with
/// a certified Lipschitz constant and sup bound computed at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawContFn")]
pub struct ContFn {
    domain: MetricModel,
    expr: Arc<Expr>,
    #[serde(skip)]
    analysis: Option<Analysis>,
}

#[derive(Deserialize)]
struct RawContFn {
    domain: MetricModel,
    expr: Expr,
}

impl TryFrom<RawContFn> for ContFn {
    type Error = Error;
    fn try_from(raw: RawContFn) -> Result<Self> {
        ContFn::new(raw.domain, raw.expr)
    }
}

impl PartialEq for ContFn {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.expr == other.expr
    }
}

impl ContFn {
    pub fn new(domain: MetricModel, expr: Expr) -> Result<Self> {
        expr.validate(&domain)?;
        let analysis = expr.analyze(&domain)?;
        Ok(ContFn { domain, expr: Arc::new(expr), analysis: Some(analysis) })
    }

    pub fn constant(domain: MetricModel, c: f64) -> Result<Self> {
        ContFn::new(domain, Expr::Const(c))
    }

    pub fn domain(&self) -> &MetricModel {
        &self.domain
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    fn analysis(&self) -> Analysis {
        self.analysis.expect("ContFn is always analyzed on construction")
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check_point(x)?;
        Ok(self.expr.eval(x, &self.domain))
    }

    /// Evaluation without the domain check (caller guarantees membership).
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.expr.eval(x, &self.domain)
    }

    /// Structural Lipschitz constant with respect to the domain metric.
    pub fn lipschitz_bound(&self) -> f64 {
        self.analysis().lip
    }

    /// Certified bound on `|f|` over the domain.
    pub fn sup_bound(&self) -> f64 {
        self.analysis().sup_abs()
    }

    /// Interval enclosure of the range over the domain.
    pub fn range(&self) -> (f64, f64) {
        let a = self.analysis();
        (a.lo, a.hi)
    }
}

/// Metric distance `d(p, q)` in the model.
pub fn dist(model: &MetricModel, p: &[f64], q: &[f64]) -> Result<f64> {
    model.dist(p, q)
}

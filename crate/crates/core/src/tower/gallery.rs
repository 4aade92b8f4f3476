use serde::{Deserialize, Serialize};

use super::{BaireTower, BaseFn, Envelope, Family, RateCertificate};
use crate::error::{Error, Result};
use crate::func::expr::*;
use crate::func::{ContFn, MetricModel};

/// Names accepted by [`gallery`].
pub const GALLERY_NAMES: [&str; 4] = ["sign", "point-indicator", "step", "two-limit-indicator"];

/// Lazily generated canonical towers on a one-dimensional domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Gallery {
    /// `clamp(k x, -1, 1)`, limit `sign(x)`.
    Sign { domain: MetricModel },
    /// `max(0, 1 - k |x - at|)`, limit the indicator of `{at}`.
    PointIndicator { domain: MetricModel, at: f64 },
    /// `clamp(k (x - at), -1, 1)`, limit `sign(x - at)`.
    Step { domain: MetricModel, at: f64 },
    /// Rank 2: level `j` is the finite indicator of `{1, 1/2, ..., 1/j}`.
    TwoLimitIndicator { domain: MetricModel },
    /// Rank 1: `max_{m <= count} max(0, 1 - k |x - 1/m|)`.
    FiniteIndicator { domain: MetricModel, count: usize },
}

fn default_domain() -> MetricModel {
    MetricModel::interval(-1.0, 1.0).expect("static domain")
}

/// The canonical tower registered under `name`, on `[-1, 1]`.
pub fn gallery(name: &str) -> Result<BaireTower> {
    let d = default_domain();
    let g = match name {
        "sign" => Gallery::Sign { domain: d },
        "point-indicator" => Gallery::PointIndicator { domain: d, at: 0.0 },
        "step" => Gallery::Step { domain: d, at: 0.5 },
        "two-limit-indicator" => Gallery::TwoLimitIndicator { domain: d },
        other => return Err(Error::UnknownGallery(other.to_string())),
    };
    g.into_tower()
}

/// `step` with a custom jump location and domain.
pub fn step(domain: MetricModel, at: f64) -> Result<BaireTower> {
    Gallery::Step { domain, at }.into_tower()
}

pub fn point_indicator(domain: MetricModel, at: f64) -> Result<BaireTower> {
    Gallery::PointIndicator { domain, at }.into_tower()
}

fn tent(k: f64, at: f64) -> Expr {
    max2(constant(0.0), sub(constant(1.0), mul(constant(k), abs(sub(coord(0), constant(at))))))
}

impl Gallery {
    pub fn domain(&self) -> &MetricModel {
        match self {
            Gallery::Sign { domain }
            | Gallery::PointIndicator { domain, .. }
            | Gallery::Step { domain, .. }
            | Gallery::TwoLimitIndicator { domain }
            | Gallery::FiniteIndicator { domain, .. } => domain,
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Gallery::TwoLimitIndicator { .. } => 2,
            _ => 1,
        }
    }

    fn certificate(&self) -> Option<RateCertificate> {
        let at = match self {
            Gallery::Sign { .. } => 0.0,
            Gallery::PointIndicator { at, .. } | Gallery::Step { at, .. } => *at,
            _ => return None,
        };
        Some(RateCertificate { envelope: Envelope::Tent { at }, monotone: true })
    }

    pub fn into_tower(self) -> Result<BaireTower> {
        if self.domain().dim() != 1 {
            return Err(Error::MalformedTower("gallery towers live on one-dimensional domains".into()));
        }
        let certificate = self.certificate();
        BaireTower::node(self.rank(), self.domain().clone(), Family::Gallery(self), certificate)
    }

    pub(super) fn level(&self, k: usize) -> Result<BaireTower> {
        let kf = k as f64;
        let d = self.domain().clone();
        let e = match self {
            Gallery::Sign { .. } => clamp(mul(constant(kf), coord(0)), -1.0, 1.0),
            Gallery::Step { at, .. } => clamp(mul(constant(kf), sub(coord(0), constant(*at))), -1.0, 1.0),
            Gallery::PointIndicator { at, .. } => tent(kf, *at),
            Gallery::FiniteIndicator { count, .. } => {
                Expr::Max((1..=*count).map(|m| tent(kf, 1.0 / m as f64)).collect())
            }
            Gallery::TwoLimitIndicator { domain } => {
                return Gallery::FiniteIndicator { domain: domain.clone(), count: k }.into_tower();
            }
        };
        Ok(BaireTower::Base(BaseFn::Expr(ContFn::new(d, e)?)))
    }

    pub(super) fn sup_bound(&self) -> f64 {
        1.0
    }
}

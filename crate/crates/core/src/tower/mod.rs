//! Baire-class functions as towers of iterated pointwise limits.
//!
//! A rank-`r` tower is a lazily indexed family `k = 1, 2, ...` of rank-`(r-1)`
//! towers; rank 0 is a continuous function. Its value is the iterated limit
//! `lim_{k_1} ... lim_{k_r} g_{k_1, ..., k_r}(x)`, approximated by replacing
//! every limit with the cutoff of an [`IndexSchedule`].

pub mod gallery;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use gallery::{gallery, Gallery, GALLERY_NAMES};

use crate::error::{Error, Result};
use crate::func::expr;
use crate::func::{ContFn, MetricModel};

type NativeEval = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
type NativeLevels = dyn Fn(usize) -> Result<BaireTower> + Send + Sync;

/// A continuous function known only through an evaluation closure.
#[derive(Clone)]
pub struct NativeFn {
    label: String,
    domain: MetricModel,
    f: Arc<NativeEval>,
}

impl NativeFn {
    pub fn new(
        label: impl Into<String>,
        domain: MetricModel,
        f: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        NativeFn { label: label.into(), domain, f: Arc::new(f) }
    }
}

impl fmt::Debug for NativeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NativeFn({})", self.label)
    }
}

/// Rank-0 content of a tower.
#[derive(Debug, Clone)]
pub enum BaseFn {
    Expr(ContFn),
    Native(NativeFn),
}

impl BaseFn {
    pub fn domain(&self) -> &MetricModel {
        match self {
            BaseFn::Expr(f) => f.domain(),
            BaseFn::Native(f) => &f.domain,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            BaseFn::Expr(f) => f.eval(x),
            BaseFn::Native(f) => {
                f.domain.check_point(x)?;
                (f.f)(x)
            }
        }
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            BaseFn::Expr(f) => Some(f.lipschitz_bound()),
            BaseFn::Native(_) => None,
        }
    }

    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            BaseFn::Expr(f) => Some(f.sup_bound()),
            BaseFn::Native(_) => None,
        }
    }

    pub fn as_expr(&self) -> Option<&ContFn> {
        match self {
            BaseFn::Expr(f) => Some(f),
            BaseFn::Native(_) => None,
        }
    }
}

#[derive(Clone)]
pub struct NativeFamily {
    label: String,
    f: Arc<NativeLevels>,
}

impl NativeFamily {
    pub fn new(label: impl Into<String>, f: impl Fn(usize) -> Result<BaireTower> + Send + Sync + 'static) -> Self {
        NativeFamily { label: label.into(), f: Arc::new(f) }
    }
}

impl fmt::Debug for NativeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NativeFamily({})", self.label)
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Gallery(Gallery),
    /// Materialized levels `1..=len`; indices past the end repeat the last level.
    Explicit(Vec<BaireTower>),
    Native(NativeFamily),
}

/// Envelope `tau_k >= |g_k - g|` for the top limit level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub envelope: Envelope,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `tau_k(x) = max(0, 1 - k |x_0 - at|)`.
    Tent { at: f64 },
    /// Materialized envelopes, saturating at the last one.
    Explicit { levels: Vec<ContFn> },
}

impl RateCertificate {
    pub fn tau(&self, k: usize, x: &[f64]) -> Result<f64> {
        match &self.envelope {
            Envelope::Tent { at } => Ok((1.0 - k as f64 * (x[0] - at).abs()).max(0.0)),
            Envelope::Explicit { levels } => {
                if levels.is_empty() {
                    return Err(Error::MalformedTower("empty certificate".into()));
                }
                levels[k.min(levels.len()) - 1].eval(x)
            }
        }
    }
}

const LEVEL_CACHE: usize = 64;

#[derive(Debug)]
pub struct TowerNode {
    rank: usize,
    domain: MetricModel,
    family: Family,
    certificate: Option<RateCertificate>,
    /// Recently generated gallery levels.
    cache: Mutex<BTreeMap<usize, BaireTower>>,
}

#[derive(Debug, Clone)]
pub enum BaireTower {
    Base(BaseFn),
    Node(Arc<TowerNode>),
}

impl BaireTower {
    pub fn constant(domain: MetricModel, c: f64) -> Result<Self> {
        Ok(BaireTower::Base(BaseFn::Expr(ContFn::constant(domain, c)?)))
    }

    pub fn base(f: ContFn) -> Self {
        BaireTower::Base(BaseFn::Expr(f))
    }

    pub fn node(
        rank: usize,
        domain: MetricModel,
        family: Family,
        certificate: Option<RateCertificate>,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::MalformedTower("a family node has rank >= 1".into()));
        }
        if let Family::Explicit(levels) = &family {
            if levels.is_empty() {
                return Err(Error::MalformedTower("explicit family without levels".into()));
            }
            for (i, l) in levels.iter().enumerate() {
                if l.rank() != rank - 1 {
                    return Err(Error::MalformedTower(format!(
                        "level {} has rank {}, expected {}",
                        i + 1,
                        l.rank(),
                        rank - 1
                    )));
                }
                if l.domain() != &domain {
                    return Err(Error::MalformedTower(format!("level {} lives on another domain", i + 1)));
                }
            }
        }
        Ok(BaireTower::Node(Arc::new(TowerNode { rank, domain, family, certificate, cache: Mutex::default() })))
    }

    pub fn explicit(levels: Vec<BaireTower>, certificate: Option<RateCertificate>) -> Result<Self> {
        let first = levels.first().ok_or_else(|| Error::MalformedTower("explicit family without levels".into()))?;
        let (rank, domain) = (first.rank() + 1, first.domain().clone());
        BaireTower::node(rank, domain, Family::Explicit(levels), certificate)
    }

    pub fn native(rank: usize, domain: MetricModel, family: NativeFamily) -> Result<Self> {
        BaireTower::node(rank, domain, Family::Native(family), None)
    }

    pub fn rank(&self) -> usize {
        match self {
            BaireTower::Base(_) => 0,
            BaireTower::Node(n) => n.rank,
        }
    }

    pub fn domain(&self) -> &MetricModel {
        match self {
            BaireTower::Base(f) => f.domain(),
            BaireTower::Node(n) => &n.domain,
        }
    }

    pub fn family(&self) -> Option<&Family> {
        match self {
            BaireTower::Base(_) => None,
            BaireTower::Node(n) => Some(&n.family),
        }
    }

    pub fn certificate(&self) -> Option<&RateCertificate> {
        match self {
            BaireTower::Base(_) => None,
            BaireTower::Node(n) => n.certificate.as_ref(),
        }
    }

    pub fn as_base(&self) -> Option<&BaseFn> {
        match self {
            BaireTower::Base(f) => Some(f),
            BaireTower::Node(_) => None,
        }
    }

    /// Number of materialized levels, `None` when generated on demand.
    pub fn materialized(&self) -> Option<usize> {
        match self.family() {
            Some(Family::Explicit(l)) => Some(l.len()),
            _ => None,
        }
    }

    /// Level `k >= 1`, a tower of rank `rank - 1`.
    pub fn level(&self, k: usize) -> Result<BaireTower> {
        if k == 0 {
            return Err(Error::InvalidIndexSchedule("tower indices start at 1".into()));
        }
        let node = match self {
            BaireTower::Base(_) => return Err(Error::MalformedTower("rank-0 tower has no levels".into())),
            BaireTower::Node(n) => n,
        };
        let t = match &node.family {
            Family::Gallery(g) => {
                if let Some(t) = node.cache.lock().expect("cache lock").get(&k) {
                    return Ok(t.clone());
                }
                let t = g.level(k)?;
                let mut cache = node.cache.lock().expect("cache lock");
                if cache.len() >= LEVEL_CACHE {
                    cache.clear();
                }
                cache.insert(k, t.clone());
                t
            }
            Family::Explicit(levels) => levels[k.min(levels.len()) - 1].clone(),
            Family::Native(f) => (f.f)(k)?,
        };
        if t.rank() + 1 != node.rank {
            return Err(Error::MalformedTower(format!("level {k} has rank {}", t.rank())));
        }
        Ok(t)
    }

    /// The continuous function at multi-index `idx` (one index per rank).
    pub fn level_at(&self, idx: &[usize]) -> Result<BaseFn> {
        if idx.len() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), got: idx.len() });
        }
        let mut t = self.clone();
        for &k in idx {
            t = t.level(k)?;
        }
        match t {
            BaireTower::Base(f) => Ok(f),
            BaireTower::Node(_) => unreachable!("rank bookkeeping"),
        }
    }

    /// Lipschitz bound of a rank-0 tower.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.as_base().and_then(BaseFn::lipschitz_bound)
    }

    /// Uniform bound on `|g_k|` over all levels, when known.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            BaireTower::Base(f) => f.sup_bound(),
            BaireTower::Node(n) => match &n.family {
                Family::Gallery(g) => Some(g.sup_bound()),
                Family::Explicit(levels) => {
                    levels.iter().map(BaireTower::sup_bound).try_fold(0.0_f64, |acc, s| s.map(|s| acc.max(s)))
                }
                Family::Native(_) => None,
            },
        }
    }

    /// Bound on `|g_k|`, the per-index sup envelope.
    pub fn sup_env(&self, k: usize) -> Result<Option<f64>> {
        Ok(self.level(k)?.sup_bound())
    }

    /// Wraps the tower in constant families until it has rank `rank`.
    pub fn lift(self, rank: usize) -> Result<BaireTower> {
        if self.rank() > rank {
            return Err(Error::MalformedTower(format!("cannot lift rank {} to rank {rank}", self.rank())));
        }
        let mut t = self;
        while t.rank() < rank {
            t = BaireTower::explicit(vec![t], None)?;
        }
        Ok(t)
    }

    /// Multiplies every level by `c`, materializing `cutoff` levels per rank.
    pub fn scaled(&self, c: f64, cutoff: usize) -> Result<BaireTower> {
        match self {
            BaireTower::Base(BaseFn::Expr(f)) => {
                Ok(BaireTower::base(ContFn::new(f.domain().clone(), expr::mul(expr::constant(c), f.expr().clone()))?))
            }
            BaireTower::Base(BaseFn::Native(_)) => Err(Error::MalformedTower("cannot scale a native function".into())),
            BaireTower::Node(_) => {
                let levels = (1..=cutoff).map(|k| self.level(k)?.scaled(c, cutoff)).collect::<Result<Vec<_>>>()?;
                BaireTower::explicit(levels, None)
            }
        }
    }
}

/// Per-level cutoffs (outermost limit first) and a Cauchy tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSchedule {
    cutoffs: Vec<usize>,
    #[serde(default = "default_tol")]
    tol: f64,
}

fn default_tol() -> f64 {
    1e-9
}

impl IndexSchedule {
    pub fn new(cutoffs: Vec<usize>) -> Result<Self> {
        Self::with_tol(cutoffs, default_tol())
    }

    pub fn with_tol(cutoffs: Vec<usize>, tol: f64) -> Result<Self> {
        if cutoffs.is_empty() || cutoffs.contains(&0) {
            return Err(Error::InvalidIndexSchedule("cutoffs must be nonempty and >= 1".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidIndexSchedule(format!("tolerance {tol} must be positive")));
        }
        Ok(IndexSchedule { cutoffs, tol })
    }

    /// The same cutoff at every level.
    pub fn uniform(k: usize) -> Self {
        IndexSchedule::new(vec![k.max(1)]).expect("positive cutoff")
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Cutoff for limit level `level` (0 = outermost); missing levels reuse
    /// the last entry.
    pub fn cutoff(&self, level: usize) -> usize {
        *self.cutoffs.get(level).unwrap_or_else(|| self.cutoffs.last().expect("nonempty"))
    }

    pub fn cutoffs_for(&self, rank: usize) -> Vec<usize> {
        (0..rank).map(|l| self.cutoff(l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorEstimate {
    /// Rank-0 evaluation: no limit involved.
    Exact,
    /// Certified bound `tau_K(x)` from a rate certificate.
    Certified { bound: f64 },
    /// Observed increments between cutoffs `K/4 -> K/2 -> K`; diagnostic only.
    Cauchy { increment: f64, previous: f64, non_convergent: bool },
}

impl ErrorEstimate {
    pub fn magnitude(&self) -> f64 {
        match self {
            ErrorEstimate::Exact => 0.0,
            ErrorEstimate::Certified { bound } => *bound,
            ErrorEstimate::Cauchy { increment, .. } => *increment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerValue {
    pub value: f64,
    pub error: ErrorEstimate,
    /// Some cutoff exceeded the materialized depth of an explicit family.
    pub truncated: bool,
}

fn eval_cutoffs(g: &BaireTower, x: &[f64], cutoffs: &[usize], truncated: &mut bool) -> Result<f64> {
    match g {
        BaireTower::Base(f) => f.eval(x),
        BaireTower::Node(_) => {
            let k = cutoffs[0];
            if let Some(n) = g.materialized() {
                *truncated |= k > n;
            }
            eval_cutoffs(&g.level(k)?, x, &cutoffs[1..], truncated)
        }
    }
}

/// Iterated-limit evaluation with every limit replaced by its cutoff.
pub fn tower_eval(g: &BaireTower, x: &[f64], s: &IndexSchedule) -> Result<TowerValue> {
    g.domain().check_point(x)?;
    let rank = g.rank();
    if rank == 0 {
        let value = eval_cutoffs(g, x, &[], &mut false)?;
        return Ok(TowerValue { value, error: ErrorEstimate::Exact, truncated: false });
    }
    let mut cutoffs = s.cutoffs_for(rank);
    let mut truncated = false;
    let value = eval_cutoffs(g, x, &cutoffs, &mut truncated)?;
    let k = cutoffs[0];
    let error = match g.certificate() {
        Some(c) => ErrorEstimate::Certified { bound: c.tau(k, x)? },
        None => {
            cutoffs[0] = (k / 2).max(1);
            let half = eval_cutoffs(g, x, &cutoffs, &mut false)?;
            cutoffs[0] = (k / 4).max(1);
            let quarter = eval_cutoffs(g, x, &cutoffs, &mut false)?;
            let increment = (value - half).abs();
            let previous = (half - quarter).abs();
            ErrorEstimate::Cauchy { increment, previous, non_convergent: increment > previous && increment > s.tol() }
        }
    };
    Ok(TowerValue { value, error, truncated })
}

// ---- wire format ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TowerJson {
    rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<ContFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<FamilyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<RateCertificate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyJson {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<MetricModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<TowerJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cutoff: Option<usize>,
}

impl FamilyJson {
    fn empty(kind: &str) -> Self {
        FamilyJson { kind: kind.into(), name: None, domain: None, at: None, count: None, levels: None, cutoff: None }
    }
}

impl TryFrom<&BaireTower> for TowerJson {
    type Error = Error;
    fn try_from(t: &BaireTower) -> Result<Self> {
        let node = match t {
            BaireTower::Base(BaseFn::Expr(f)) => {
                return Ok(TowerJson { rank: 0, base: Some(f.clone()), family: None, certificate: None })
            }
            BaireTower::Base(BaseFn::Native(n)) => return Err(Error::NotSerializable(n.label.clone())),
            BaireTower::Node(n) => n,
        };
        let family = match &node.family {
            Family::Gallery(g) => {
                let mut j = FamilyJson::empty("gallery");
                let (name, at, count) = match g {
                    Gallery::Sign { .. } => ("sign", None, None),
                    Gallery::PointIndicator { at, .. } => ("point-indicator", Some(*at), None),
                    Gallery::Step { at, .. } => ("step", Some(*at), None),
                    Gallery::TwoLimitIndicator { .. } => ("two-limit-indicator", None, None),
                    Gallery::FiniteIndicator { count, .. } => ("finite-indicator", None, Some(*count)),
                };
                j.name = Some(name.into());
                j.domain = Some(g.domain().clone());
                j.at = at;
                j.count = count;
                j
            }
            Family::Explicit(levels) => {
                let mut j = FamilyJson::empty("explicit");
                j.levels = Some(levels.iter().map(TowerJson::try_from).collect::<Result<_>>()?);
                j.cutoff = Some(levels.len());
                j
            }
            Family::Native(f) => return Err(Error::NotSerializable(f.label.clone())),
        };
        Ok(TowerJson { rank: node.rank, base: None, family: Some(family), certificate: node.certificate.clone() })
    }
}

impl TryFrom<TowerJson> for BaireTower {
    type Error = Error;
    fn try_from(j: TowerJson) -> Result<Self> {
        if j.rank == 0 {
            let base = j.base.ok_or_else(|| Error::MalformedTower("rank 0 needs `base`".into()))?;
            if j.family.is_some() || j.certificate.is_some() {
                return Err(Error::MalformedTower("rank 0 takes only `base`".into()));
            }
            return Ok(BaireTower::base(base));
        }
        let fam = j.family.ok_or_else(|| Error::MalformedTower("rank >= 1 needs `family`".into()))?;
        match fam.kind.as_str() {
            "gallery" => {
                let name = fam.name.ok_or_else(|| Error::MalformedTower("gallery needs `name`".into()))?;
                let domain = match fam.domain {
                    Some(d) => d,
                    None => MetricModel::interval(-1.0, 1.0)?,
                };
                let g = match name.as_str() {
                    "sign" => Gallery::Sign { domain },
                    "point-indicator" => Gallery::PointIndicator { domain, at: fam.at.unwrap_or(0.0) },
                    "step" => Gallery::Step { domain, at: fam.at.unwrap_or(0.5) },
                    "two-limit-indicator" => Gallery::TwoLimitIndicator { domain },
                    "finite-indicator" => Gallery::FiniteIndicator {
                        domain,
                        count: fam
                            .count
                            .ok_or_else(|| Error::MalformedTower("finite-indicator needs `count`".into()))?,
                    },
                    other => return Err(Error::UnknownGallery(other.into())),
                };
                if g.rank() != j.rank {
                    return Err(Error::MalformedTower(format!(
                        "gallery `{name}` has rank {}, not {}",
                        g.rank(),
                        j.rank
                    )));
                }
                let certificate = j.certificate;
                let domain = g.domain().clone();
                BaireTower::node(j.rank, domain, Family::Gallery(g), certificate)
            }
            "explicit" => {
                let levels = fam
                    .levels
                    .ok_or_else(|| Error::MalformedTower("explicit family needs `levels`".into()))?
                    .into_iter()
                    .map(BaireTower::try_from)
                    .collect::<Result<Vec<_>>>()?;
                if let Some(c) = fam.cutoff {
                    if c != levels.len() {
                        return Err(Error::MalformedTower(format!(
                            "cutoff {c} disagrees with {} levels",
                            levels.len()
                        )));
                    }
                }
                let t = BaireTower::explicit(levels, j.certificate)?;
                if t.rank() != j.rank {
                    return Err(Error::MalformedTower(format!(
                        "declared rank {} but levels imply {}",
                        j.rank,
                        t.rank()
                    )));
                }
                Ok(t)
            }
            other => Err(Error::MalformedTower(format!("unknown family kind `{other}`"))),
        }
    }
}

impl Serialize for BaireTower {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TowerJson::try_from(self).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BaireTower {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TowerJson::deserialize(d)?;
        BaireTower::try_from(j).map_err(serde::de::Error::custom)
    }
}

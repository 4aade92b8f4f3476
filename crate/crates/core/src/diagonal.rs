//! Separately continuous functions with a prescribed diagonal.
//!
//! For a rank-1 tower `(g_k)` on a metric model `Z` the two-variable function
//! is built by blending the levels across annuli around the diagonal:
//!
//! ```text
//! rho = d(x, y)
//! rho >= R_1                 -> g_1(x)
//! R_{k+1} <= rho <= R_k      -> (1 - t) g_k(x) + t g_{k+1}(x),  t = (R_k - rho) / (R_k - R_{k+1})
//! rho = 0                    -> lim g_k(x)
//! ```
//!
//! With `R_k <= 2^-k / max(1, L_1, .., L_{k+1})` every section is continuous
//! through the diagonal. Higher arities blend separately continuous functions
//! of one fewer variable, with `rho` the largest pairwise distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{BoxDomain, ContFn, MetricModel, SupportedFn};
use crate::par::{self, Exec};
use crate::tower::{tower_eval, BaireTower, ErrorEstimate, IndexSchedule};

/// Strictly decreasing annulus radii `R_1 > R_2 > ... > R_K > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RadiusSchedule {
    radii: Vec<f64>,
}

impl TryFrom<Vec<f64>> for RadiusSchedule {
    type Error = Error;
    fn try_from(radii: Vec<f64>) -> Result<Self> {
        RadiusSchedule::new(radii)
    }
}

impl From<RadiusSchedule> for Vec<f64> {
    fn from(s: RadiusSchedule) -> Self {
        s.radii
    }
}

/// Where a distance from the diagonal falls in a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Annulus {
    Diagonal,
    /// `rho >= R_1`: level 1 only.
    Outer,
    /// `R_{k+1} <= rho < R_k`: blend of levels `k` and `k + 1` with weight `t` on `k + 1`.
    Blend {
        k: usize,
        t: f64,
    },
    /// `0 < rho < R_K`: below the materialized depth, level `K` is used.
    Deep {
        k: usize,
    },
}

impl Annulus {
    /// Tower indices read by this annulus.
    pub fn indices(&self) -> Option<(usize, usize)> {
        match *self {
            Annulus::Diagonal => None,
            Annulus::Outer => Some((1, 1)),
            Annulus::Blend { k, .. } => Some((k, k + 1)),
            Annulus::Deep { k } => Some((k, k)),
        }
    }
}

impl RadiusSchedule {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidRadiusSchedule("empty schedule".into()));
        }
        for (i, r) in radii.iter().enumerate() {
            let k = i + 1;
            if !(r.is_finite() && *r > 0.0) {
                return Err(Error::InvalidRadiusSchedule(format!("R_{k} = {r} must be positive")));
            }
            if *r > 0.5_f64.powi(k as i32) {
                return Err(Error::InvalidRadiusSchedule(format!("R_{k} = {r} exceeds 2^-{k}")));
            }
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidRadiusSchedule("radii must be strictly decreasing".into()));
        }
        Ok(RadiusSchedule { radii })
    }

    /// `R_k = 2^-k`.
    pub fn dyadic(depth: usize) -> Result<Self> {
        RadiusSchedule::new((1..=depth).map(|k| 0.5_f64.powi(k as i32)).collect())
    }

    pub fn depth(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// `R_k` for `1 <= k <= depth`.
    pub fn radius(&self, k: usize) -> f64 {
        self.radii[k - 1]
    }

    /// Pure function of `rho` and the schedule. At `rho = R_{k+1}` the annulus
    /// with the smaller index is used (`t = 1`), where both formulas agree.
    pub fn locate(&self, rho: f64) -> Annulus {
        if rho == 0.0 {
            return Annulus::Diagonal;
        }
        let above = self.radii.partition_point(|r| *r > rho);
        if above == 0 {
            Annulus::Outer
        } else if above == self.radii.len() {
            Annulus::Deep { k: above }
        } else {
            let k = above;
            let (rk, rk1) = (self.radius(k), self.radius(k + 1));
            Annulus::Blend { k, t: (rk - rho) / (rk - rk1) }
        }
    }

    /// Checks `R_k <= 2^-k / max(1, L_1, .., L_{k+1})` for a rank-1 tower.
    pub fn check_soundness(&self, g: &BaireTower) -> Result<()> {
        let lips = level_lipschitz(g, self.depth() + 1)?;
        let mut running = 1.0_f64;
        for k in 1..=self.depth() {
            running = running.max(lips[k - 1]).max(lips[k]);
            let limit = 0.5_f64.powi(k as i32) / running;
            let r = self.radius(k);
            if r > limit * (1.0 + 1e-12) {
                return Err(Error::ScheduleViolatesSoundness { k, radius: r, limit });
            }
        }
        Ok(())
    }
}

fn level_lipschitz(g: &BaireTower, count: usize) -> Result<Vec<f64>> {
    if g.rank() != 1 {
        return Err(Error::InvalidConstruction(format!("expected a rank-1 tower, got rank {}", g.rank())));
    }
    (1..=count).map(|k| g.level(k)?.lipschitz_bound().ok_or(Error::MissingLipschitzBound { level: k })).collect()
}

/// `R_k = 2^-k / max(1, L_1, .., L_{k+1})` for `k = 1..=depth`.
pub fn schedule_from_lipschitz(g: &BaireTower, depth: usize) -> Result<RadiusSchedule> {
    if depth == 0 {
        return Err(Error::InvalidRadiusSchedule("depth must be positive".into()));
    }
    let lips = level_lipschitz(g, depth + 1)?;
    let mut running = 1.0_f64;
    let radii = (1..=depth)
        .map(|k| {
            running = running.max(lips[k - 1]).max(lips[k]);
            0.5_f64.powi(k as i32) / running
        })
        .collect();
    RadiusSchedule::new(radii)
}

/// Map from a factor space into the model of an inner construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub domain: MetricModel,
    pub coords: Vec<ContFn>,
}

impl Embedding {
    pub fn new(domain: MetricModel, coords: Vec<ContFn>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidConstruction("embedding without coordinates".into()));
        }
        if coords.iter().any(|c| c.domain() != &domain) {
            return Err(Error::InvalidConstruction("embedding coordinate on another domain".into()));
        }
        Ok(Embedding { domain, coords })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain.check_point(x)?;
        Ok(self.coords.iter().map(|c| c.eval_unchecked(x)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluedPiece {
    pub weight: SupportedFn,
    /// Open window (relative to the glued domain) outside which the patch counts as 0.
    pub window: BoxDomain,
    /// `None` stands for the zero function.
    pub patch: Option<SepFn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plan {
    BaseBlend { tower: BaireTower, schedule: RadiusSchedule },
    RecursiveBlend { parts: Vec<SepFn>, schedule: RadiusSchedule, tower: BaireTower },
    Pullback { inner: Box<SepFn>, embeddings: Vec<Embedding> },
    Glued { domain: BoxDomain, pieces: Vec<GluedPiece> },
}

/// An immutable construction plan for a separately continuous function of
/// `arity` variables, the `i`-th ranging over `factors[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSepFn")]
pub struct SepFn {
    arity: usize,
    factors: Vec<MetricModel>,
    plan: Plan,
    #[serde(default)]
    empirically_validated: bool,
}

#[derive(Deserialize)]
struct RawSepFn {
    arity: usize,
    factors: Vec<MetricModel>,
    plan: Plan,
    #[serde(default)]
    empirically_validated: bool,
}

impl TryFrom<RawSepFn> for SepFn {
    type Error = Error;
    fn try_from(r: RawSepFn) -> Result<Self> {
        let f =
            SepFn { arity: r.arity, factors: r.factors, plan: r.plan, empirically_validated: r.empirically_validated };
        f.validate()?;
        Ok(f)
    }
}

impl PartialEq for SepFn {
    fn eq(&self, other: &Self) -> bool {
        // plans hold towers without structural equality; compare wire forms
        match (serde_json::to_string(self), serde_json::to_string(other)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    /// Evaluation fell below the deepest radius of some schedule.
    pub depth_exhausted: bool,
    /// Error estimate of the tower limit when a diagonal point was hit.
    pub diagonal: Option<ErrorEstimate>,
    /// A tower cutoff ran past its materialized levels.
    pub truncated: bool,
    /// Tower indices read by the outermost blend.
    pub indices: Option<(usize, usize)>,
}

impl Diagnostics {
    fn absorb(&mut self, other: &Diagnostics) {
        self.depth_exhausted |= other.depth_exhausted;
        self.truncated |= other.truncated;
        if self.diagonal.is_none() {
            self.diagonal = other.diagonal;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SepValue {
    pub value: f64,
    pub diagnostics: Diagnostics,
}

impl SepFn {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConstruction(m));
        if self.arity < 2 {
            return bad(format!("arity {} < 2", self.arity));
        }
        if self.factors.len() != self.arity {
            return bad(format!("{} factors for arity {}", self.factors.len(), self.arity));
        }
        match &self.plan {
            Plan::BaseBlend { tower, .. } => {
                if self.arity != 2 || tower.rank() != 1 {
                    return bad("base blend needs arity 2 and a rank-1 tower".into());
                }
                if self.factors.iter().any(|f| f != tower.domain()) {
                    return bad("base blend factors must equal the tower domain".into());
                }
            }
            Plan::RecursiveBlend { parts, schedule, tower } => {
                if tower.rank() != self.arity - 1 {
                    return bad("recursive blend tower rank must be arity - 1".into());
                }
                if parts.len() != schedule.depth() {
                    return bad("one part per schedule radius".into());
                }
                if parts.iter().any(|p| p.arity != self.arity - 1) {
                    return bad("parts must have arity - 1 variables".into());
                }
                if self.factors.iter().any(|f| f != tower.domain()) {
                    return bad("recursive blend factors must equal the tower domain".into());
                }
            }
            Plan::Pullback { inner, embeddings } => {
                if inner.arity != self.arity || embeddings.len() != self.arity {
                    return bad("pullback needs one embedding per variable".into());
                }
                for (i, e) in embeddings.iter().enumerate() {
                    if e.domain != self.factors[i] || e.coords.len() != inner.factors[i].dim() {
                        return bad(format!("embedding {i} does not match its factor"));
                    }
                }
            }
            Plan::Glued { domain, pieces } => {
                let total: usize = self.factors.iter().map(MetricModel::dim).sum();
                if domain.dim() != total {
                    return bad("glued domain must be the product of the factors".into());
                }
                for p in pieces {
                    if let Some(patch) = &p.patch {
                        if patch.arity != self.arity {
                            return bad("patch arity differs".into());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn factors(&self) -> &[MetricModel] {
        &self.factors
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn empirically_validated(&self) -> bool {
        self.empirically_validated
    }

    /// The tower the diagonal of this function reproduces (blend plans only).
    pub fn diagonal_tower(&self) -> Option<&BaireTower> {
        match &self.plan {
            Plan::BaseBlend { tower, .. } | Plan::RecursiveBlend { tower, .. } => Some(tower),
            _ => None,
        }
    }

    pub fn schedule(&self) -> Option<&RadiusSchedule> {
        match &self.plan {
            Plan::BaseBlend { schedule, .. } | Plan::RecursiveBlend { schedule, .. } => Some(schedule),
            _ => None,
        }
    }

    pub(crate) fn from_parts(factors: Vec<MetricModel>, plan: Plan, empirically_validated: bool) -> Result<Self> {
        let f = SepFn { arity: factors.len(), factors, plan, empirically_validated };
        f.validate()?;
        Ok(f)
    }

    /// Distance from the diagonal used by blend plans.
    pub fn blend_distance(&self, xs: &[Vec<f64>]) -> Result<f64> {
        let space = &self.factors[0];
        let mut rho: f64 = 0.0;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                rho = rho.max(space.dist(&xs[i], &xs[j])?);
            }
        }
        Ok(rho)
    }

    /// Annulus of the outermost blend at `xs` (blend plans only).
    pub fn locate(&self, xs: &[Vec<f64>]) -> Result<Annulus> {
        let schedule = self.schedule().ok_or_else(|| Error::InvalidConstruction("not a blend plan".into()))?;
        Ok(schedule.locate(self.blend_distance(xs)?))
    }

    pub fn eval(&self, xs: &[Vec<f64>], s: &IndexSchedule) -> Result<SepValue> {
        sepfn_eval(self, xs, s)
    }
}

fn check_args(f: &SepFn, xs: &[Vec<f64>]) -> Result<()> {
    if xs.len() != f.arity {
        return Err(Error::DimensionMismatch { expected: f.arity, got: xs.len() });
    }
    for (x, m) in xs.iter().zip(&f.factors) {
        m.check_point(x)?;
    }
    Ok(())
}

/// Evaluates a construction at `xs = (x_1, .., x_n)`. Diagonal points go
/// through [`tower_eval`] with the same schedule `s`.
pub fn sepfn_eval(f: &SepFn, xs: &[Vec<f64>], s: &IndexSchedule) -> Result<SepValue> {
    check_args(f, xs)?;
    match &f.plan {
        Plan::BaseBlend { tower, schedule } => {
            let level = |k: usize| -> Result<(f64, Diagnostics)> {
                let g = tower.level(k)?;
                let base = g.as_base().expect("rank-1 tower");
                Ok((base.eval(&xs[0])?, Diagnostics::default()))
            };
            blend(f, tower, schedule, xs, s, level)
        }
        Plan::RecursiveBlend { parts, schedule, tower } => {
            let head = &xs[..xs.len() - 1];
            let level = |k: usize| -> Result<(f64, Diagnostics)> {
                let v = sepfn_eval(&parts[k - 1], head, s)?;
                Ok((v.value, v.diagnostics))
            };
            blend(f, tower, schedule, xs, s, level)
        }
        Plan::Pullback { inner, embeddings } => {
            let zs = xs.iter().zip(embeddings).map(|(x, e)| e.apply(x)).collect::<Result<Vec<_>>>()?;
            sepfn_eval(inner, &zs, s)
        }
        Plan::Glued { domain, pieces } => {
            let flat: Vec<f64> = xs.iter().flatten().copied().collect();
            let mut value = 0.0;
            let mut diagnostics = Diagnostics::default();
            for p in pieces {
                let w = p.weight.eval(&flat)?;
                if w == 0.0 || !p.window.contains_relative_interior(&flat, domain) {
                    continue;
                }
                if let Some(patch) = &p.patch {
                    let local = split_point(&flat, patch.factors());
                    let v = sepfn_eval(patch, &local, s)?;
                    diagnostics.absorb(&v.diagnostics);
                    value += w * v.value;
                }
            }
            Ok(SepValue { value, diagnostics })
        }
    }
}

/// Splits a flat coordinate vector according to the factor dimensions.
pub fn split_point(flat: &[f64], factors: &[MetricModel]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(factors.len());
    let mut at = 0;
    for m in factors {
        out.push(flat[at..at + m.dim()].to_vec());
        at += m.dim();
    }
    out
}

fn blend(
    f: &SepFn,
    tower: &BaireTower,
    schedule: &RadiusSchedule,
    xs: &[Vec<f64>],
    s: &IndexSchedule,
    level: impl Fn(usize) -> Result<(f64, Diagnostics)>,
) -> Result<SepValue> {
    let annulus = schedule.locate(f.blend_distance(xs)?);
    let mut d = Diagnostics { indices: annulus.indices(), ..Diagnostics::default() };
    let value = match annulus {
        Annulus::Diagonal => {
            let tv = tower_eval(tower, &xs[0], s)?;
            d.diagonal = Some(tv.error);
            d.truncated = tv.truncated;
            tv.value
        }
        Annulus::Outer => {
            let (v, inner) = level(1)?;
            d.absorb(&inner);
            v
        }
        Annulus::Blend { k, t } => {
            debug_assert!((0.0..=1.0).contains(&t));
            let (a, da) = level(k)?;
            let (b, db) = level(k + 1)?;
            d.absorb(&da);
            d.absorb(&db);
            (1.0 - t) * a + t * b
        }
        Annulus::Deep { k } => {
            let (v, inner) = level(k)?;
            d.absorb(&inner);
            d.depth_exhausted = true;
            v
        }
    };
    Ok(SepValue { value, diagnostics: d })
}

/// Two-variable construction from a rank-1 (or rank-0) tower.
pub fn build_diagonal_2(g: &BaireTower, schedule: RadiusSchedule) -> Result<SepFn> {
    let g = g.clone().lift(1)?;
    if g.rank() != 1 {
        return Err(Error::InvalidConstruction(format!("rank {} tower for two variables", g.rank())));
    }
    schedule.check_soundness(&g)?;
    let space = g.domain().clone();
    SepFn::from_parts(vec![space.clone(), space], Plan::BaseBlend { tower: g, schedule }, false)
}

/// `n`-variable construction (`n >= 3`) from a tower of rank at most `n - 1`.
///
/// Each level `g_k` is built recursively into a function `u_k` of `n - 1`
/// variables (inner two-variable builds use [`schedule_from_lipschitz`] at
/// `inner_depth`), and the `u_k` are blended with `outer`. The result is
/// flagged empirically validated unless the top level carries a rate
/// certificate.
pub fn build_diagonal_n(g: &BaireTower, n: usize, outer: RadiusSchedule, inner_depth: usize) -> Result<SepFn> {
    if n < 3 {
        return Err(Error::InvalidConstruction(format!("build_diagonal_n needs n >= 3, got {n}")));
    }
    let g = g.clone().lift(n - 1)?;
    let parts = par::try_range_map(Exec::default(), outer.depth(), |i| {
        let gk = g.level(i + 1)?;
        if n == 3 {
            let inner = schedule_from_lipschitz(&gk.clone().lift(1)?, inner_depth)?;
            build_diagonal_2(&gk, inner)
        } else {
            build_diagonal_n(&gk, n - 1, outer.clone(), inner_depth)
        }
    })?;
    let flagged = g.certificate().is_none() || parts.iter().any(|p| p.empirically_validated);
    let space = g.domain().clone();
    SepFn::from_parts(vec![space; n], Plan::RecursiveBlend { parts, schedule: outer, tower: g }, flagged)
}

/// Two-variable build with a Lipschitz schedule, or an `n`-variable build
/// with dyadic outer radii; both at `depth`.
pub fn build_diagonal(g: &BaireTower, n: usize, depth: usize) -> Result<SepFn> {
    match n {
        0 | 1 => Err(Error::InvalidConstruction(format!("arity {n} < 2"))),
        2 => {
            let g1 = g.clone().lift(1)?;
            build_diagonal_2(&g1, schedule_from_lipschitz(&g1, depth)?)
        }
        _ => build_diagonal_n(g, n, RadiusSchedule::dyadic(depth)?, depth),
    }
}

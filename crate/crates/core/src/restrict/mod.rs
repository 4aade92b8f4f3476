//! Separately continuous functions with a prescribed restriction to a
//! parametrized set `E` in a product `X_1 x .. x X_n`.
//!
//! The embedding solver maps every factor into a weighted-sup sequence model
//! `Z` through the bundle `phi_i = (f_s^(i))_s`, where `f_0^(i)` vanishes
//! exactly on the sampled `E_i` and `f_s^(i)` extends `g_s` transported to
//! `E_i`. On `E` all `phi_i` agree, so the diagonal construction on `Z` with
//! the transported tower pulls back to a function whose restriction to `E`
//! is `g`. The injective solver adds a sampled injectivity gate in front;
//! the glued solver solves patch by patch and blends with a partition of
//! unity.

mod extend;
mod param;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use extend::{discrete_lipschitz, extend_baire_from_closed, extend_samples, mcshane_extend, FunctionallyClosedSet};
pub use param::{check_projective_injectivity, Claim, Collision, InjectivityVerdict, ParamSet, Piece, Sample};

use crate::diagonal::{build_diagonal, Embedding, GluedPiece, Plan, SepFn};
use crate::error::{Error, Result};
use crate::func::{expr, BoxDomain, ContFn, MetricModel, PartitionOfUnity};
use crate::par::{self, Exec};
use crate::tower::{BaireTower, BaseFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Caller-certified projective embedding.
    #[serde(alias = "theorem2")]
    Embedding,
    /// Compact boxes with a sampled injectivity check.
    #[serde(alias = "theorem4")]
    Injective,
    /// Locally injective set solved per cover box and glued.
    #[serde(alias = "theorem5")]
    Glued,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cutoffs {
    /// `K` in the index truncation `{0} u {1..K}^(n-1)`.
    pub s_cut: usize,
    /// Depth of the diagonal construction on the sequence model.
    pub depth: usize,
    /// Parameter samples per piece.
    pub samples: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { s_cut: 8, depth: 12, samples: 1025 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest allowed `d(phi_1(x_1), phi_i(x_i))` on samples of `E`.
    pub coherence: f64,
    /// Images closer than this are treated as the same point of `Z`.
    pub identify: f64,
    /// Declared bound on `|f - g|` on sampled `E`.
    pub value: f64,
    /// Images closer than this collide in the injectivity check.
    pub injectivity: f64,
    /// Parameters closer than this are not compared for injectivity.
    pub separation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { coherence: 1e-9, identify: 1e-9, value: 1e-2, injectivity: 1e-12, separation: 1e-9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestrictionProblem {
    pub factors: Vec<MetricModel>,
    pub set: ParamSet,
    /// Tower on the parameter interval, rank at most `n - 1`.
    pub g: BaireTower,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cover: Vec<BoxDomain>,
    #[serde(default)]
    pub cutoffs: Cutoffs,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RestrictionProblem {
    pub fn arity(&self) -> usize {
        self.factors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.arity();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least two factors, got {n}")));
        }
        self.set.validate(&self.factors)?;
        if self.g.rank() > n - 1 {
            return Err(Error::InvalidInput(format!("tower rank {} exceeds n - 1 = {}", self.g.rank(), n - 1)));
        }
        let dom = self.set.param_domain()?;
        let gd = self.g.domain();
        if gd.dim() != 1 || gd.bounds().lo()[0] > dom.lo()[0] || gd.bounds().hi()[0] < dom.hi()[0] {
            return Err(Error::InvalidInput("tower domain must contain the parameter interval".into()));
        }
        let c = &self.cutoffs;
        if c.s_cut == 0 || c.depth == 0 || c.samples == 0 {
            return Err(Error::InvalidInput("cutoffs must be positive".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        self.set.samples(&self.factors, self.cutoffs.samples)
    }
}

/// Everything the embedding solver produced, kept for inspection.
#[derive(Debug, Clone)]
pub struct EmbeddingPlan {
    /// Truncated index set in coordinate order; index 0 is the empty tuple.
    pub index_set: Vec<Vec<usize>>,
    /// `extended[i][s]`: the function `f_s^(i)` on factor `i`.
    pub extended: Vec<Vec<ContFn>>,
    pub embeddings: Vec<Embedding>,
    pub model: MetricModel,
    /// Image of the sampled set, `A = phi_1(E_1)`.
    pub image: FunctionallyClosedSet,
    /// Coordinate-projection tower on the sequence model.
    pub g_tilde: BaireTower,
    /// `g_tilde` extended off the image.
    pub g_extended: BaireTower,
    pub inner: SepFn,
    /// Largest `d(phi_1(x_1), phi_i(x_i))` observed on the samples.
    pub coherence: f64,
    pub f: SepFn,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub f: SepFn,
    /// One plan per patch (a single entry outside gluing); `None` for
    /// patches without samples, where the zero function is used.
    pub plans: Vec<Option<EmbeddingPlan>>,
    pub injectivity: Vec<InjectivityVerdict>,
    pub samples: Vec<Sample>,
}

/// `{0} u {1..K}^r` in lexicographic order, with `0` as the empty tuple.
pub fn index_set(k: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut cur = vec![1; r];
    if r == 0 {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut pos = r;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if cur[pos] < k {
                cur[pos] += 1;
                for c in cur.iter_mut().skip(pos + 1) {
                    *c = 1;
                }
                break;
            }
        }
    }
}

fn tuple_position(tuple: &[usize], k: usize) -> usize {
    1 + tuple.iter().fold(0, |acc, &e| acc * k + (e - 1))
}

/// Tower level read at index tuple `s`: entry `e` selects level `2^e`.
fn dyadic_level(s: &[usize]) -> Vec<usize> {
    s.iter().map(|&e| 1usize << e.min(62)).collect()
}

fn projection_tower(model: &MetricModel, k: usize, r: usize, prefix: &mut Vec<usize>) -> Result<BaireTower> {
    if prefix.len() == r {
        let idx = tuple_position(prefix, k);
        return Ok(BaireTower::base(ContFn::new(model.clone(), expr::coord(idx))?));
    }
    let mut levels = Vec::with_capacity(k);
    for e in 1..=k {
        prefix.push(e);
        levels.push(projection_tower(model, k, r, prefix)?);
        prefix.pop();
    }
    BaireTower::explicit(levels, None)
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    (lo - 1e-6 * (1.0 + lo.abs()), hi + 1e-6 * (1.0 + hi.abs()))
}

/// The embedding pipeline on explicit samples of `E`.
pub fn solve_on_samples(
    factors: &[MetricModel],
    samples: &[Sample],
    g: &BaireTower,
    cutoffs: &Cutoffs,
    tol: &Tolerances,
) -> Result<EmbeddingPlan> {
    let n = factors.len();
    if n < 2 || samples.is_empty() {
        return Err(Error::InvalidInput("need two factors and at least one sample".into()));
    }
    let r = n - 1;
    let k = cutoffs.s_cut;
    let g =
        g.clone().lift(r).map_err(|_| Error::InvalidInput(format!("tower rank {} exceeds n - 1 = {r}", g.rank())))?;
    let index = index_set(k, r);

    // values[s][j] = g_s(t_j); row 0 is unused
    let levels: Vec<Option<BaseFn>> = index
        .iter()
        .map(|s| if s.is_empty() { Ok(None) } else { g.level_at(&dyadic_level(s)).map(Some) })
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = par::try_map(Exec::default(), &levels, |lf| match lf {
        None => Ok(vec![]),
        Some(f) => samples.iter().map(|x| f.eval(&[x.t])).collect(),
    })?;

    let points: Vec<Vec<Vec<f64>>> = (0..n).map(|i| samples.iter().map(|x| x.xs[i].clone()).collect()).collect();
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..index.len()).map(move |s| (i, s))).collect();
    let fns = par::try_map(Exec::default(), &jobs, |&(i, s)| {
        if s == 0 {
            Ok(FunctionallyClosedSet::from_samples(factors[i].clone(), points[i].clone())?.phi().clone())
        } else {
            extend_samples(&factors[i], &points[i], &values[s])
        }
    })?;
    let extended: Vec<Vec<ContFn>> = fns.chunks(index.len()).map(|c| c.to_vec()).collect();

    let mut lo = vec![0.0; index.len()];
    let mut hi = vec![1.0; index.len()];
    for s in 1..index.len() {
        let (a, b) = extended
            .iter()
            .map(|row| row[s].range())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, y)| (a.min(x), b.max(y)));
        (lo[s], hi[s]) = widen(a, b);
    }
    let weights: Vec<f64> = index.iter().map(|s| 0.5_f64.powi(s.iter().sum::<usize>() as i32)).collect();
    let model = MetricModel::weighted_sup(BoxDomain::new(lo, hi)?, weights)?;

    let embeddings = factors
        .iter()
        .zip(&extended)
        .map(|(f, row)| Embedding::new(f.clone(), row.clone()))
        .collect::<Result<Vec<_>>>()?;
    let images: Vec<Vec<Vec<f64>>> = embeddings
        .iter()
        .zip(&points)
        .map(|(e, pts)| pts.iter().map(|p| e.apply(p)).collect())
        .collect::<Result<_>>()?;
    let mut coherence: f64 = 0.0;
    for i in 1..n {
        for (a, b) in images[0].iter().zip(&images[i]) {
            coherence = coherence.max(model.dist(a, b)?);
        }
    }
    if coherence > tol.coherence {
        return Err(Error::NotProjectivelyHomeomorphic(format!("embedding images disagree on E by {coherence}")));
    }

    check_well_defined(&model, samples, &images[0], values.last().expect("nonempty index set"), tol)?;

    let mut seen = HashSet::new();
    let a_points: Vec<Vec<f64>> =
        images[0].iter().filter(|z| seen.insert(z.iter().map(|v| v.to_bits()).collect::<Vec<_>>())).cloned().collect();
    let image = FunctionallyClosedSet::from_samples(model.clone(), a_points)?;
    let g_tilde = projection_tower(&model, k, r, &mut Vec::new())?;
    let g_extended = extend_baire_from_closed(&image, &g_tilde, cutoffs.depth + 1)?;
    let inner = build_diagonal(&g_extended, n, cutoffs.depth)?;
    let flagged = inner.empirically_validated();
    let f = SepFn::from_parts(
        factors.to_vec(),
        Plan::Pullback { inner: Box::new(inner.clone()), embeddings: embeddings.clone() },
        flagged,
    )?;
    Ok(EmbeddingPlan { index_set: index, extended, embeddings, model, image, g_tilde, g_extended, inner, coherence, f })
}

/// Sample images that the model cannot tell apart must carry the same value.
fn check_well_defined(
    model: &MetricModel,
    samples: &[Sample],
    images: &[Vec<f64>],
    finest: &[f64],
    tol: &Tolerances,
) -> Result<()> {
    let n = samples.len();
    let hits = par::range_map(Exec::default(), n, |a| {
        (a + 1..n).find_map(|b| {
            let gap = (finest[a] - finest[b]).abs();
            (gap > tol.value && model.dist_unchecked(&images[a], &images[b]) <= tol.identify).then_some((
                samples[a].t,
                samples[b].t,
                gap,
            ))
        })
    });
    match hits.into_iter().flatten().next() {
        Some((t0, t1, gap)) => Err(Error::TruncationTooCoarse { t0, t1, gap }),
        None => Ok(()),
    }
}

/// Embedding solver: requires every factor claim to hold.
pub fn solve_embedding(p: &RestrictionProblem) -> Result<Solution> {
    p.validate()?;
    if p.set.claims.len() != p.arity() || !p.set.claims.iter().all(Claim::holds) {
        return Err(Error::NotProjectivelyHomeomorphic(
            "every factor needs an injectivity or bi-Lipschitz claim".into(),
        ));
    }
    let samples = p.samples()?;
    p.set.check_claims(&p.factors, &samples)?;
    let plan = solve_on_samples(&p.factors, &samples, &p.g, &p.cutoffs, &p.tolerances)?;
    Ok(Solution { f: plan.f.clone(), plans: vec![Some(plan)], injectivity: vec![], samples })
}

fn require_boxes(factors: &[MetricModel]) -> Result<()> {
    if factors.iter().all(|f| matches!(f, MetricModel::EuclideanBox { .. })) {
        Ok(())
    } else {
        Err(Error::InvalidInput("factors must be compact Euclidean boxes".into()))
    }
}

/// Injective solver: compact boxes, sampled injectivity gate, then the
/// embedding pipeline.
pub fn solve_injective(p: &RestrictionProblem) -> Result<Solution> {
    p.validate()?;
    require_boxes(&p.factors)?;
    let samples = p.samples()?;
    let t = &p.tolerances;
    let verdict = check_projective_injectivity(&p.factors, &samples, t.injectivity, t.separation);
    if let Some(w) = verdict.witness {
        return Err(Error::InjectivityRejected { t0: w.t0, t1: w.t1, factor: w.factor });
    }
    let plan = solve_on_samples(&p.factors, &samples, &p.g, &p.cutoffs, t)?;
    Ok(Solution { f: plan.f.clone(), plans: vec![Some(plan)], injectivity: vec![verdict], samples })
}

/// Glued solver: an injective solve on every cover box, extended by zero
/// outside its window and blended with a subordinate partition of unity.
pub fn solve_glued(p: &RestrictionProblem) -> Result<Solution> {
    p.validate()?;
    require_boxes(&p.factors)?;
    let domain = BoxDomain::product(&p.factors.iter().map(|f| f.bounds().clone()).collect::<Vec<_>>())?;
    let pou = PartitionOfUnity::new(&domain, &p.cover)?;
    let samples = p.samples()?;
    let t = &p.tolerances;
    let dims: Vec<usize> = p.factors.iter().map(MetricModel::dim).collect();
    let patches = par::try_range_map(Exec::default(), p.cover.len(), |idx| {
        let w = &p.cover[idx];
        let local: Vec<Sample> = samples.iter().filter(|s| w.contains(&s.flat())).cloned().collect();
        let mut at = 0;
        let factors: Vec<MetricModel> = dims
            .iter()
            .map(|d| {
                let b = w.project(at..at + d);
                at += d;
                b.map(MetricModel::euclidean)
            })
            .collect::<Result<_>>()?;
        let verdict = check_projective_injectivity(&factors, &local, t.injectivity, t.separation);
        if let Some(c) = verdict.witness {
            return Err(Error::PatchNotInjective { patch: idx, t0: c.t0, t1: c.t1, factor: c.factor });
        }
        let plan = if local.is_empty() { None } else { Some(solve_on_samples(&factors, &local, &p.g, &p.cutoffs, t)?) };
        Ok((plan, verdict))
    })?;
    let weights = pou.functions();
    let flagged = patches.iter().any(|(pl, _)| pl.as_ref().is_some_and(|x| x.f.empirically_validated()));
    let pieces = patches
        .iter()
        .zip(weights)
        .zip(&p.cover)
        .map(|(((plan, _), weight), window)| GluedPiece {
            weight,
            window: window.clone(),
            patch: plan.as_ref().map(|x| x.f.clone()),
        })
        .collect();
    let f = SepFn::from_parts(p.factors.clone(), Plan::Glued { domain, pieces }, flagged)?;
    let (plans, injectivity) = patches.into_iter().unzip();
    Ok(Solution { f, plans, injectivity, samples })
}

pub fn solve(p: &RestrictionProblem) -> Result<Solution> {
    match p.mode {
        Mode::Embedding => solve_embedding(p),
        Mode::Injective => solve_injective(p),
        Mode::Glued => solve_glued(p),
    }
}

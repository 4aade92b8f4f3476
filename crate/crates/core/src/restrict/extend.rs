//! Lipschitz and Baire-class extension from sampled subsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::expr::{self, Expr};
use crate::func::{ContFn, MetricModel};
use crate::par::{self, Exec};
use crate::tower::BaireTower;

/// Relative slack allowed when checking `|v_a - v_b| <= L d(a, b)`.
const CONSISTENCY_SLACK: f64 = 1e-12;
/// Inflation applied to an observed pair slope so that rounding in
/// `v_a + L d(x, a)` never undercuts `v_x` at a sample point.
const SLOPE_INFLATION: f64 = 1.0 + 1e-9;

fn check_samples(model: &MetricModel, samples: &[Vec<f64>], values: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidConstruction("extension needs at least one sample".into()));
    }
    if samples.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), got: values.len() });
    }
    for s in samples {
        model.check_point(s)?;
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidConstruction(format!("non-finite sample value {v}")));
    }
    Ok(())
}

/// Sorted order of one-dimensional Euclidean samples, where adjacent pairs
/// already bound every pair slope.
fn sorted_line(model: &MetricModel, samples: &[Vec<f64>]) -> Option<Vec<usize>> {
    if !matches!(model, MetricModel::EuclideanBox { .. }) || model.dim() != 1 {
        return None;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|a, b| samples[*a][0].total_cmp(&samples[*b][0]));
    Some(order)
}

/// Largest `|v_a - v_b| / d(a, b)` over sample pairs together with the pair
/// gap and distance attaining it.
fn max_slope(model: &MetricModel, samples: &[Vec<f64>], values: &[f64]) -> Result<(f64, f64, f64)> {
    let slope = |a: usize, b: usize| -> Result<(f64, f64, f64)> {
        let d = model.dist_unchecked(&samples[a], &samples[b]);
        let gap = (values[a] - values[b]).abs();
        if gap == 0.0 {
            return Ok((0.0, gap, d));
        }
        if d == 0.0 {
            return Err(Error::InconsistentValues { lip: f64::INFINITY, gap, allowed: 0.0 });
        }
        Ok((gap / d, gap, d))
    };
    let best = |x: (f64, f64, f64), y: (f64, f64, f64)| if y.0 > x.0 { y } else { x };
    if let Some(order) = sorted_line(model, samples) {
        let mut acc = (0.0, 0.0, 0.0);
        for w in order.windows(2) {
            acc = best(acc, slope(w[0], w[1])?);
        }
        return Ok(acc);
    }
    let rows = par::try_range_map(Exec::default(), samples.len(), |a| {
        let mut acc = (0.0, 0.0, 0.0);
        for b in a + 1..samples.len() {
            acc = best(acc, slope(a, b)?);
        }
        Ok(acc)
    })?;
    Ok(rows.into_iter().fold((0.0, 0.0, 0.0), best))
}

/// Smallest constant (slightly inflated) for which the sampled values are
/// Lipschitz consistent.
pub fn discrete_lipschitz(model: &MetricModel, samples: &[Vec<f64>], values: &[f64]) -> Result<f64> {
    check_samples(model, samples, values)?;
    Ok(max_slope(model, samples, values)?.0 * SLOPE_INFLATION)
}

/// McShane extension `f(x) = min_a (g(a) + L d(x, a))`, optionally clamped.
///
/// `f` agrees with the samples exactly and is `L`-Lipschitz. Fails with
/// [`Error::InconsistentValues`] when some pair violates `|g(a) - g(b)| <= L d(a, b)`.
pub fn mcshane_extend(
    model: &MetricModel,
    samples: &[Vec<f64>],
    values: &[f64],
    lip: f64,
    clamp: Option<(f64, f64)>,
) -> Result<ContFn> {
    check_samples(model, samples, values)?;
    if !(lip.is_finite() && lip >= 0.0) {
        return Err(Error::InvalidConstruction(format!("Lipschitz constant {lip}")));
    }
    let (slope, gap, d) = max_slope(model, samples, values)?;
    if slope > lip * (1.0 + CONSISTENCY_SLACK) {
        return Err(Error::InconsistentValues { lip, gap, allowed: lip * d });
    }
    let cone = |a: &Vec<f64>, v: f64| -> Expr {
        expr::add(expr::constant(v), expr::mul(expr::constant(lip), expr::dist_to(a.clone())))
    };
    let e = if lip == 0.0 {
        // every value is equal
        expr::constant(values[0])
    } else {
        Expr::Min(samples.iter().zip(values).map(|(a, v)| cone(a, *v)).collect())
    };
    let e = match clamp {
        Some((lo, hi)) => expr::clamp(e, lo, hi),
        None => e,
    };
    ContFn::new(model.clone(), e)
}

/// McShane extension with the discrete Lipschitz constant, clamped to the
/// hull of the sample values.
pub fn extend_samples(model: &MetricModel, samples: &[Vec<f64>], values: &[f64]) -> Result<ContFn> {
    let lip = discrete_lipschitz(model, samples, values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mcshane_extend(model, samples, values, lip, Some((lo, hi)))
}

/// A set `A = phi^-1(0)` with `phi: X -> [0, 1]` continuous, carried by a
/// finite sample of its points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionallyClosedSet {
    ambient: MetricModel,
    phi: ContFn,
    samples: Vec<Vec<f64>>,
}

impl FunctionallyClosedSet {
    pub fn new(ambient: MetricModel, phi: ContFn, samples: Vec<Vec<f64>>) -> Result<Self> {
        if phi.domain() != &ambient {
            return Err(Error::InvalidConstruction("phi lives on another domain".into()));
        }
        let (lo, hi) = phi.range();
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::InvalidConstruction(format!("phi range [{lo}, {hi}] not inside [0, 1]")));
        }
        if samples.is_empty() {
            return Err(Error::InvalidConstruction("closed set without samples".into()));
        }
        for s in &samples {
            let v = phi.eval(s)?;
            if v != 0.0 {
                return Err(Error::InvalidConstruction(format!("phi({s:?}) = {v}, expected 0")));
            }
        }
        Ok(FunctionallyClosedSet { ambient, phi, samples })
    }

    /// The closure of a finite sample, with `phi = min(1, d(x, samples))`.
    pub fn from_samples(ambient: MetricModel, samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConstruction("closed set without samples".into()));
        }
        let e = expr::clamp(Expr::Min(samples.iter().map(|a| expr::dist_to(a.clone())).collect()), 0.0, 1.0);
        let phi = ContFn::new(ambient.clone(), e)?;
        FunctionallyClosedSet::new(ambient, phi, samples)
    }

    pub fn ambient(&self) -> &MetricModel {
        &self.ambient
    }

    pub fn phi(&self) -> &ContFn {
        &self.phi
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// `1 - min(1, k phi)`: equal to 1 on `A` and to 0 where `phi >= 1/k`.
    pub fn cutoff_expr(&self, k: usize) -> Expr {
        expr::sub(
            expr::constant(1.0),
            expr::min2(expr::constant(1.0), expr::mul(expr::constant(k as f64), self.phi.expr().clone())),
        )
    }
}

/// Extends a tower known on the samples of `a` to the whole ambient space.
///
/// A rank-`r` input (`r >= 1`) yields a rank-`r` tower whose level at index
/// path `(k_1, .., k_r)` is `mcshane(g_{k_1..k_r}|A) * prod_j (1 - min(1, k_j phi))`;
/// a rank-0 input is treated as a constant sequence and yields rank 1. The
/// limit equals `g` on `A` and vanishes off `A`, and for `x` off `A` every
/// level with some `k_j >= 1/phi(x)` is exactly 0. Each family carries
/// `levels` materialized levels.
pub fn extend_baire_from_closed(a: &FunctionallyClosedSet, g: &BaireTower, levels: usize) -> Result<BaireTower> {
    if g.domain() != a.ambient() {
        return Err(Error::InvalidConstruction("tower and closed set live on different spaces".into()));
    }
    if levels == 0 {
        return Err(Error::InvalidConstruction("extension needs at least one level".into()));
    }
    let g = g.clone().lift(g.rank().max(1))?;
    extend_rec(a, &g, levels, &[])
}

fn extend_rec(a: &FunctionallyClosedSet, g: &BaireTower, levels: usize, path: &[usize]) -> Result<BaireTower> {
    match g {
        BaireTower::Base(f) => {
            let values = a.samples().iter().map(|x| f.eval(x)).collect::<Result<Vec<_>>>()?;
            let m = extend_samples(a.ambient(), a.samples(), &values)?;
            let e = path.iter().fold(m.expr().clone(), |acc, k| expr::mul(acc, a.cutoff_expr(*k)));
            Ok(BaireTower::base(ContFn::new(a.ambient().clone(), e)?))
        }
        BaireTower::Node(_) => {
            let subs = par::try_range_map(Exec::default(), levels, |i| {
                let k = i + 1;
                let mut next = path.to_vec();
                next.push(k);
                extend_rec(a, &g.level(k)?, levels, &next)
            })?;
            BaireTower::explicit(subs, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::gallery;

    fn unit() -> MetricModel {
        MetricModel::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn mcshane_hand_values() {
        let f = mcshane_extend(&unit(), &[vec![0.0]], &[1.0], 2.0, None).unwrap();
        assert_eq!(f.eval(&[0.5]).unwrap(), 2.0);
        assert_eq!(f.eval(&[0.0]).unwrap(), 1.0);
        let f = mcshane_extend(&unit(), &[vec![0.0]], &[1.0], 2.0, Some((0.0, 1.0))).unwrap();
        assert_eq!(f.eval(&[0.5]).unwrap(), 1.0);
    }

    #[test]
    fn mcshane_constant_values() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![-1.0 + 0.25 * i as f64]).collect();
        let f = extend_samples(&unit(), &pts, &[0.7; 9]).unwrap();
        for x in [-1.0, -0.33, 0.1, 0.99] {
            assert_eq!(f.eval(&[x]).unwrap(), 0.7);
        }
    }

    #[test]
    fn mcshane_rejects_inconsistent() {
        let r = mcshane_extend(&unit(), &[vec![0.0], vec![0.5]], &[0.0, 1.0], 1.0, None);
        assert!(matches!(r, Err(Error::InconsistentValues { .. })));
        let r = discrete_lipschitz(&unit(), &[vec![0.1], vec![0.1]], &[0.0, 1.0]);
        assert!(matches!(r, Err(Error::InconsistentValues { .. })));
    }

    #[test]
    fn mcshane_exact_on_samples_2d() {
        let model = MetricModel::euclidean(crate::func::BoxDomain::cube(2, 0.0, 1.0).unwrap());
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()]).collect();
        let vals: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() * p[1]).collect();
        let f = extend_samples(&model, &pts, &vals).unwrap();
        for (p, v) in pts.iter().zip(&vals) {
            assert_eq!(f.eval(p).unwrap(), *v);
        }
    }

    #[test]
    fn discrete_lipschitz_line_matches_brute_force() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![((i * 37) % 50) as f64 / 25.0 - 1.0]).collect();
        let vals: Vec<f64> = pts.iter().map(|p| (5.0 * p[0]).cos()).collect();
        let fast = discrete_lipschitz(&unit(), &pts, &vals).unwrap();
        let mut brute: f64 = 0.0;
        for i in 0..pts.len() {
            for j in 0..i {
                let d = (pts[i][0] - pts[j][0]).abs();
                brute = brute.max((vals[i] - vals[j]).abs() / d);
            }
        }
        assert!((fast / (1.0 + 1e-9) - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn closed_set_point_hand_values() {
        let phi = ContFn::new(unit(), expr::abs(expr::coord(0))).unwrap();
        let a = FunctionallyClosedSet::new(unit(), phi, vec![vec![0.0]]).unwrap();
        let g = BaireTower::constant(unit(), 1.0).unwrap();
        let ext = extend_baire_from_closed(&a, &g, 4).unwrap();
        assert_eq!(ext.rank(), 1);
        let at = |k: usize, x: f64| ext.level(k).unwrap().as_base().unwrap().eval(&[x]).unwrap();
        assert_eq!(at(1, 0.5), 0.5);
        assert_eq!(at(2, 0.5), 0.0);
        assert_eq!(at(4, 0.5), 0.0);
        for k in 1..=4 {
            assert_eq!(at(k, 0.0), 1.0);
        }
    }

    #[test]
    fn whole_space_extension_keeps_samples() {
        let pts: Vec<Vec<f64>> = (0..=16).map(|i| vec![-1.0 + i as f64 / 8.0]).collect();
        let a = FunctionallyClosedSet::from_samples(unit(), pts.clone()).unwrap();
        let g = gallery("sign").unwrap();
        let ext = extend_baire_from_closed(&a, &g, 6).unwrap();
        for k in 1..=6 {
            let lk = ext.level(k).unwrap();
            let gk = g.level(k).unwrap();
            for p in &pts {
                assert_eq!(lk.as_base().unwrap().eval(p).unwrap(), gk.as_base().unwrap().eval(p).unwrap());
            }
        }
    }

    #[test]
    fn rank_two_extension_vanishes_off_set() {
        let phi = ContFn::new(unit(), expr::abs(expr::coord(0))).unwrap();
        let a = FunctionallyClosedSet::new(unit(), phi, vec![vec![0.0]]).unwrap();
        let g = gallery("two-limit-indicator").unwrap();
        let ext = extend_baire_from_closed(&a, &g, 5).unwrap();
        assert_eq!(ext.rank(), 2);
        let v = ext.level_at(&[1, 3]).unwrap().eval(&[0.5]).unwrap();
        assert_eq!(v, 0.0);
        let v = ext.level_at(&[5, 5]).unwrap().eval(&[0.0]).unwrap();
        let want = g.level_at(&[5, 5]).unwrap().eval(&[0.0]).unwrap();
        assert_eq!(v, want);
    }

    #[test]
    fn bad_phi_rejected() {
        let phi = ContFn::new(unit(), expr::coord(0)).unwrap();
        assert!(FunctionallyClosedSet::new(unit(), phi, vec![vec![0.0]]).is_err());
        let phi = ContFn::new(unit(), expr::abs(expr::coord(0))).unwrap();
        assert!(FunctionallyClosedSet::new(unit(), phi, vec![vec![0.5]]).is_err());
    }
}

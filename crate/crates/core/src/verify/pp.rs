//! Dyadic covers with marked points, and the tower they induce from a
//! function with continuous sections.

use std::sync::Arc;

use crate::diagonal::SepFn;
use crate::error::{Error, Result};
use crate::func::{BoxDomain, MetricModel, PartitionOfUnity};
use crate::tower::{BaireTower, BaseFn, IndexSchedule, NativeFamily, NativeFn};

const MAX_BOXES: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct PPLevel {
    pub boxes: Vec<BoxDomain>,
    /// `marked[i]` is the centre of `boxes[i]`.
    pub marked: Vec<Vec<f64>>,
    pub mesh: f64,
    pou: PartitionOfUnity,
}

impl PPLevel {
    /// Nonzero partition weights at `x` as `(box index, weight)`.
    pub fn weights_at(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.pou.weights_at(x)
    }
}

/// Level `n` covers the box by boxes of side `2^-n` times the width on each
/// axis, offset by half a side, so neighbouring boxes overlap by 50%.
#[derive(Debug, Clone)]
pub struct PPStructure {
    domain: BoxDomain,
    levels: Vec<PPLevel>,
}

fn axis_intervals(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let count = (1usize << (n + 1)) - 1;
    let side = (hi - lo) / (1u64 << n) as f64;
    (0..count)
        .map(|j| {
            let a = lo + j as f64 * side / 2.0;
            let b = if j + 1 == count { hi } else { a + side };
            (a, b)
        })
        .collect()
}

pub fn pp_structure(domain: &BoxDomain, depth: usize) -> Result<PPStructure> {
    if depth == 0 {
        return Err(Error::InvalidInput("pp depth must be at least 1".into()));
    }
    let d = domain.dim();
    let per_axis = (1usize << (depth + 1)) - 1;
    if per_axis.checked_pow(d as u32).is_none_or(|c| c > MAX_BOXES) {
        return Err(Error::BudgetExceeded(format!("pp cover of depth {depth} in dimension {d}")));
    }
    let mut levels = Vec::with_capacity(depth);
    for n in 1..=depth {
        let axes: Vec<Vec<(f64, f64)>> = (0..d).map(|a| axis_intervals(domain.lo()[a], domain.hi()[a], n)).collect();
        let mut boxes = vec![(vec![], vec![])];
        for ax in &axes {
            boxes = boxes
                .into_iter()
                .flat_map(|(lo, hi): (Vec<f64>, Vec<f64>)| {
                    ax.iter().map(move |(a, b)| {
                        let mut l = lo.clone();
                        let mut h = hi.clone();
                        l.push(*a);
                        h.push(*b);
                        (l, h)
                    })
                })
                .collect();
        }
        let boxes = boxes.into_iter().map(|(l, h)| BoxDomain::new(l, h)).collect::<Result<Vec<_>>>()?;
        let marked = boxes.iter().map(BoxDomain::center).collect();
        let mesh = boxes.iter().map(|b| MetricModel::euclidean(b.clone()).diameter()).fold(0.0, f64::max);
        let pou = PartitionOfUnity::new_unchecked(domain, &boxes)?;
        levels.push(PPLevel { boxes, marked, mesh, pou });
    }
    Ok(PPStructure { domain: domain.clone(), levels })
}

impl PPStructure {
    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `n` for `1 <= n`; indices past the depth reuse the deepest level.
    pub fn level(&self, n: usize) -> &PPLevel {
        &self.levels[n.clamp(1, self.levels.len()) - 1]
    }

    pub fn mesh(&self, n: usize) -> f64 {
        self.level(n).mesh
    }
}

pub type SectionFn = dyn Fn(&[Vec<f64>]) -> Result<f64> + Send + Sync;

/// Rank-`(n-1)` tower for a function of `n` variables on `X^n`, `X` the pp
/// domain.
///
/// The level at index path `(k_1, .., k_{n-1})` is
/// `sum prod_j w_{k_j, i_j}(x_j) * f(p_{k_1, i_1}, .., p_{k_{n-1}, i_{n-1}}, x_n)`,
/// replacing each of the first `n - 1` variables by the marked points of
/// the covering boxes. Each level is continuous when the sections of `f` in
/// the last variable are; the iterated limit recovers `f` at every point
/// where the successive sections are continuous. `budget` caps the number of
/// cover elements the unfolded variables range over.
pub fn tower_from_fn(f: Arc<SectionFn>, pp: Arc<PPStructure>, arity: usize, budget: usize) -> Result<BaireTower> {
    if arity < 2 {
        return Err(Error::InvalidInput(format!("arity {arity} < 2")));
    }
    let needed = pp.level(pp.depth()).boxes.len().saturating_mul(arity - 1);
    if needed > budget {
        return Err(Error::BudgetExceeded(format!("{needed} cover elements > budget {budget}")));
    }
    let domain = MetricModel::euclidean(BoxDomain::product(&vec![pp.domain().clone(); arity])?);
    Ok(unfold(f, pp, domain, arity, Vec::new()))
}

fn unfold(
    f: Arc<SectionFn>,
    pp: Arc<PPStructure>,
    domain: MetricModel,
    arity: usize,
    prefix: Vec<usize>,
) -> BaireTower {
    let rank = arity - 1 - prefix.len();
    if rank == 0 {
        let d = pp.domain().dim();
        let g = NativeFn::new("pp-level", domain, move |x: &[f64]| {
            let xs: Vec<Vec<f64>> = x.chunks(d).map(<[f64]>::to_vec).collect();
            let mut args = xs.clone();
            sum_level(&*f, &pp, &prefix, &xs, &mut args, 0, 1.0)
        });
        return BaireTower::Base(BaseFn::Native(g));
    }
    let dom = domain.clone();
    let family = NativeFamily::new("pp-unfold", move |k| {
        let mut next = prefix.clone();
        next.push(k);
        Ok(unfold(f.clone(), pp.clone(), dom.clone(), arity, next))
    });
    BaireTower::native(rank, domain, family).expect("rank >= 1")
}

fn sum_level(
    f: &SectionFn,
    pp: &PPStructure,
    prefix: &[usize],
    xs: &[Vec<f64>],
    args: &mut Vec<Vec<f64>>,
    j: usize,
    weight: f64,
) -> Result<f64> {
    if j == prefix.len() {
        return Ok(weight * f(args)?);
    }
    let level = pp.level(prefix[j]);
    let mut acc = 0.0;
    for (i, w) in level.weights_at(&xs[j])? {
        args[j] = level.marked[i].clone();
        acc += sum_level(f, pp, prefix, xs, args, j + 1, weight * w)?;
    }
    Ok(acc)
}

/// [`tower_from_fn`] for a constructed function evaluated with schedule `s`.
pub fn tower_from_sepfn(f: &SepFn, pp: Arc<PPStructure>, budget: usize, s: IndexSchedule) -> Result<BaireTower> {
    let want = MetricModel::euclidean(pp.domain().clone());
    if f.factors().iter().any(|m| m != &want) {
        return Err(Error::InvalidInput("every factor must equal the pp domain".into()));
    }
    let g = f.clone();
    let arity = g.arity();
    tower_from_fn(Arc::new(move |xs: &[Vec<f64>]| Ok(g.eval(xs, &s)?.value)), pp, arity, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::tower_eval;

    #[test]
    fn unit_interval_depth_one() {
        let pp = pp_structure(&BoxDomain::interval(0.0, 1.0).unwrap(), 1).unwrap();
        let l = pp.level(1);
        assert_eq!(l.boxes.len(), 3);
        assert_eq!(l.marked, vec![vec![0.25], vec![0.5], vec![0.75]]);
        for (b, m) in l.boxes.iter().zip(&l.marked) {
            assert!(b.contains(m));
        }
    }

    #[test]
    fn mesh_halves() {
        let pp = pp_structure(&BoxDomain::interval(-1.0, 1.0).unwrap(), 7).unwrap();
        for n in 1..7 {
            assert_eq!(pp.mesh(n + 1) / pp.mesh(n), 0.5);
        }
        assert_eq!(pp.mesh(7), 2.0 / 128.0);
    }

    #[test]
    fn marked_points_near_x() {
        let pp = pp_structure(&BoxDomain::interval(0.0, 1.0).unwrap(), 6).unwrap();
        for n in 1..=6 {
            let l = pp.level(n);
            for j in 0..=200 {
                let x = j as f64 / 200.0;
                let w = l.weights_at(&[x]).unwrap();
                let s: f64 = w.iter().map(|p| p.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
                for (i, _) in w {
                    assert!((l.marked[i][0] - x).abs() <= l.mesh);
                }
            }
        }
    }

    #[test]
    fn constant_function_levels_exact() {
        let pp = Arc::new(pp_structure(&BoxDomain::interval(0.0, 1.0).unwrap(), 4).unwrap());
        let t = tower_from_fn(Arc::new(|_: &[Vec<f64>]| Ok(0.5)), pp, 3, 1000).unwrap();
        assert_eq!(t.rank(), 2);
        for k in [1, 2, 4, 9] {
            for x in [[0.1, 0.7, 0.3], [0.0, 1.0, 0.5]] {
                assert_eq!(t.level_at(&[k, k]).unwrap().eval(&x).unwrap(), 0.5);
            }
        }
    }

    #[test]
    fn product_recovered() {
        let pp = Arc::new(pp_structure(&BoxDomain::interval(-1.0, 1.0).unwrap(), 7).unwrap());
        let mesh = pp.mesh(7);
        let t = tower_from_fn(Arc::new(|xs: &[Vec<f64>]| Ok(xs[0][0] * xs[1][0])), pp, 2, 1 << 16).unwrap();
        let s = IndexSchedule::uniform(1 << 30);
        for j in 0..=40 {
            let x = -1.0 + j as f64 / 20.0;
            let y = 0.3 - x / 3.0;
            let v = tower_eval(&t, &[x, y], &s).unwrap().value;
            assert!((v - x * y).abs() <= mesh, "({x}, {y})");
        }
    }

    #[test]
    fn budget_enforced() {
        let pp = Arc::new(pp_structure(&BoxDomain::interval(0.0, 1.0).unwrap(), 5).unwrap());
        let r = tower_from_fn(Arc::new(|_: &[Vec<f64>]| Ok(0.0)), pp, 2, 10);
        assert!(matches!(r, Err(Error::BudgetExceeded(_))));
    }
}

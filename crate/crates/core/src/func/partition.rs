use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::domain::{BoxDomain, MetricModel};
use super::expr::{self, Expr};
use super::ContFn;
use crate::error::{Error, Result};

/// A nonnegative continuous function vanishing outside `support`.
///
/// Partition-of-unity members are stored as `numerator / sum(normalizer)`
/// since the expression calculus has no division node.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SupportedFn {
    pub support: BoxDomain,
    numerator: ContFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalizer: Option<Arc<Vec<ContFn>>>,
}

impl SupportedFn {
    pub fn plain(f: ContFn, support: BoxDomain) -> Self {
        SupportedFn { support, numerator: f, normalizer: None }
    }

    pub fn domain(&self) -> &MetricModel {
        self.numerator.domain()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let num = self.numerator.eval(x)?;
        match &self.normalizer {
            None => Ok(num),
            Some(all) => {
                if num == 0.0 {
                    return Ok(0.0);
                }
                let total: f64 = all.iter().map(|h| h.eval_unchecked(x)).sum();
                if total <= 0.0 {
                    return Err(Error::CoverGap { point: x.to_vec() });
                }
                Ok(num / total)
            }
        }
    }
}

/// Tensor-product hat partition of unity subordinate to a box cover.
///
/// Each cover box carries a tent per axis peaking at the box centre and
/// vanishing on the box faces, except faces on the domain boundary where the
/// tent stays flat at 1. Weights are hats normalized by their sum.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    domain: BoxDomain,
    boxes: Vec<BoxDomain>,
    hats: Arc<Vec<ContFn>>,
}

fn axis_tent(domain: &BoxDomain, b: &BoxDomain, axis: usize) -> Expr {
    let (lo, hi) = (b.lo()[axis], b.hi()[axis]);
    let mid = 0.5 * (lo + hi);
    let mut knots = Vec::with_capacity(3);
    if lo > domain.lo()[axis] {
        knots.push((lo, 0.0));
    }
    knots.push((mid, 1.0));
    if hi < domain.hi()[axis] {
        knots.push((hi, 0.0));
    }
    if knots.len() == 1 {
        return expr::constant(1.0);
    }
    expr::pl(expr::coord(axis), knots)
}

fn hat(domain: &BoxDomain, b: &BoxDomain) -> Result<ContFn> {
    let mut e: Option<Expr> = None;
    for axis in 0..domain.dim() {
        let t = axis_tent(domain, b, axis);
        if matches!(t, Expr::Const(_)) {
            continue;
        }
        e = Some(match e {
            None => t,
            Some(prev) => expr::mul(prev, t),
        });
    }
    ContFn::new(MetricModel::euclidean(domain.clone()), e.unwrap_or(expr::constant(1.0)))
}

/// Representative points of every cell of the arrangement cut out by the
/// cover box faces; coverage is constant on each cell.
fn arrangement_points(domain: &BoxDomain, cover: &[BoxDomain]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|a| {
            let (dlo, dhi) = (domain.lo()[a], domain.hi()[a]);
            let mut cuts: Vec<f64> = vec![dlo, dhi];
            for b in cover {
                for v in [b.lo()[a], b.hi()[a]] {
                    if v > dlo && v < dhi {
                        cuts.push(v);
                    }
                }
            }
            cuts.sort_by(|x, y| x.total_cmp(y));
            cuts.dedup();
            let mut pts = Vec::with_capacity(2 * cuts.len());
            for w in cuts.windows(2) {
                pts.push(w[0]);
                pts.push(0.5 * (w[0] + w[1]));
            }
            pts.push(dhi);
            pts
        })
        .collect();
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for pts in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                pts.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

const MAX_ARRANGEMENT_POINTS: usize = 200_000;

impl PartitionOfUnity {
    pub fn new(domain: &BoxDomain, cover: &[BoxDomain]) -> Result<Self> {
        let pou = Self::new_unchecked(domain, cover)?;
        let cells: usize = (0..domain.dim()).map(|_| 2 * (2 * cover.len() + 2)).product();
        if cells <= MAX_ARRANGEMENT_POINTS {
            for p in arrangement_points(domain, cover) {
                if !pou.boxes.iter().any(|b| b.contains_relative_interior(&p, domain)) {
                    return Err(Error::CoverGap { point: p });
                }
            }
        }
        Ok(pou)
    }

    /// Skips the coverage check; for covers that are complete by construction.
    pub(crate) fn new_unchecked(domain: &BoxDomain, cover: &[BoxDomain]) -> Result<Self> {
        if cover.is_empty() {
            return Err(Error::CoverGap { point: domain.center() });
        }
        for b in cover {
            if b.dim() != domain.dim() {
                return Err(Error::DimensionMismatch { expected: domain.dim(), got: b.dim() });
            }
        }
        let hats = cover.iter().map(|b| hat(domain, b)).collect::<Result<Vec<_>>>()?;
        Ok(PartitionOfUnity { domain: domain.clone(), boxes: cover.to_vec(), hats: Arc::new(hats) })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn boxes(&self) -> &[BoxDomain] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Nonzero weights at `x` as `(index, weight)` pairs in index order.
    pub fn weights_at(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if !self.domain.contains(x) {
            return Err(Error::PointOutsideDomain { point: x.to_vec() });
        }
        let mut raw = Vec::new();
        let mut total = 0.0;
        for (i, (b, h)) in self.boxes.iter().zip(self.hats.iter()).enumerate() {
            if !b.contains(x) {
                continue;
            }
            let v = h.eval_unchecked(x);
            if v > 0.0 {
                raw.push((i, v));
                total += v;
            }
        }
        if total <= 0.0 {
            return Err(Error::CoverGap { point: x.to_vec() });
        }
        Ok(raw.into_iter().map(|(i, v)| (i, v / total)).collect())
    }

    pub fn functions(&self) -> Vec<SupportedFn> {
        self.boxes
            .iter()
            .zip(self.hats.iter())
            .map(|(b, h)| SupportedFn { support: b.clone(), numerator: h.clone(), normalizer: Some(self.hats.clone()) })
            .collect()
    }
}

/// Partition of unity subordinate to `cover` on `domain`.
pub fn partition_of_unity(domain: &BoxDomain, cover: &[BoxDomain]) -> Result<Vec<SupportedFn>> {
    Ok(PartitionOfUnity::new(domain, cover)?.functions())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> BoxDomain {
        BoxDomain::interval(a, b).unwrap()
    }

    #[test]
    fn single_box_is_one() {
        let d = iv(0.0, 1.0);
        let p = partition_of_unity(&d, std::slice::from_ref(&d)).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(p[0].eval(&[x]).unwrap(), 1.0);
        }
    }

    #[test]
    fn two_box_midpoint() {
        // hand values: both hats equal 1/3 at 0.5, normalized to 1/2 each
        let d = iv(0.0, 1.0);
        let p = partition_of_unity(&d, &[iv(0.0, 0.6), iv(0.4, 1.0)]).unwrap();
        assert!((p[0].eval(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((p[1].eval(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(p[0].eval(&[0.2]).unwrap(), 1.0);
        assert_eq!(p[1].eval(&[0.2]).unwrap(), 0.0);
        assert_eq!(p[0].eval(&[0.0]).unwrap(), 1.0);
        assert_eq!(p[1].eval(&[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn gap_detected() {
        let d = iv(0.0, 1.0);
        let r = partition_of_unity(&d, &[iv(0.0, 0.4), iv(0.5, 1.0)]);
        assert!(matches!(r, Err(Error::CoverGap { .. })));
        // touching closed boxes leave the shared face uncovered by open interiors
        let r = partition_of_unity(&d, &[iv(0.0, 0.5), iv(0.5, 1.0)]);
        assert!(matches!(r, Err(Error::CoverGap { .. })));
    }

    #[test]
    fn weights_at_matches_functions() {
        let d = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let cover = vec![
            BoxDomain::new(vec![0.0, 0.0], vec![0.55, 1.0]).unwrap(),
            BoxDomain::new(vec![0.45, 0.0], vec![1.0, 0.7]).unwrap(),
            BoxDomain::new(vec![0.45, 0.6], vec![1.0, 1.0]).unwrap(),
        ];
        let pou = PartitionOfUnity::new(&d, &cover).unwrap();
        let fs = pou.functions();
        for p in d.grid(23) {
            let w = pou.weights_at(&p).unwrap();
            let s: f64 = w.iter().map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for (i, v) in w {
                assert!((fs[i].eval(&p).unwrap() - v).abs() < 1e-15);
            }
        }
    }
}

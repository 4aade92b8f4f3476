use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBox> for BoxDomain {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        BoxDomain::new(raw.lo, raw.hi)
    }
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidDomain("box must have positive dimension".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!("coordinate {i}: need finite lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo], vec![hi])
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Membership in the interior of `self` relative to `ambient`: faces of
    /// `self` that lie on (or beyond) the ambient boundary count as open.
    pub fn contains_relative_interior(&self, x: &[f64], ambient: &BoxDomain) -> bool {
        if x.len() != self.dim() || ambient.dim() != self.dim() {
            return false;
        }
        (0..self.dim()).all(|i| {
            let v = x[i];
            let left_ok = if self.lo[i] <= ambient.lo[i] { v >= self.lo[i] } else { v > self.lo[i] };
            let right_ok = if self.hi[i] >= ambient.hi[i] { v <= self.hi[i] } else { v < self.hi[i] };
            left_ok && right_ok
        })
    }

    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        BoxDomain::new(lo, hi).ok()
    }

    /// Coordinates `range` of the box as a lower-dimensional box.
    pub fn project(&self, range: std::ops::Range<usize>) -> Result<BoxDomain> {
        BoxDomain::new(self.lo[range.clone()].to_vec(), self.hi[range].to_vec())
    }

    pub fn product(boxes: &[BoxDomain]) -> Result<BoxDomain> {
        let lo = boxes.iter().flat_map(|b| b.lo.iter().copied()).collect();
        let hi = boxes.iter().flat_map(|b| b.hi.iter().copied()).collect();
        BoxDomain::new(lo, hi)
    }

    /// Grid of `per_axis` points per coordinate, row-major, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(self.dim() as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; self.dim()];
                for d in (0..self.dim()).rev() {
                    let j = idx % per_axis;
                    idx /= per_axis;
                    p[d] = lerp_grid(self.lo[d], self.hi[d], j, per_axis);
                }
                p
            })
            .collect()
    }
}

/// `lo + (hi - lo) * j / (n - 1)`, exact at both endpoints.
pub fn lerp_grid(lo: f64, hi: f64, j: usize, n: usize) -> f64 {
    if n <= 1 {
        return lo;
    }
    if j + 1 == n {
        return hi;
    }
    lo + (hi - lo) * (j as f64) / ((n - 1) as f64)
}

/// The metric spaces every construction lives in.
///
/// `WeightedSupSequence` is a finite truncation of a countable product of
/// real lines with `d(p, q) = max_s w_s * min(1, |p_s - q_s|)`; its points are
/// additionally confined to `bounds` so that coordinate projections have
/// finite Lipschitz constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", try_from = "RawModel")]
pub enum MetricModel {
    EuclideanBox { domain: BoxDomain },
    WeightedSupSequence { bounds: BoxDomain, weights: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum RawModel {
    EuclideanBox { domain: BoxDomain },
    WeightedSupSequence { bounds: BoxDomain, weights: Vec<f64> },
}

impl TryFrom<RawModel> for MetricModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        match raw {
            RawModel::EuclideanBox { domain } => Ok(MetricModel::EuclideanBox { domain }),
            RawModel::WeightedSupSequence { bounds, weights } => MetricModel::weighted_sup(bounds, weights),
        }
    }
}

impl MetricModel {
    pub fn euclidean(domain: BoxDomain) -> Self {
        MetricModel::EuclideanBox { domain }
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Ok(MetricModel::EuclideanBox { domain: BoxDomain::interval(lo, hi)? })
    }

    pub fn weighted_sup(bounds: BoxDomain, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != bounds.dim() {
            return Err(Error::DimensionMismatch { expected: bounds.dim(), got: weights.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(Error::InvalidDomain(format!("weight {w} outside (0, 1]")));
        }
        Ok(MetricModel::WeightedSupSequence { bounds, weights })
    }

    pub fn bounds(&self) -> &BoxDomain {
        match self {
            MetricModel::EuclideanBox { domain } => domain,
            MetricModel::WeightedSupSequence { bounds, .. } => bounds,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().dim()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.bounds().contains(p)
    }

    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        if !self.contains(p) {
            return Err(Error::PointOutsideDomain { point: p.to_vec() });
        }
        Ok(())
    }

    pub fn dist(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: q.len() });
        }
        Ok(self.dist_unchecked(p, q))
    }

    /// Distance without length checks; callers guarantee matching dimensions.
    pub fn dist_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            MetricModel::EuclideanBox { .. } => {
                if p.len() == 1 {
                    return (p[0] - q[0]).abs();
                }
                p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
            MetricModel::WeightedSupSequence { weights, .. } => {
                p.iter().zip(q).zip(weights).map(|((a, b), w)| w * (a - b).abs().min(1.0)).fold(0.0, f64::max)
            }
        }
    }

    /// Lipschitz constant of the projection onto coordinate `i`.
    pub fn coord_lipschitz(&self, i: usize) -> f64 {
        match self {
            MetricModel::EuclideanBox { .. } => 1.0,
            // |dp| <= max(1, width) * min(1, |dp|) on a coordinate of the given width.
            MetricModel::WeightedSupSequence { bounds, weights } => bounds.width(i).max(1.0) / weights[i],
        }
    }

    /// Largest distance from `p` to any point of the model (an upper bound).
    pub fn max_dist_from(&self, p: &[f64]) -> f64 {
        let b = self.bounds();
        let far: Vec<f64> = (0..b.dim()).map(|i| (p[i] - b.lo()[i]).abs().max((p[i] - b.hi()[i]).abs())).collect();
        match self {
            MetricModel::EuclideanBox { .. } => far.iter().map(|v| v * v).sum::<f64>().sqrt(),
            MetricModel::WeightedSupSequence { weights, .. } => {
                far.iter().zip(weights).map(|(v, w)| w * v.min(1.0)).fold(0.0, f64::max)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let b = self.bounds();
        self.dist_unchecked(b.lo(), b.hi())
    }
}

//! Parametrized subsets `E = {(e_1(t), .., e_n(t))}` of a product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{lerp_grid, BoxDomain, ContFn, Expr, MetricModel};
use crate::par::{self, Exec};

/// One parameter interval with its coordinate maps: `maps[i][j]` is the
/// `j`-th coordinate of `e_i(t)`, an expression in `coord(0) = t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub t_lo: f64,
    pub t_hi: f64,
    pub maps: Vec<Vec<Expr>>,
}

/// What the caller asserts about the projection onto one factor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Claim {
    #[serde(default)]
    pub injective: bool,
    /// `(lower, upper)` with `lower |t - t'| <= d(e_i(t), e_i(t')) <= upper |t - t'|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bilipschitz: Option<(f64, f64)>,
}

impl Claim {
    pub fn holds(&self) -> bool {
        self.injective || self.bilipschitz.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub pieces: Vec<Piece>,
    #[serde(default)]
    pub claims: Vec<Claim>,
}

/// A point of `E` with its parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Index of the piece the parameter came from.
    pub piece: usize,
    pub xs: Vec<Vec<f64>>,
}

impl Sample {
    pub fn flat(&self) -> Vec<f64> {
        self.xs.iter().flatten().copied().collect()
    }
}

impl ParamSet {
    /// Number of factors `n`.
    pub fn arity(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.maps.len())
    }

    /// Smallest interval containing every parameter piece.
    pub fn param_domain(&self) -> Result<BoxDomain> {
        let lo = self.pieces.iter().map(|p| p.t_lo).fold(f64::INFINITY, f64::min);
        let hi = self.pieces.iter().map(|p| p.t_hi).fold(f64::NEG_INFINITY, f64::max);
        BoxDomain::interval(lo, hi)
    }

    pub fn validate(&self, factors: &[MetricModel]) -> Result<()> {
        if self.pieces.is_empty() {
            return Err(Error::InvalidInput("parametrized set without pieces".into()));
        }
        for (p, piece) in self.pieces.iter().enumerate() {
            if !(piece.t_lo.is_finite() && piece.t_hi.is_finite() && piece.t_lo <= piece.t_hi) {
                return Err(Error::InvalidInput(format!("piece {p}: bad parameter interval")));
            }
            if piece.maps.len() != factors.len() {
                return Err(Error::DimensionMismatch { expected: factors.len(), got: piece.maps.len() });
            }
            for (m, f) in piece.maps.iter().zip(factors) {
                if m.len() != f.dim() {
                    return Err(Error::DimensionMismatch { expected: f.dim(), got: m.len() });
                }
            }
        }
        if !self.claims.is_empty() && self.claims.len() != factors.len() {
            return Err(Error::DimensionMismatch { expected: factors.len(), got: self.claims.len() });
        }
        Ok(())
    }

    fn piece_fns(&self, piece: &Piece) -> Result<Vec<Vec<ContFn>>> {
        let dom = MetricModel::interval(piece.t_lo, piece.t_hi)?;
        piece.maps.iter().map(|m| m.iter().map(|e| ContFn::new(dom.clone(), e.clone())).collect()).collect()
    }

    /// `per_piece` equally spaced parameters on every piece (endpoints
    /// included), mapped into the factors.
    pub fn samples(&self, factors: &[MetricModel], per_piece: usize) -> Result<Vec<Sample>> {
        self.validate(factors)?;
        if per_piece == 0 {
            return Err(Error::InvalidInput("sample count must be positive".into()));
        }
        let mut out = Vec::new();
        for (p, piece) in self.pieces.iter().enumerate() {
            let fns = self.piece_fns(piece)?;
            let n = if piece.t_lo == piece.t_hi { 1 } else { per_piece };
            for j in 0..n {
                let t = if n == 1 { piece.t_lo } else { lerp_grid(piece.t_lo, piece.t_hi, j, n) };
                let xs: Vec<Vec<f64>> = fns
                    .iter()
                    .map(|coords| coords.iter().map(|c| c.eval(&[t])).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?;
                for (x, f) in xs.iter().zip(factors) {
                    f.check_point(x)?;
                }
                out.push(Sample { t, piece: p, xs });
            }
        }
        Ok(out)
    }

    /// Checks declared bi-Lipschitz bounds on consecutive samples of each piece.
    pub fn check_claims(&self, factors: &[MetricModel], samples: &[Sample]) -> Result<()> {
        for (i, claim) in self.claims.iter().enumerate() {
            let Some((lo, hi)) = claim.bilipschitz else { continue };
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::NotProjectivelyHomeomorphic(format!(
                    "factor {i}: bi-Lipschitz bounds ({lo}, {hi}) are not 0 < lower <= upper"
                )));
            }
            for w in samples.windows(2) {
                let dt = (w[1].t - w[0].t).abs();
                if dt == 0.0 || w[0].piece != w[1].piece {
                    continue;
                }
                let d = factors[i].dist_unchecked(&w[0].xs[i], &w[1].xs[i]);
                let slack = 1e-9 * dt;
                if d < lo * dt - slack || d > hi * dt + slack {
                    return Err(Error::NotProjectivelyHomeomorphic(format!(
                        "factor {i}: d = {d} outside [{lo}, {hi}] * {dt} at t = {}",
                        w[0].t
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A pair of parameters whose images coincide in one factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub t0: f64,
    pub t1: f64,
    /// Zero-based factor index.
    pub factor: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityVerdict {
    pub accepted: bool,
    pub witness: Option<Collision>,
    pub collisions: usize,
    pub pairs_checked: usize,
    pub tol: f64,
    pub separation: f64,
}

/// Sample-based test that every projection `E -> X_i` is injective.
///
/// A pair collides in factor `i` when `|t - t'| >= separation` and
/// `d(e_i(t), e_i(t')) < tol`. The reported witness is the first colliding
/// pair in (factor, sample, sample) order.
pub fn check_projective_injectivity(
    factors: &[MetricModel],
    samples: &[Sample],
    tol: f64,
    separation: f64,
) -> InjectivityVerdict {
    let n = samples.len();
    let per_factor: Vec<(usize, Option<Collision>)> = (0..factors.len())
        .map(|i| {
            let m = &factors[i];
            let rows = par::range_map(Exec::default(), n, |a| {
                let mut count = 0usize;
                let mut first = None;
                for b in a + 1..n {
                    if (samples[a].t - samples[b].t).abs() < separation {
                        continue;
                    }
                    let d = m.dist_unchecked(&samples[a].xs[i], &samples[b].xs[i]);
                    if d < tol {
                        count += 1;
                        first.get_or_insert(Collision { t0: samples[a].t, t1: samples[b].t, factor: i, distance: d });
                    }
                }
                (count, first)
            });
            rows.into_iter().fold((0, None), |(c, w), (rc, rw)| (c + rc, w.or(rw)))
        })
        .collect();
    let collisions = per_factor.iter().map(|(c, _)| c).sum();
    let witness = per_factor.into_iter().find_map(|(_, w)| w);
    InjectivityVerdict {
        accepted: witness.is_none(),
        witness,
        collisions,
        pairs_checked: factors.len() * n * n.saturating_sub(1) / 2,
        tol,
        separation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::expr::{coord, mul};

    fn graph(t_lo: f64, t_hi: f64, second: Expr) -> ParamSet {
        ParamSet { pieces: vec![Piece { t_lo, t_hi, maps: vec![vec![coord(0)], vec![second]] }], claims: vec![] }
    }

    fn line(lo: f64, hi: f64) -> Vec<MetricModel> {
        vec![MetricModel::interval(lo, hi).unwrap(); 2]
    }

    #[test]
    fn identity_accepted() {
        let e = graph(0.0, 1.0, coord(0));
        let s = e.samples(&line(0.0, 1.0), 101).unwrap();
        let v = check_projective_injectivity(&line(0.0, 1.0), &s, 1e-12, 1e-9);
        assert!(v.accepted);
        assert_eq!(v.collisions, 0);
    }

    #[test]
    fn parabola_rejected_with_witness() {
        let f = line(-1.0, 1.0);
        let e = graph(-1.0, 1.0, mul(coord(0), coord(0)));
        let s = e.samples(&f, 1025).unwrap();
        let v = check_projective_injectivity(&f, &s, 1e-12, 1e-9);
        assert!(!v.accepted);
        let w = v.witness.unwrap();
        assert_eq!(w.factor, 1);
        assert!(w.t0 != w.t1);
        assert!((w.t0 * w.t0 - w.t1 * w.t1).abs() < 1e-12);
        // the pair (0.5, -0.5) is one of the collisions found
        assert_eq!(v.collisions, 512);
        let half = s.iter().find(|x| x.t == 0.5).unwrap();
        let neg = s.iter().find(|x| x.t == -0.5).unwrap();
        assert_eq!(half.xs[1], neg.xs[1]);
    }

    #[test]
    fn cubic_graph_accepted() {
        let f = line(0.0, 1.0);
        let e = graph(0.0, 1.0, mul(coord(0), mul(coord(0), coord(0))));
        let s = e.samples(&f, 1025).unwrap();
        assert!(check_projective_injectivity(&f, &s, 1e-12, 1e-9).accepted);
    }

    #[test]
    fn sample_grid_endpoints_exact() {
        let e = graph(0.0, 1.0, coord(0));
        let s = e.samples(&line(0.0, 1.0), 1025).unwrap();
        assert_eq!(s.len(), 1025);
        assert_eq!(s[0].t, 0.0);
        assert_eq!(s[512].t, 0.5);
        assert_eq!(s[1024].t, 1.0);
    }

    #[test]
    fn bilipschitz_claims_checked() {
        let f = line(0.0, 1.0);
        let mut e = graph(0.0, 1.0, mul(coord(0), coord(0)));
        e.claims = vec![Claim { injective: false, bilipschitz: Some((1.0, 1.0)) }, Claim::default()];
        let s = e.samples(&f, 65).unwrap();
        assert!(e.check_claims(&f, &s).is_ok());
        e.claims[1].bilipschitz = Some((0.5, 2.0));
        assert!(matches!(e.check_claims(&f, &s), Err(Error::NotProjectivelyHomeomorphic(_))));
    }

    #[test]
    fn image_outside_factor_rejected() {
        let e = graph(0.0, 1.0, mul(coord(0), crate::func::expr::constant(3.0)));
        assert!(matches!(e.samples(&line(0.0, 1.0), 9), Err(Error::PointOutsideDomain { .. })));
    }
}

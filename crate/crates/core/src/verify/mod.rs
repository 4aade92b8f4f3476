//! Numerical checks: diagonal agreement, section continuity, joint
//! oscillation, restriction agreement and the pp round trip.
//!
//! Every probe is finite-sample evidence. Budgets, tolerances and seeds are
//! explicit inputs and are echoed in the reports.

mod pp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use pp::{pp_structure, tower_from_fn, tower_from_sepfn, PPLevel, PPStructure, SectionFn};

use crate::diagonal::{Annulus, Plan, SepFn};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::restrict::Sample;
use crate::tower::{tower_eval, BaireTower, IndexSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalRow {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalReport {
    pub rows: Vec<DiagonalRow>,
    pub max_diff: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `|f(x, .., x) - g(x)|` at every point; passes iff every difference is at
/// most `tol` (use `0` for constructions that share the tower code path).
pub fn check_diagonal_agreement(
    f: &SepFn,
    g: &BaireTower,
    points: &[Vec<f64>],
    s: &IndexSchedule,
    tol: f64,
) -> Result<DiagonalReport> {
    let rows = par::try_map(Exec::default(), points, |x| {
        let xs = vec![x.clone(); f.arity()];
        let fv = f.eval(&xs, s)?.value;
        let gv = tower_eval(g, x, s)?.value;
        Ok(DiagonalRow { x: x.clone(), f: fv, g: gv, diff: (fv - gv).abs() })
    })?;
    let max_diff = rows.iter().map(|r| r.diff).fold(0.0, f64::max);
    Ok(DiagonalReport { pass: rows.iter().all(|r| r.diff <= tol), rows, max_diff, tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub g: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    pub rows: Vec<RestrictionRow>,
    pub max_diff: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `|f(e(t)) - g(t)|` on samples of a parametrized set.
pub fn check_restriction(
    f: &SepFn,
    g: &BaireTower,
    samples: &[Sample],
    s: &IndexSchedule,
    tol: f64,
) -> Result<RestrictionReport> {
    check_restriction_at(f, g, samples, s, s, tol)
}

/// [`check_restriction`] with separate schedules for `f` and `g`.
pub fn check_restriction_at(
    f: &SepFn,
    g: &BaireTower,
    samples: &[Sample],
    sf: &IndexSchedule,
    sg: &IndexSchedule,
    tol: f64,
) -> Result<RestrictionReport> {
    let rows = par::try_map(Exec::default(), samples, |x| {
        let fv = f.eval(&x.xs, sf)?.value;
        let gv = tower_eval(g, &[x.t], sg)?.value;
        Ok(RestrictionRow { t: x.t, x: x.flat(), f: fv, g: gv, diff: (fv - gv).abs() })
    })?;
    let max_diff = rows.iter().map(|r| r.diff).fold(0.0, f64::max);
    Ok(RestrictionReport { pass: rows.iter().all(|r| r.diff <= tol), rows, max_diff, tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Decaying,
    Stalled,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Decaying => "decaying",
            Verdict::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub center: Vec<Vec<f64>>,
    /// Variable whose section is probed.
    pub index: usize,
    pub radii: Vec<f64>,
    pub oscillations: Vec<f64>,
    pub verdict: Verdict,
    /// Random samples per radius, on top of the two interval endpoints.
    pub budget: usize,
    pub tol: f64,
    pub seed: u64,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("radii must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Points of the ball of radius `r` around `c` in the section's factor:
/// the axis endpoints `c +- r e_0` (and the other axes in higher
/// dimension), then `budget` uniform points of the cube, all clipped to the
/// factor box.
fn section_points(f: &SepFn, index: usize, c: &[f64], r: f64, budget: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let b = f.factors()[index].bounds();
    let clip = |mut p: Vec<f64>| {
        for (a, v) in p.iter_mut().enumerate() {
            *v = v.clamp(b.lo()[a], b.hi()[a]);
        }
        p
    };
    let mut out = Vec::with_capacity(2 * c.len() + budget);
    for a in 0..c.len() {
        for sign in [-1.0, 1.0] {
            let mut p = c.to_vec();
            p[a] += sign * r;
            out.push(clip(p));
        }
    }
    for _ in 0..budget {
        let p = c.iter().map(|v| v + r * rng.gen_range(-1.0..=1.0)).collect();
        out.push(clip(p));
    }
    out
}

/// Oscillation `max |f(.., y, ..) - f(center)|` of the section through
/// `center` in variable `index`, over balls of the given radii.
///
/// Decaying iff the second half of the oscillations is nonincreasing (up to
/// `1e-12`) and the last one is at most `tol`.
pub fn check_section_continuity(
    f: &SepFn,
    center: &[Vec<f64>],
    index: usize,
    radii: &[f64],
    budget: usize,
    tol: f64,
    seed: u64,
    s: &IndexSchedule,
) -> Result<ContinuityReport> {
    check_radii(radii)?;
    if index >= f.arity() {
        return Err(Error::InvalidInput(format!("section index {index} >= arity {}", f.arity())));
    }
    let base = f.eval(center, s)?.value;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oscillations = Vec::with_capacity(radii.len());
    let mut xs = center.to_vec();
    for &r in radii {
        let mut osc: f64 = 0.0;
        for p in section_points(f, index, &center[index], r, budget, &mut rng) {
            xs[index] = p;
            osc = osc.max((f.eval(&xs, s)?.value - base).abs());
        }
        oscillations.push(osc);
    }
    let tail = &oscillations[oscillations.len() / 2..];
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let verdict =
        if monotone && *oscillations.last().expect("nonempty") <= tol { Verdict::Decaying } else { Verdict::Stalled };
    Ok(ContinuityReport {
        center: center.to_vec(),
        index,
        radii: radii.to_vec(),
        oscillations,
        verdict,
        budget,
        tol,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub center: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// `sup f - inf f` over the sampled points of each product box.
    pub oscillations: Vec<f64>,
    pub budget: usize,
    pub seed: u64,
}

/// Joint oscillation over product boxes shrinking to `center`. Each box is
/// probed at `budget` uniform points plus points on the diagonal through it.
pub fn joint_oscillation(
    f: &SepFn,
    center: &[Vec<f64>],
    radii: &[f64],
    budget: usize,
    seed: u64,
    s: &IndexSchedule,
) -> Result<JointReport> {
    check_radii(radii)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oscillations = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut pts: Vec<Vec<Vec<f64>>> = Vec::new();
        pts.push(center.to_vec());
        let c0 = &center[0];
        let same_space = f.factors().iter().all(|m| m == &f.factors()[0]);
        if same_space {
            let b = f.factors()[0].bounds();
            for j in 1..=8 {
                for sign in [-1.0, 1.0] {
                    let z: Vec<f64> = c0
                        .iter()
                        .enumerate()
                        .map(|(a, v)| (v + sign * r * j as f64 / 8.0).clamp(b.lo()[a], b.hi()[a]))
                        .collect();
                    pts.push(vec![z; f.arity()]);
                }
            }
        }
        for _ in 0..budget {
            let p = center
                .iter()
                .zip(f.factors())
                .map(|(c, m)| {
                    let b = m.bounds();
                    c.iter()
                        .enumerate()
                        .map(|(a, v)| (v + r * rng.gen_range(-1.0..=1.0)).clamp(b.lo()[a], b.hi()[a]))
                        .collect()
                })
                .collect();
            pts.push(p);
        }
        let vals = pts.iter().map(|p| Ok(f.eval(p, s)?.value)).collect::<Result<Vec<f64>>>()?;
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        oscillations.push(hi - lo);
    }
    Ok(JointReport { center: center.to_vec(), radii: radii.to_vec(), oscillations, budget, seed })
}

/// Certified bound on the section oscillation of a two-variable blend at
/// radius `r`, or `None` when no bound is available.
///
/// Off the diagonal the section is Lipschitz with slope at most
/// `L_k + L_{k+1} + (S_k + S_{k+1}) / (R_k - R_{k+1})` on every annulus the
/// ball meets. On the diagonal the deviation from `g(x)` is at most
/// `L_k r + tau_k(x)` over the levels the ball can reach, with `tau` the
/// rate certificate of the tower.
pub fn certified_section_bound(f: &SepFn, center: &[Vec<f64>], index: usize, r: f64) -> Result<Option<f64>> {
    let Plan::BaseBlend { tower, schedule } = f.plan() else { return Ok(None) };
    let rho = f.blend_distance(center)?;
    let depth = schedule.depth();
    let lip = |k: usize| -> Result<f64> {
        tower.level(k)?.lipschitz_bound().ok_or(Error::MissingLipschitzBound { level: k })
    };
    let sup =
        |k: usize| -> Result<f64> { tower.level(k)?.sup_bound().ok_or(Error::MissingLipschitzBound { level: k }) };
    // levels k whose annulus meets [lo, hi]
    let touched = |lo: f64, hi: f64| -> Vec<usize> {
        let first = match schedule.locate(hi) {
            Annulus::Outer => 1,
            Annulus::Blend { k, .. } | Annulus::Deep { k } => k,
            Annulus::Diagonal => depth,
        };
        let last = match schedule.locate(lo.max(f64::MIN_POSITIVE)) {
            Annulus::Outer => 1,
            Annulus::Blend { k, .. } => k + 1,
            Annulus::Deep { k } => k,
            Annulus::Diagonal => depth,
        };
        (first..=last.max(first)).collect()
    };
    if rho == 0.0 {
        let Some(cert) = tower.certificate() else { return Ok(None) };
        let x = &center[0];
        let mut bound: f64 = 0.0;
        for k in touched(0.0, r) {
            let move_term = if index == 0 { lip(k)? * r } else { 0.0 };
            bound = bound.max(move_term + cert.tau(k, x)?);
            if k < depth {
                let k1 = k + 1;
                let move_term = if index == 0 { lip(k1)? * r } else { 0.0 };
                bound = bound.max(move_term + cert.tau(k1, x)?);
            }
        }
        return Ok(Some(bound));
    }
    if r >= rho {
        return Ok(None);
    }
    let mut slope: f64 = 0.0;
    for k in touched(rho - r, rho + r) {
        let mut s = lip(k)?;
        if k < depth {
            let gap = schedule.radius(k) - schedule.radius(k + 1);
            s += lip(k + 1)? + (sup(k)? + sup(k + 1)?) / gap;
        }
        slope = slope.max(s);
    }
    Ok(Some(slope * r))
}

/// Seeded centers for section probes whose certified bound at radius
/// `r_min` is at most `tol` in every variable: `diagonal` points `(x, x)`
/// followed by `off` points with independent coordinates.
pub fn certified_centers(
    f: &SepFn,
    diagonal: usize,
    off: usize,
    r_min: f64,
    tol: f64,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if !matches!(f.plan(), Plan::BaseBlend { .. }) {
        return Err(Error::InvalidInput("certified centers need a two-variable blend plan".into()));
    }
    let b = f.factors()[0].bounds().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..b.dim()).map(|a| rng.gen_range(b.lo()[a]..=b.hi()[a])).collect() };
    let backed = |c: &[Vec<f64>]| -> Result<bool> {
        for index in 0..f.arity() {
            match certified_section_bound(f, c, index, r_min)? {
                Some(v) if v <= tol => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    };
    let mut out = Vec::with_capacity(diagonal + off);
    for (want, on_diagonal) in [(diagonal, true), (off, false)] {
        let mut got = 0;
        let mut tries = 0;
        while got < want {
            tries += 1;
            if tries > 1000 * want.max(1) {
                return Err(Error::BudgetExceeded(format!("found {got} of {want} certified centers")));
            }
            let x = draw(&mut rng);
            let c = if on_diagonal {
                vec![x; f.arity()]
            } else {
                let mut c = vec![x];
                c.extend((1..f.arity()).map(|_| draw(&mut rng)));
                c
            };
            if backed(&c)? {
                out.push(c);
                got += 1;
            }
        }
    }
    Ok(out)
}

fn csv_header(width: usize, tail: &str) -> String {
    let mut h: Vec<String> = (0..width).map(|i| format!("p{i}")).collect();
    h.push(tail.to_string());
    h.join(",") + "\n"
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// One row per (center, radius): point coordinates, section index, radius,
/// oscillation, verdict.
pub fn continuity_csv(reports: &[ContinuityReport]) -> String {
    let width = reports.first().map_or(0, |r| r.center.iter().map(Vec::len).sum());
    let mut out = csv_header(width, "section,radius,oscillation,verdict");
    for rep in reports {
        let p: Vec<f64> = rep.center.iter().flatten().copied().collect();
        for (r, o) in rep.radii.iter().zip(&rep.oscillations) {
            out += &format!("{},{},{r:?},{o:?},{}\n", join_floats(&p), rep.index, rep.verdict.as_str());
        }
    }
    out
}

pub fn joint_csv(reports: &[JointReport]) -> String {
    let width = reports.first().map_or(0, |r| r.center.iter().map(Vec::len).sum());
    let mut out = csv_header(width, "radius,oscillation");
    for rep in reports {
        let p: Vec<f64> = rep.center.iter().flatten().copied().collect();
        for (r, o) in rep.radii.iter().zip(&rep.oscillations) {
            out += &format!("{},{r:?},{o:?}\n", join_floats(&p));
        }
    }
    out
}

pub fn diagonal_csv(report: &DiagonalReport) -> String {
    let width = report.rows.first().map_or(0, |r| r.x.len());
    let mut out = csv_header(width, "f,g,diff");
    for row in &report.rows {
        out += &format!("{},{:?},{:?},{:?}\n", join_floats(&row.x), row.f, row.g, row.diff);
    }
    out
}

pub fn restriction_csv(report: &RestrictionReport) -> String {
    let width = report.rows.first().map_or(0, |r| r.x.len());
    let mut out = String::from("t,");
    out += &csv_header(width, "f,g,diff");
    for row in &report.rows {
        out += &format!("{:?},{},{:?},{:?},{:?}\n", row.t, join_floats(&row.x), row.f, row.g, row.diff);
    }
    out
}

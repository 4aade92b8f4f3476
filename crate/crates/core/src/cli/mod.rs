//! The `sepcont` command line: `build`, `eval`, `verify`, `gallery`,
//! `schema`.
//!
//! Exit status is 0 on success, 1 when a verification fails and 2 on input
//! errors. Every output embeds the sha256 of the spec file and the seed and
//! is written atomically.

pub mod spec;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagonal::{build_diagonal, Diagnostics, Plan, SepFn, SepValue};
use crate::error::{Error, Result};
use crate::func::BoxDomain;
use crate::par::{self, Exec};
use crate::restrict::{solve, RestrictionProblem};
use crate::tower::{gallery, ErrorEstimate, IndexSchedule, GALLERY_NAMES};
use crate::verify::{
    certified_centers, check_diagonal_agreement, check_restriction, check_restriction_at, check_section_continuity,
    continuity_csv, diagonal_csv, joint_csv, joint_oscillation, restriction_csv, Verdict,
};
use spec::{radii, BuildSpec, EvalSpec, VerifySpec};

const DEFAULT_DEPTH: usize = 24;
const MAX_GRID_POINTS: usize = 1 << 22;

#[derive(Debug, Parser)]
#[command(name = "sepcont", version, about = "Separately continuous functions with prescribed diagonals")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Job specification (JSON).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Construction depth (build).
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Value tolerance (build) or section tolerance (verify).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Parameter samples (build), probe points per radius (verify) or grid
    /// points (eval).
    #[arg(long, global = true)]
    budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Construct a function and write its plan.
    Build,
    /// Evaluate a plan at points or on a grid.
    Eval,
    /// Run the numerical checks on a plan.
    Verify,
    /// List the built-in towers.
    Gallery,
    /// Print the JSON schemas of the job specifications.
    Schema,
}

/// Parses `args` (program name first) and runs the command; returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match cli.command {
        Command::Build => cmd_build(cli),
        Command::Eval => cmd_eval(cli),
        Command::Verify => cmd_verify(cli),
        Command::Gallery => cmd_gallery(cli),
        Command::Schema => cmd_schema(cli),
    }
}

struct Job<T> {
    spec: T,
    sha256: String,
    dir: PathBuf,
}

fn load_spec<T: for<'de> Deserialize<'de>>(cli: &Cli) -> Result<Job<T>> {
    let path = cli.spec.as_ref().ok_or_else(|| Error::InvalidInput("--spec is required".into()))?;
    let bytes = std::fs::read(path)?;
    let spec = serde_json::from_slice(&bytes)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Job { spec, sha256: sha256_hex(&bytes), dir })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn csv_preamble(sha: &str, seed: u64) -> String {
    format!("# spec_sha256={sha} seed={seed}\n")
}

/// A plan file as written by `build`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanFile {
    pub spec_sha256: String,
    pub seed: u64,
    pub plan: SepFn,
}

fn load_plan(dir: &Path, rel: &str) -> Result<(SepFn, String)> {
    let bytes = std::fs::read(dir.join(rel))?;
    let sha = sha256_hex(&bytes);
    let v: Value = serde_json::from_slice(&bytes)?;
    // a plan file wraps the function; a bare function has an arity
    let f = if v.get("arity").is_none() && v.get("plan").is_some() {
        serde_json::from_value::<PlanFile>(v)?.plan
    } else {
        serde_json::from_value::<SepFn>(v)?
    };
    Ok((f, sha))
}

fn plan_kind(p: &Plan) -> &'static str {
    match p {
        Plan::BaseBlend { .. } => "base_blend",
        Plan::RecursiveBlend { .. } => "recursive_blend",
        Plan::Pullback { .. } => "pullback",
        Plan::Glued { .. } => "glued",
    }
}

fn cmd_build(cli: &Cli) -> Result<bool> {
    let job: Job<BuildSpec> = load_spec(cli)?;
    let out = out_dir(cli)?;
    let mut summary = json!({ "spec_sha256": job.sha256, "seed": cli.seed });
    let mut pass = true;
    let f = match job.spec {
        BuildSpec::Diagonal { tower, arity, depth } => {
            let g = tower.resolve()?;
            let depth = cli.depth.or(depth).unwrap_or(DEFAULT_DEPTH);
            let f = build_diagonal(&g, arity, depth)?;
            summary["kind"] = json!("diagonal");
            summary["depth"] = json!(depth);
            summary["tower_rank"] = json!(g.rank());
            summary["radii"] = json!(f.schedule().map(|s| s.radii().to_vec()));
            f
        }
        BuildSpec::Restriction { mut problem } => {
            apply_overrides(cli, &mut problem);
            let sol = solve(&problem)?;
            let coherence = sol.plans.iter().flatten().map(|p| p.coherence).fold(0.0, f64::max);
            // f reads g no deeper than level 2^s_cut; the limit is reported
            // alongside
            let s = IndexSchedule::uniform(1 << 30);
            let sg = IndexSchedule::uniform(1 << problem.cutoffs.s_cut.min(30));
            let g_cut = check_restriction_at(&sol.f, &problem.g, &sol.samples, &s, &sg, problem.tolerances.value)?;
            let report = check_restriction(&sol.f, &problem.g, &sol.samples, &s, problem.tolerances.value)?;
            pass = g_cut.pass;
            summary["kind"] = json!("restriction");
            summary["mode"] = json!(problem.mode);
            summary["patches"] = json!(sol.plans.len());
            summary["solved_patches"] = json!(sol.plans.iter().flatten().count());
            summary["coherence"] = json!(coherence);
            summary["injectivity"] = json!(sol.injectivity);
            summary["restriction"] = json!({
                "samples": g_cut.rows.len(),
                "max_diff": g_cut.max_diff,
                "max_diff_limit": report.max_diff,
                "tol": g_cut.tol,
                "pass": g_cut.pass,
            });
            let csv = csv_preamble(&job.sha256, cli.seed) + &restriction_csv(&g_cut);
            write_atomic(&out.join("restriction.csv"), csv.as_bytes())?;
            sol.f
        }
    };
    summary["arity"] = json!(f.arity());
    summary["plan_kind"] = json!(plan_kind(f.plan()));
    summary["empirically_validated"] = json!(f.empirically_validated());
    let plan = PlanFile { spec_sha256: job.sha256.clone(), seed: cli.seed, plan: f };
    let mut bytes = serde_json::to_vec(&plan)?;
    bytes.push(b'\n');
    write_atomic(&out.join("plan.json"), &bytes)?;
    write_json(&out.join("summary.json"), &summary)?;
    println!("wrote {}", out.join("plan.json").display());
    Ok(pass)
}

fn apply_overrides(cli: &Cli, p: &mut RestrictionProblem) {
    if let Some(d) = cli.depth {
        p.cutoffs.depth = d;
    }
    if let Some(t) = cli.tol {
        p.tolerances.value = t;
    }
    if let Some(b) = cli.budget {
        p.cutoffs.samples = b;
    }
}

fn grid_points(f: &SepFn, per_axis: usize, cap: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let boxes: Vec<BoxDomain> = f.factors().iter().map(|m| m.bounds().clone()).collect();
    let product = BoxDomain::product(&boxes)?;
    let total = (per_axis as u128).checked_pow(product.dim() as u32).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::BudgetExceeded(format!("grid of {total} points exceeds {cap}")));
    }
    Ok(product.grid(per_axis).into_iter().map(|p| crate::diagonal::split_point(&p, f.factors())).collect())
}

/// Evaluates `f` at every point, keeping input order; failures are
/// returned per point.
pub fn eval_points(f: &SepFn, points: &[Vec<Vec<f64>>], s: &IndexSchedule, exec: Exec) -> Vec<Result<SepValue>> {
    par::map(exec, points, |p| f.eval(p, s))
}

/// Error bound of the tower limit at a diagonal point, empty elsewhere.
fn limit_error(d: &Diagnostics) -> String {
    match d.diagonal {
        None => String::new(),
        Some(ErrorEstimate::Exact) => format!("{:?}", 0.0),
        Some(ErrorEstimate::Certified { bound }) => format!("{bound:?}"),
        Some(ErrorEstimate::Cauchy { increment, .. }) => format!("{increment:?}"),
    }
}

fn cmd_eval(cli: &Cli) -> Result<bool> {
    let job: Job<EvalSpec> = load_spec(cli)?;
    let (f, plan_sha) = load_plan(&job.dir, &job.spec.plan)?;
    let s = IndexSchedule::new(job.spec.cutoffs.clone())?;
    let mut points = job.spec.points.clone();
    if let Some(g) = &job.spec.grid {
        points.extend(grid_points(&f, g.per_axis, cli.budget.unwrap_or(MAX_GRID_POINTS))?);
    }
    let out = out_dir(cli)?;
    let width = f.factors().iter().map(|m| m.dim()).sum::<usize>();
    let mut csv = csv_preamble(&job.sha256, cli.seed);
    csv += &format!("# plan_sha256={plan_sha}\n");
    let mut header: Vec<String> = (0..width).map(|i| format!("p{i}")).collect();
    header.extend(["value", "depth_exhausted", "truncated", "limit_error", "status"].map(String::from));
    csv += &(header.join(",") + "\n");
    let mut flagged = 0;
    for (p, r) in points.iter().zip(eval_points(&f, &points, &s, Exec::default())) {
        let coords: Vec<String> = p.iter().flatten().map(|x| format!("{x:?}")).collect();
        let mut row = coords;
        row.resize(width.max(row.len()), String::new());
        match r {
            Ok(v) => {
                let d = &v.diagnostics;
                row.extend([
                    format!("{:?}", v.value),
                    d.depth_exhausted.to_string(),
                    d.truncated.to_string(),
                    limit_error(d),
                    "ok".into(),
                ]);
            }
            Err(e) => {
                flagged += 1;
                eprintln!("warning[{}]: {e}", e.code());
                row.extend([String::new(), String::new(), String::new(), String::new(), e.code().into()]);
            }
        }
        csv += &(row.join(",") + "\n");
    }
    write_atomic(&out.join("values.csv"), csv.as_bytes())?;
    println!("evaluated {} points ({flagged} flagged)", points.len());
    Ok(true)
}

fn diagonal_points(f: &SepFn, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let b = f.factors()[0].bounds();
    if b.dim() == 1 {
        return (0..n).map(|j| vec![crate::func::lerp_grid(b.lo()[0], b.hi()[0], j, n)]).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..b.dim()).map(|a| rng.gen_range(b.lo()[a]..=b.hi()[a])).collect()).collect()
}

fn cmd_verify(cli: &Cli) -> Result<bool> {
    let job: Job<VerifySpec> = load_spec(cli)?;
    let (f, plan_sha) = load_plan(&job.dir, &job.spec.plan)?;
    let s = IndexSchedule::new(job.spec.cutoffs.clone())?;
    let out = out_dir(cli)?;
    let pre = csv_preamble(&job.sha256, cli.seed);
    let mut report = json!({ "spec_sha256": job.sha256, "plan_sha256": plan_sha, "seed": cli.seed });
    let mut pass = true;

    if let Some(d) = &job.spec.suites.diagonal {
        let g = match &job.spec.tower {
            Some(t) => t.resolve()?,
            None => f
                .diagonal_tower()
                .cloned()
                .ok_or_else(|| Error::InvalidInput("plan has no diagonal tower; give `tower`".into()))?,
        };
        let pts = diagonal_points(&f, d.points, cli.seed);
        let r = check_diagonal_agreement(&f, &g, &pts, &s, d.tol)?;
        pass &= r.pass;
        report["diagonal"] = json!({ "points": pts.len(), "max_diff": r.max_diff, "tol": r.tol, "pass": r.pass });
        write_atomic(&out.join("diagonal.csv"), (pre.clone() + &diagonal_csv(&r)).as_bytes())?;
    }

    if let Some(sec) = &job.spec.suites.sections {
        let rs = radii(sec.radii_exp);
        let tol = cli.tol.unwrap_or(sec.tol);
        let budget = cli.budget.unwrap_or(sec.budget);
        let mut centers = sec.centers.clone();
        if sec.diagonal + sec.off_diagonal > 0 {
            let r_min = *rs.last().ok_or_else(|| Error::InvalidInput("empty radii".into()))?;
            centers.extend(certified_centers(&f, sec.diagonal, sec.off_diagonal, r_min, tol, cli.seed)?);
        }
        let jobs: Vec<(usize, usize)> = (0..centers.len()).flat_map(|c| (0..f.arity()).map(move |i| (c, i))).collect();
        let reports = par::try_map(Exec::default(), &jobs, |&(c, i)| {
            let seed = cli.seed.wrapping_add((c * f.arity() + i) as u64);
            check_section_continuity(&f, &centers[c], i, &rs, budget, tol, seed, &s)
        })?;
        let decaying = reports.iter().filter(|r| r.verdict == Verdict::Decaying).count();
        let ok = decaying == reports.len();
        pass &= ok;
        report["sections"] = json!({
            "centers": centers.len(),
            "sections": reports.len(),
            "decaying": decaying,
            "radii": rs,
            "tol": tol,
            "budget": budget,
            "pass": ok,
        });
        write_atomic(&out.join("sections.csv"), (pre.clone() + &continuity_csv(&reports)).as_bytes())?;
    }

    if let Some(j) = &job.spec.suites.joint {
        let rs = radii(j.radii_exp);
        let budget = cli.budget.unwrap_or(j.budget);
        let r = joint_oscillation(&f, &j.center, &rs, budget, cli.seed, &s)?;
        let min = r.oscillations.iter().copied().fold(f64::INFINITY, f64::min);
        let ok = min >= j.min;
        pass &= ok;
        report["joint"] = json!({ "min_oscillation": min, "expected_min": j.min, "pass": ok });
        write_atomic(&out.join("joint.csv"), (pre.clone() + &joint_csv(&[r])).as_bytes())?;
    }

    report["pass"] = json!(pass);
    write_json(&out.join("verify.json"), &report)?;
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn cmd_gallery(cli: &Cli) -> Result<bool> {
    let mut entries = Vec::new();
    for name in GALLERY_NAMES {
        let t = gallery(name)?;
        println!("{name}\trank {}", t.rank());
        entries.push(json!({ "name": name, "rank": t.rank(), "tower": t }));
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("gallery.json"), &json!({ "seed": cli.seed, "towers": entries }))?;
    }
    Ok(true)
}

fn cmd_schema(cli: &Cli) -> Result<bool> {
    let s = spec::schemas();
    println!("{}", serde_json::to_string_pretty(&s)?);
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("schema.json"), &s)?;
    }
    Ok(true)
}

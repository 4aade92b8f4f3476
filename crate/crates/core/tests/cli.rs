use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepcont")).args(args).current_dir(dir).output().unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn sign_plan(dir: &Path) {
    write(dir, "d.json", r#"{"kind":"diagonal","tower":{"gallery":"sign"},"arity":2}"#);
    assert_eq!(code(dir, &["build", "--spec", "d.json", "--out", "o"]), 0);
}

#[test]
fn sign_build_summary() {
    let w = tempfile::tempdir().unwrap();
    sign_plan(w.path());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(w.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["radii"][0], 0.25);
    assert_eq!(summary["plan_kind"], "base_blend");
    assert_eq!(summary["seed"], 0);
    assert_eq!(summary["spec_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_rows_and_flags() {
    let w = tempfile::tempdir().unwrap();
    sign_plan(w.path());
    write(
        w.path(),
        "e.json",
        r#"{"plan":"o/plan.json","points":[[[0.5],[0.3]],[[0.5],[0.5]],[[0.0],[0.0]],[[1.5],[0.0]],[[-0.25],[-0.25]]]}"#,
    );
    let out = run(w.path(), &["eval", "--spec", "e.json", "--out", "o", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(w.path().join("o/values.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# spec_sha256=") && lines[0].ends_with(" seed=3"));
    assert_eq!(lines[2], "p0,p1,value,depth_exhausted,truncated,limit_error,status");
    // R_1 = 1/4 < |0.5 - 0.3|: level 1 only
    let row: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(row[..2], ["0.5", "0.3"]);
    assert!((row[2].parse::<f64>().unwrap() - 0.65).abs() < 1e-12);
    assert_eq!(row[3..], ["false", "false", "", "ok"]);
    assert!(lines[4].starts_with("0.5,0.5,1.0,false,false,"));
    assert!(lines[5].starts_with("0.0,0.0,0.0,"));
    assert_eq!(lines[6], "1.5,0.0,,,,,core-fn/point-outside-domain");
    assert!(lines[7].starts_with("-0.25,-0.25,-1.0,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn mismatched_tower_fails_verification() {
    let w = tempfile::tempdir().unwrap();
    sign_plan(w.path());
    write(w.path(), "ok.json", r#"{"plan":"o/plan.json","suites":{"diagonal":{"points":50}}}"#);
    assert_eq!(code(w.path(), &["verify", "--spec", "ok.json", "--out", "v"]), 0);
    write(
        w.path(),
        "bad.json",
        r#"{"plan":"o/plan.json","tower":{"gallery":"step"},"suites":{"diagonal":{"points":50}}}"#,
    );
    assert_eq!(code(w.path(), &["verify", "--spec", "bad.json", "--out", "v"]), 1);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(w.path().join("v/verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn glued_job_has_two_patches() {
    let w = tempfile::tempdir().unwrap();
    let unit = r#"{"kind":"euclidean-box","domain":{"lo":[0.0],"hi":[1.0]}}"#;
    let spec = format!(
        r#"{{"kind":"restriction","problem":{{
            "factors":[{unit},{unit}],
            "set":{{"pieces":[
                {{"t_lo":0.0,"t_hi":0.3333333333333333,"maps":[[{{"op":"coord","coord":0}}],[{{"op":"coord","coord":0}}]]}},
                {{"t_lo":0.6666666666666666,"t_hi":1.0,"maps":[[{{"op":"coord","coord":0}}],
                    [{{"op":"sub","args":[{{"op":"const","value":1.0}},{{"op":"coord","coord":0}}]}}]]}}]}},
            "g":{{"rank":1,"family":{{"kind":"gallery","name":"step","domain":{unit},"at":0.5}}}},
            "mode":"theorem5",
            "cover":[{{"lo":[0.0,0.0],"hi":[0.55,1.0]}},{{"lo":[0.45,0.0],"hi":[1.0,1.0]}}],
            "cutoffs":{{"s_cut":4,"depth":5,"samples":65}}}}}}"#
    );
    write(w.path(), "g.json", &spec);
    let out = run(w.path(), &["build", "--spec", "g.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(w.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["plan_kind"], "glued");
    assert_eq!(summary["patches"], 2);
    assert_eq!(summary["mode"], "glued");
}

#[test]
fn exit_codes() {
    let w = tempfile::tempdir().unwrap();
    let w = w.path();
    assert_eq!(code(w, &["build", "--spec", "missing.json"]), 2);
    assert_eq!(code(w, &["build"]), 2);
    write(w, "bad.json", r#"{"kind":"diagonal","tower":{"gallery":"dirichlet"},"arity":2}"#);
    let out = run(w, &["build", "--spec", "bad.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[tower/unknown-name]"));
    write(w, "junk.json", "{not json");
    assert_eq!(code(w, &["build", "--spec", "junk.json"]), 2);
    assert_eq!(code(w, &["frobnicate"]), 2);
    assert_eq!(code(w, &["--help"]), 0);
    sign_plan(w);
    write(w, "v.json", r#"{"plan":"o/plan.json","suites":{"joint":{"center":[[0.0],[0.0]],"min":3.0}}}"#);
    assert_eq!(code(w, &["verify", "--spec", "v.json", "--out", "o"]), 1);
}

#[test]
fn gallery_and_schema() {
    let w = tempfile::tempdir().unwrap();
    let out = run(w.path(), &["gallery", "--out", "g"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["sign", "point-indicator", "step", "two-limit-indicator"] {
        assert!(text.contains(name));
    }
    assert!(w.path().join("g/gallery.json").exists());
    let out = run(w.path(), &["schema"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["build", "eval", "verify"] {
        assert!(v.get(key).is_some());
    }
}

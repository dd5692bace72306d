use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hullscope_core::models::ModelFunction;
use hullscope_core::pipeline::{random_scene, FamilyParams, Scene};
use hullscope_core::Vec3;
use tempfile::TempDir;

fn hullscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hullscope")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spheres(dir: &TempDir, centres: &[[f64; 3]]) -> PathBuf {
    let scene = Scene {
        name: "spheres".into(),
        seed: None,
        models: vec![ModelFunction::sphere(1.0).unwrap()],
        bodies: centres.iter().map(|c| (0, Vec3::from(*c))).collect(),
    };
    let p = path(dir, "scene.json");
    fs::write(&p, scene.to_json()).unwrap();
    p
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn trace_of_equal_spheres_is_the_equator() {
    let dir = TempDir::new().unwrap();
    let scene = spheres(&dir, &[[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]]);
    let out = path(&dir, "curve.csv");
    let run = hullscope(&["trace", "--scene", s(&scene), "--body", "0", "--other", "1", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phi,sx,sy,sz,tx,ty,tz,residual"));
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 8);
        assert!(v[1].abs() < 1e-9, "sx = {}", v[1]);
        assert!(v[7].abs() < 1e-9);
        rows += 1;
    }
    assert!(rows >= 64);
}

#[test]
fn discs_and_arrange_round_trip() {
    let dir = TempDir::new().unwrap();
    let scene = spheres(&dir, &[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [-3.0, 0.5, 0.0]]);
    let fixture = path(&dir, "discs.jsonl");
    let crossings = path(&dir, "crossings.csv");
    let run = hullscope(&[
        "discs", "--scene", s(&scene), "--body", "0", "--out", s(&fixture), "--crossings", s(&crossings),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_to_string(&fixture).unwrap().lines().count(), 3);
    assert!(fs::read_to_string(&crossings).unwrap().starts_with("a,b,x,y,z"));

    let report = path(&dir, "arrangement.json");
    let run = hullscope(&["arrange", "--fixture", s(&fixture), "--out", s(&report)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let r = json(&report);
    let sum = r["area_sum"].as_f64().unwrap();
    assert!((sum - 4.0 * std::f64::consts::PI).abs() < 1e-6);
    assert_eq!(r["discs"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_fixture_is_a_validation_failure() {
    let dir = TempDir::new().unwrap();
    let fixture = path(&dir, "bad.jsonl");
    fs::write(&fixture, "{\"generator\": \"nonsense\"}\n").unwrap();
    let run = hullscope(&["arrange", "--fixture", s(&fixture)]);
    assert_eq!(code(&run), 2);
}

#[test]
fn equal_collinear_spheres_merge_and_cover() {
    let dir = TempDir::new().unwrap();
    let scene = spheres(&dir, &[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [6.0, 0.0, 0.0]]);
    let out = path(&dir, "report.json");
    let run = hullscope(&["analyze", "--scene", s(&scene), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let r = json(&out);
    let bodies = r["bodies"].as_array().unwrap();
    assert_eq!(bodies.len(), 3);
    // Each end sees the same hemisphere twice; the middle sees two
    // complementary hemispheres.
    for end in [&bodies[0], &bodies[2]] {
        assert_eq!(end["coincident_discs"].as_u64(), Some(1));
        assert_eq!(end["holes"].as_u64(), Some(1));
        assert!((end["exposed_area"].as_f64().unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-6);
    }
    assert_eq!(bodies[1]["fully_hidden"].as_bool(), Some(true));
    assert_eq!(r["fully_hidden"].as_u64(), Some(1));
}

#[test]
fn random_scene_is_saved_and_reloaded() {
    let dir = TempDir::new().unwrap();
    let saved = path(&dir, "scene.json");
    let first = path(&dir, "a.json");
    let second = path(&dir, "b.json");
    let run = hullscope(&[
        "analyze", "--random", "5", "--family", "spheres", "--seed", "11", "--save-scene", s(&saved), "--out",
        s(&first),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let run = hullscope(&["analyze", "--scene", s(&saved), "--seed", "11", "--out", s(&second)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_to_string(&first).unwrap(), fs::read_to_string(&second).unwrap());
}

#[test]
fn overlapping_scene_is_rejected() {
    let dir = TempDir::new().unwrap();
    let scene = spheres(&dir, &[[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]]);
    let run = hullscope(&["analyze", "--scene", s(&scene)]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("overlap"));
}

#[test]
fn wrong_version_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "scene.json");
    fs::write(&p, r#"{"version": 7, "name": "x", "models": [], "bodies": []}"#).unwrap();
    assert_eq!(code(&hullscope(&["analyze", "--scene", s(&p)])), 2);
}

#[test]
fn unmeetable_area_tolerance_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "scene.json");
    fs::write(&p, random_scene(6, &FamilyParams::ellipsoids(), 3).to_json()).unwrap();
    let run = hullscope(&["analyze", "--scene", s(&p), "--tol-area", "1e-300"]);
    assert_eq!(code(&run), 3);
    assert!(String::from_utf8_lossy(&run.stderr).contains("body"));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(code(&hullscope(&["trace"])), 2);
    assert_eq!(code(&hullscope(&["ds", "--table", "--tol-area", "-1"])), 2);
}

#[test]
fn ds_checks_sequences_against_an_order() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "seq.txt");
    fs::write(&p, "abab\n# comment\nabacada\n").unwrap();
    assert_eq!(code(&hullscope(&["ds", "--file", s(&p), "--order", "2"])), 2);
    let run = hullscope(&["ds", "--file", s(&p), "--order", "3"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    fs::write(&p, "abba\n").unwrap();
    assert_eq!(code(&hullscope(&["ds", "--file", s(&p)])), 2);
}

#[test]
fn ds_table_lists_known_values() {
    let run = hullscope(&["ds", "--table", "--max-n", "4", "--max-s", "3"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("4,2,7,exact,7")));
    assert!(text.lines().any(|l| l.starts_with("4,3,12,upper-bound")));
}

#[test]
fn experiment_table_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b, t) = (path(&dir, "a.csv"), path(&dir, "b.csv"), path(&dir, "t.csv"));
    for (out, extra) in [(&a, vec!["--timings", s(&t)]), (&b, vec!["--sequential"])] {
        let mut args = vec!["experiment", "--family", "spheres", "--ns", "2,4", "--trials", "2", "--seed", "9"];
        args.extend(["--out", s(out)]);
        args.extend(extra);
        let run = hullscope(&args);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    assert_eq!(fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(fs::read_to_string(&t).unwrap().lines().count(), 5);
}

//! The binary end to end: exit codes, outputs and manifest reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cnc_forge::mesh::load_mesh;
use cnc_forge::program::{MachiningProgram, DRILL_RADII, MILL_RADII};
use cnc_forge::synth::FitConfig;
use cnc_forge::voxel::read_dump;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnc-forge"))
        .args(args)
        .env_remove("CNC_FORGE_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures(dir: &Path) -> PathBuf {
    let d = dir.join("fixtures");
    ok(&["fixtures", "--cells", "32", "--out-dir", s(&d)]);
    d
}

/// A fit small enough for a smoke test.
fn small_fit(target: &Path, out: &Path) {
    ok(&[
        "fit", "--target", s(target), "--out-dir", s(out),
        "--mill-steps", "2", "--drill-steps", "1", "--iters", "40", "--resolution", "16",
        "--lr", "0.01", "--seed", "3", "--set", "path_samples = 20",
        "--eval-resolution", "32", "--mesh-cells", "32", "--threads", "2",
    ]);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_prints_the_reference_defaults() {
    let help = String::from_utf8(ok(&["fit", "--help"]).stdout).unwrap();
    let d = FitConfig::default();
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    for expected in [
        format!("Mill steps [default: {}]", d.mill_steps),
        format!("Drill steps [default: {}]", d.drill_steps),
        format!("[default: {}]", d.iterations),
        format!("[default: {:e}]", d.learning_rate),
        format!("[default: {}]", d.w),
        format!("[default: {}]", d.resolution),
        format!("[default: {}]", join(&MILL_RADII)),
        format!("[default: {}]", join(&DRILL_RADII)),
    ] {
        assert!(help.contains(&expected), "missing {expected:?} in\n{help}");
    }
}

#[test]
fn fixtures_are_closed_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let d = fixtures(dir.path());
    for name in ["slot", "hole", "chamfer", "l-bracket", "hole-slot"] {
        let m = load_mesh(&d.join(format!("{name}.obj"))).unwrap();
        assert!(m.is_closed_and_oriented(), "{name}");
    }
    assert!(d.join("manifest.json").exists());
}

#[test]
fn fit_eval_replay_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let target = fixtures(dir.path()).join("hole-slot.obj");
    let out = dir.path().join("fit");
    small_fit(&target, &out);
    for f in ["manifest.json", "program.json", "trajectory.csv", "result.json", "recon.obj", "metrics.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let program = out.join("program.json");
    MachiningProgram::load(&program).unwrap();
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("iter,milling,drilling,shape,center,total"));
    assert_eq!(traj.lines().count(), 41);
    let result: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("result.json")).unwrap()).unwrap();
    assert!(result["iou"].as_f64().unwrap() > 0.0);

    // scoring resolution is independent of the fit resolution
    let eval = String::from_utf8(
        ok(&["eval", "--target", s(&target), "--program", s(&program), "--resolution", "24", "--samples", "300", "--mesh-cells", "24"]).stdout,
    )
    .unwrap();
    let lines: Vec<&str> = eval.lines().collect();
    assert_eq!(lines[0], "shape,iou,f1,cd,nc,runtime_s");
    assert!(lines[1].starts_with("hole-slot,"));

    let rep = dir.path().join("replay");
    ok(&["replay", "--program", s(&program), "--resolution", "16", "--mesh-cells", "24", "--out-dir", s(&rep)]);
    let (n, values) = read_dump(std::fs::File::open(rep.join("occupancy.dump")).unwrap()).unwrap();
    assert_eq!((n, values.len()), (16, 4096));
    load_mesh(&rep.join("recon.obj")).unwrap();

    let gcode = String::from_utf8(ok(&["export-gcode", "--program", s(&program), "--scale", "50"]).stdout).unwrap();
    assert_eq!(gcode.lines().last(), Some("M30"));
    assert!(gcode.contains("50.0000 mm per unit"));
}

#[test]
fn reruns_from_a_manifest_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let target = fixtures(dir.path()).join("slot.obj");
    let first = dir.path().join("first");
    small_fit(&target, &first);
    let second = dir.path().join("second");
    ok(&["rerun", "--manifest", s(&first.join("manifest.json")), "--out-dir", s(&second)]);
    for f in ["program.json", "trajectory.csv", "recon.obj"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }

    let rep = [dir.path().join("r1"), dir.path().join("r2")];
    ok(&["replay", "--program", s(&first.join("program.json")), "--resolution", "20", "--out-dir", s(&rep[0])]);
    ok(&["rerun", "--manifest", s(&rep[0].join("manifest.json")), "--out-dir", s(&rep[1])]);
    assert_eq!(
        std::fs::read(rep[0].join("occupancy.dump")).unwrap(),
        std::fs::read(rep[1].join("occupancy.dump")).unwrap()
    );
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not a program").unwrap();
    let out = run(&["export-gcode", "--program", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");

    let missing = dir.path().join("missing.obj");
    let out = run(&["fit", "--target", s(&missing), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    // a manifest whose input changed is refused
    let target = fixtures(dir.path()).join("hole.obj");
    let program = dir.path().join("p.json");
    std::fs::write(&program, MachiningProgram::empty(cnc_forge::field::BoxField::unit(), Default::default()).to_json()).unwrap();
    let rep = dir.path().join("rep");
    ok(&["replay", "--program", s(&program), "--resolution", "8", "--mesh-cells", "8", "--out-dir", s(&rep)]);
    std::fs::write(&program, std::fs::read_to_string(&target).unwrap()).unwrap();
    let out = run(&["rerun", "--manifest", s(&rep.join("manifest.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn zero_threads_is_a_usage_error() {
    let out = run(&["--threads", "0", "fixtures", "--out-dir", "/nonexistent/never"]);
    assert_eq!(out.status.code(), Some(1));
}

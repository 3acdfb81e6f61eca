use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quick_xml::events::Event;
use quick_xml::Reader;

fn okstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okstab")).args(args).output().unwrap()
}

fn scenario(dir: &Path, name: &str, gamma: f64, extra: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(
        &path,
        format!(
            r#"{{
  "domain": {{"kind": "rectangle", "lx": 1.0, "ly": 1.0, "nx": 64, "ny": 64}},
  "configuration": {{"lamella": {{"a": 0.5}}}},
  "gamma": {gamma:?},
  "nodes": 48{extra}
}}"#
        ),
    )
    .unwrap();
    path
}

fn run_cmd(cmd: &str, sc: &Path, out: &Path) -> Output {
    okstab(&[cmd, "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn assert_well_formed_svg(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut reader = Reader::from_str(&text);
    let mut saw_svg = false;
    loop {
        match reader.read_event() {
            Ok(Event::Eof) => break,
            Ok(Event::Start(e)) if e.name().as_ref() == "svg" => saw_svg = true,
            Ok(_) => {}
            Err(e) => panic!("{}: {e}", path.display()),
        }
    }
    assert!(saw_svg, "{}", path.display());
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn stable_lamella_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.json", 1.0, "");
    let out = dir.path().join("out");
    let o = run_cmd("stability", &sc, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["result"]["verdict"], "stable");
    assert_well_formed_svg(&out.join("eigenmode.svg"));
    assert_eq!(header(&out.join("interface.csv")), "s,x,y,H,phi");
}

#[test]
fn unstable_lamella_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.json", 30.0, "");
    let out = dir.path().join("out");
    let o = run_cmd("stability", &sc, &out);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["result"]["verdict"], "unstable");
}

#[test]
fn misspelled_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("bad.json");
    let text = std::fs::read_to_string(scenario(dir.path(), "s.json", 1.0, "")).unwrap();
    std::fs::write(&sc, text.replace("\"gamma\"", "\"gama\"")).unwrap();
    let o = run_cmd("stability", &sc, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gama") && err.contains("line 4"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(okstab(&["nonsense", "--scenario", "x.json"]).status.code(), Some(1));
    assert_eq!(okstab(&["energy"]).status.code(), Some(1));
    let o = okstab(&["energy", "--scenario", "/definitely/missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(okstab(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_carries_module_message() {
    let dir = tempfile::tempdir().unwrap();
    // a disk is not a lamella: the dispersion command refuses it
    let path = dir.path().join("disk.json");
    std::fs::write(
        &path,
        r#"{"domain": {"kind": "torus", "lx": 1, "ly": 1, "nx": 32, "ny": 32},
            "configuration": {"circle": {"center": [0.5, 0.5], "radius": 0.2}}}"#,
    )
    .unwrap();
    let o = run_cmd("dispersion", &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamella"));
}

/// Command, CSV files with their headers, SVG files.
type Artifacts<'a> = (&'a str, &'a [(&'a str, &'a str)], &'a [&'a str]);

#[test]
fn every_command_writes_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        dir.path(),
        "s.json",
        2.0,
        r#",
  "dispersion": {"k_max": 3},
  "probe": {"samples": 50},
  "flow": {"steps": 20, "snapshot_every": 5},
  "gammastar": {"tol": 1e-2},
  "diffuse": {"epsilon": 0.08, "steps": 50, "log_every": 5}"#,
    );
    let expect: &[Artifacts] = &[
        (
            "energy",
            &[("interface.csv", "s,x,y,H,phi"), ("field.csv", "i,j,x,y,value")],
            &["interface.svg", "field.svg"],
        ),
        ("critic", &[("interface.csv", "s,x,y,H,phi")], &["interface.svg"]),
        ("dispersion", &[("dispersion.csv", "k,mu_discrete,mu_analytic")], &["dispersion.svg"]),
        ("probe", &[("probe.csv", "amplitude,sym_diff,delta_j,perimeter_drop")], &["probe.svg"]),
        ("flow", &[("flow.csv", "t,J,residual_sup,area"), ("interface.csv", "s,x,y,H,phi")], &["flow.svg"]),
        ("gammastar", &[], &[]),
        ("diffuse", &[("diffuse.csv", "t,E,mass"), ("field.csv", "i,j,x,y,value")], &["field.svg"]),
    ];
    for (cmd, csvs, svgs) in expect {
        let out = dir.path().join(cmd);
        let o = run_cmd(cmd, &sc, &out);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(report(&out)["command"], *cmd);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
        assert!(meta["timestamp_unix"].as_u64().unwrap() > 0);
        for (file, head) in *csvs {
            assert_eq!(header(&out.join(file)), *head, "{cmd}/{file}");
        }
        for file in *svgs {
            assert_well_formed_svg(&out.join(file));
        }
    }
}

#[test]
fn report_floats_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.json", 1.0, "");
    let out = dir.path().join("out");
    run_cmd("energy", &sc, &out);
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let j = report(&out)["result"]["energy"]["J"].as_f64().unwrap();
    assert!(text.contains(&format!("{j:.16e}")));
    assert!((j - (1.0 + 1.0 / 12.0)).abs() < 0.01);
}

#[test]
fn flags_override_scenario_and_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.json", 1.0, r#", "probe": {"samples": 50}"#);
    let run = |sub: &str, seed: &str| -> Vec<u8> {
        let out = dir.path().join(sub);
        let o = okstab(&[
            "probe",
            "--scenario",
            sc.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--grid",
            "48",
            "--nodes",
            "40",
            "--seed",
            seed,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("report.json")).unwrap()
    };
    let a = run("a", "9");
    let b = run("b", "9");
    let c = run("c", "10");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["scenario"]["domain"]["nx"], 48);
    assert_eq!(v["scenario"]["nodes"], 40);
    assert_eq!(v["result"]["seed"], 9);
}

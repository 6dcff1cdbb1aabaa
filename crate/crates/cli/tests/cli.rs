use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ftl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL_CAUCHY: &str = r#"{
  "name": "small",
  "scheme": "lwr_cauchy",
  "velocity": {"kind": "greenshields", "v_max": 1.0, "rho_max": 1.0},
  "initial": {"breakpoints": [-0.5, 0.0, 0.5], "values": [0.8, 0.3]},
  "particles": 30,
  "t_final": 0.4,
  "reference": "riemann"
}"#;

#[test]
fn lists_every_preset() {
    let o = ftl(&["list-presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "lwr-test1",
        "ibvp-test1bc",
        "ibvp-test2bc",
        "ibvp-ptd",
        "arz-test1",
        "arz-test2",
        "hughes-steps",
        "hughes-two-step",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn validate_accepts_presets_and_files() {
    assert!(ftl(&["validate", "--scenario", "ibvp-ptd"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), SMALL_CAUCHY);
    let o = ftl(&["validate", "--scenario", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("small"));
}

#[test]
fn validate_names_missing_boundary_data() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_CAUCHY
        .replace("lwr_cauchy", "lwr_ibvp")
        .replace("[-0.5, 0.0, 0.5]", "[0.0, 0.5, 1.0]")
        .replace("\"riemann\"", "\"none\"");
    let path = write_scenario(dir.path(), &body);
    let o = ftl(&["validate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("inflow"), "{err}");
    assert!(err.contains("outflow"), "{err}");
}

#[test]
fn validate_rejects_too_few_particles_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &SMALL_CAUCHY.replace("\"particles\": 30", "\"particles\": 2"));
    let o = ftl(&["validate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("particles"), "{}", stderr(&o));

    let path = write_scenario(dir.path(), &SMALL_CAUCHY.replace("\"t_final\"", "\"t_end\""));
    let o = ftl(&["validate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_end"), "{}", stderr(&o));

    let o = ftl(&["validate", "--scenario", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_a_reproducible_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), SMALL_CAUCHY);
    let mut bundles = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = ftl(&["simulate", "--scenario", &path, "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let files: Vec<Vec<u8>> = ["snapshots.csv", "tracks.csv", "diagnostics.json"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        bundles.push(files);
    }
    assert_eq!(bundles[0], bundles[1]);

    let snapshots = String::from_utf8(bundles[0][0].clone()).unwrap();
    let mut lines = snapshots.lines();
    assert_eq!(lines.next(), Some("t,x_left,x_right,rho"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert_eq!(first[1], -0.5);
    let tracks = String::from_utf8(bundles[0][1].clone()).unwrap();
    assert_eq!(tracks.lines().next(), Some("t,particle_index,x"));
    // 101 samples of 31 particles
    assert_eq!(tracks.lines().count(), 1 + 101 * 31);
    let diagnostics = String::from_utf8(bundles[0][2].clone()).unwrap();
    assert!(diagnostics.contains("\"passed\": true"));
}

#[test]
fn overrides_and_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("json");
    let o = ftl(&[
        "simulate",
        "--scenario",
        "ibvp-test2bc",
        "--particles",
        "40",
        "--windows",
        "5",
        "--t-final",
        "0.5",
        "--tol",
        "1e-7",
        "--format",
        "json",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("snapshots.json").exists());
    assert!(out.join("tracks.json").exists());
    let diagnostics = fs::read_to_string(out.join("diagnostics.json")).unwrap();
    assert!(diagnostics.contains("\"particles\": 40"));
    assert!(diagnostics.contains("\"t_final\": 0.5"));
    // the particle queue carries negative indices
    let tracks = fs::read_to_string(out.join("tracks.json")).unwrap();
    assert!(tracks.contains("\"first_index\":-"));
}

#[test]
fn failed_invariants_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_CAUCHY.replace(
        "\"reference\": \"riemann\"",
        "\"reference\": \"riemann\", \"tolerances\": {\"total_variation\": -1.0}",
    );
    let path = write_scenario(dir.path(), &body);
    let o = ftl(&["simulate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));
    let o = ftl(&["simulate", "--scenario", &path, "--check-invariants", "off"]);
    assert!(o.status.success());
}

#[test]
fn compare_and_convergence() {
    let o = ftl(&["compare", "--scenario", "lwr-riemann-rarefaction", "--check-invariants", "off"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("L1 distance"), "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        &SMALL_CAUCHY.replace("\"t_final\": 0.4", "\"t_final\": 0.4, \"convergence\": {\"particles\": [20, 40]}"),
    );
    let o = ftl(&["convergence", "--scenario", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "n,m,error,order");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("20,,"));

    let o = ftl(&["convergence", "--scenario", "arz-test1"]);
    assert_eq!(o.status.code(), Some(2));
}

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use powerflow_safety::cli::commands::execute;
use powerflow_safety::cli::log_csv::{header, read_log};
use powerflow_safety::cli::plot::structure;
use powerflow_safety::cli::scenario_file::{parse_scenario, write_scenario};
use powerflow_safety::cli::{run_cli, Cli, EXIT_DIVERGED, EXIT_INVALID, EXIT_OK};
use sha2::{Digest, Sha256};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn pfsafe(args: &[&str]) -> i32 {
    run_cli(std::iter::once("pfsafe").chain(args.iter().copied()))
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim_start().strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing in\n{text}"))
        .trim()
        .to_string()
}

fn num(text: &str, key: &str) -> f64 {
    kv(text, key).parse().unwrap()
}

#[test]
fn bundled_scenarios_parse_and_round_trip() {
    for name in ["freeflight.scn", "cart.scn", "damping_sweep.scn", "pose_regulation.scn", "contact_regulation.scn"] {
        let text = fs::read_to_string(scenario(name)).unwrap();
        let (sc, analysis) = parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(sc.measurement.noise_std, 0.0, "{name}");
        let canonical = write_scenario(&sc, &analysis);
        let (back, a2) = parse_scenario(&canonical).unwrap();
        assert_eq!(back, sc);
        assert_eq!(write_scenario(&back, &a2), canonical);
    }
}

#[test]
fn run_writes_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(pfsafe(&["run", scenario("freeflight.scn").to_str().unwrap(), "--out", out]), EXIT_OK);
    let log = read_log(fs::File::open(dir.path().join("log.csv")).unwrap()).unwrap();
    assert_eq!(log.len(), 5001);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    for key in ["peak_power_W", "peak_velocity_error", "lle_zero_crossings_x_s", "qp_violation_time_y_s"] {
        kv(&summary, key);
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let path = scenario("pose_regulation.scn");
    let args = ["pfsafe", "run", path.to_str().unwrap(), "--out", out, "--dt", "0.005", "--safety", "on", "--k-lambda", "2", "--seed", "9"];
    let cli = Cli::parse_from(args);
    execute(&cli.command).unwrap();
    let log = read_log(fs::File::open(dir.path().join("log.csv")).unwrap()).unwrap();
    // 8 s at 0.005 s physics, control every other step.
    assert_eq!(log.len(), 801);
    assert_eq!(pfsafe(&["run", path.to_str().unwrap(), "--out", out, "--k-lambda", "1,2"]), EXIT_INVALID);
    assert_eq!(pfsafe(&["run", path.to_str().unwrap(), "--out", out, "--dt=-1"]), EXIT_INVALID);
    assert_eq!(pfsafe(&["run", path.to_str().unwrap(), "--safety", "maybe"]), EXIT_INVALID);
}

#[test]
fn malformed_key_is_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scn");
    fs::write(&path, "[run]\nduration_s = 1.0\n\n[gains]\nk_p = [1.0, 1.0, 1.0]\n").unwrap();
    let args = ["pfsafe", "run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    let err = execute(&Cli::parse_from(args).command).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_INVALID);
    assert!(err.to_string().contains("line 5: "), "{err}");
    assert_eq!(run_cli(args), EXIT_INVALID);
    assert!(!dir.path().join("log.csv").exists());
}

#[test]
fn divergence_is_exit_3_with_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unstable.scn");
    // A position gain far beyond what the 400 Hz integrator can resolve, with
    // saturation lifted so nothing bounds the wrench.
    fs::write(
        &path,
        r#"
[run]
duration_s = 5.0
safety_enabled = false

[vehicle]
initial_position_m = [0.1, 0.0, 0.0]

[gains]
k_p_N_per_m = [1000000.0, 20.0, 20.0]

[safety]
force_limit_N = [1e9, 1e9, 1e9]
force_rate_limit_N_per_s = [1e12, 1e12, 1e12]
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(pfsafe(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_DIVERGED);
    let log = read_log(fs::File::open(out.join("log.csv")).unwrap()).unwrap();
    assert!(!log.is_empty() && log.last().unwrap().t < 5.0);
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("diverged_at_s"));
}

#[test]
fn compare_freeflight_halves_the_overshoot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(pfsafe(&["compare", scenario("freeflight.scn").to_str().unwrap(), "--out", out]), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("compare.txt")).unwrap();
    assert!(num(&text, "overshoot_ratio") <= 0.5, "{text}");
    assert!(num(&text, "peak_power_on_W") <= 1.0, "{text}");
    assert!(num(&text, "peak_power_off_W") >= 2.0, "{text}");
    assert!(dir.path().join("log_off.csv").exists() && dir.path().join("log_on.csv").exists());
}

#[test]
fn compare_is_transparent_on_a_stable_hold() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hold.scn");
    // Overdamped release from 5 cm: the estimate stays negative and the power
    // row never binds.
    fs::write(
        &path,
        r#"
[run]
duration_s = 5.0

[vehicle]
initial_position_m = [0.05, 0.0, 0.0]

[gains]
d_v_N_s_per_m = [30.0, 30.0, 30.0]

[safety.lle]
initial_per_s = -0.546

[environment.sensor]
noise_std_N = 0.0
"#,
    )
    .unwrap();
    assert_eq!(pfsafe(&["compare", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("compare.txt")).unwrap();
    assert!((num(&text, "overshoot_ratio") - 1.0).abs() < 1e-3, "{text}");
    assert!((num(&text, "peak_power_ratio") - 1.0).abs() < 1e-3, "{text}");
}

#[test]
fn compare_cart_flags_the_unfiltered_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfsafe(&["compare", scenario("cart.scn").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("compare.txt")).unwrap();
    assert_eq!(kv(&text, "diverging_off"), "true", "{text}");
    assert_eq!(kv(&text, "diverging_on"), "false", "{text}");
    assert!(num(&text, "peak_speed_off_m_per_s") > 1.0, "{text}");
    assert!(num(&text, "stop_time_on_s") <= 20.0, "{text}");
}

#[test]
fn sweep_writes_one_row_per_gain() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfsafe(&["sweep", scenario("damping_sweep.scn").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let gains: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(gains, vec![0.5, 1.0, 2.0, 4.0]);
    assert!(rows.iter().all(|r| !r[1].is_empty()));
    assert_eq!(
        pfsafe(&["sweep", scenario("damping_sweep.scn").to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--k-lambda", "3"]),
        EXIT_OK
    );
    assert_eq!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count(), 2);
    assert_eq!(pfsafe(&["sweep", scenario("cart.scn").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), EXIT_INVALID);
}

fn sha256(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn plot_freeflight_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ff = scenario("freeflight.scn");
    assert_eq!(pfsafe(&["run", ff.to_str().unwrap(), "--out", out]), EXIT_OK);
    let log = dir.path().join("log.csv");
    let plots = dir.path().join("plots");
    assert_eq!(pfsafe(&["plot", log.to_str().unwrap(), "--scenario", ff.to_str().unwrap(), "--out", plots.to_str().unwrap()]), EXIT_OK);
    let ts = fs::read_to_string(plots.join("timeseries.svg")).unwrap();
    assert_eq!(ts.matches(r#"<g class="panel">"#).count(), 5);
    let sig = structure(&ts);
    assert_eq!(sha256(&sig), include_str!("golden/freeflight_timeseries.sha256").trim(), "structure changed:\n{sig}");
    let phase = fs::read_to_string(plots.join("phase_x.svg")).unwrap();
    assert!(phase.contains("set boundary") && phase.contains("trajectory"));
}

#[test]
fn plot_rejects_empty_and_foreign_logs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, header().join(",") + "\n").unwrap();
    assert_eq!(pfsafe(&["plot", empty.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), EXIT_INVALID);
    let foreign = dir.path().join("foreign.csv");
    fs::write(&foreign, "time,x\n0,1\n").unwrap();
    assert_eq!(pfsafe(&["plot", foreign.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]), EXIT_INVALID);
}

/// `(set, x, y)` rows of a safe-set CSV.
fn curves(path: &Path) -> Vec<(String, f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            (it.next().unwrap().to_string(), it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect()
}

#[test]
fn safeset_emits_all_sets() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfsafe(&["safeset", "--out", dir.path().to_str().unwrap()]), EXIT_OK);
    for f in ["pose_sets.svg", "pose_sets.csv", "wrench_sets.svg", "wrench_sets.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let pose = curves(&dir.path().join("pose_sets.csv"));
    for set in ["nominal", "zero_accel", "scaled"] {
        assert!(pose.iter().any(|(s, _, _)| s == set), "{set}");
    }
    // Allowed approach speed 1 cm beyond each surface's own setpoint.
    let wrench = curves(&dir.path().join("wrench_sets.csv"));
    let allowed = |name: &str, k_s: f64| {
        let x0 = 4.0 / k_s + 0.01;
        wrench.iter().filter(|(s, x, y)| s == name && *y > 0.0 && (x - x0).abs() < 1e-3).map(|(_, _, y)| *y).fold(f64::NAN, f64::max)
    };
    let soft = allowed("k_s=30", 30.0);
    let stiff = allowed("k_s=300", 300.0);
    assert!(soft > 0.0 && stiff > 0.0 && stiff < soft, "soft {soft} stiff {stiff}");
}

#[test]
fn safeset_without_position_gain_degenerates_to_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfsafe(&["safeset", "--stiffness", "0", "--out", dir.path().to_str().unwrap()]), EXIT_OK);
    let pose = curves(&dir.path().join("pose_sets.csv"));
    assert!(pose.iter().filter(|(s, _, _)| s == "nominal").all(|(_, _, y)| y.abs() < 1e-6));
    assert_eq!(pfsafe(&["safeset", "--mass=0", "--out", dir.path().to_str().unwrap()]), EXIT_INVALID);
}

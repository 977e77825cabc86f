use std::path::Path;
use std::process::{Command, Output};

fn cogisac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogisac"))
        .args(args)
        .env_remove("COGISAC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

fn small_run(extra: &[&str], out: &Path) -> Output {
    let mut args = vec!["run", "stationary4-desk", "--pulses", "4", "--mc-runs", "2", "--out"];
    let out = out.to_str().unwrap();
    args.push(out);
    args.extend_from_slice(extra);
    cogisac(&args)
}

#[test]
fn run_writes_one_row_per_pulse_and_target() {
    let tmp = tempfile::tempdir().unwrap();
    let o = small_run(&[], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pd = read(tmp.path(), "pd_over_pulses.csv");
    let mut lines = pd.lines();
    assert_eq!(lines.next().unwrap(), "pulse,target_id,policy,rho,p_detect");
    assert_eq!(lines.count(), 4 * 4);
    let rate = read(tmp.path(), "sumrate_over_pulses.csv");
    assert_eq!(rate.lines().count(), 1 + 4);
    assert!(tmp.path().join("manifest.json").is_file());
}

#[test]
fn reruns_with_a_seed_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(small_run(&["--seed", "7"], a.path()).status.success());
    assert!(small_run(&["--seed", "7", "--threads", "2"], b.path()).status.success());
    for f in ["pd_over_pulses.csv", "sumrate_over_pulses.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    assert!(small_run(&["--seed", "8"], c.path()).status.success());
    assert_ne!(read(a.path(), "sumrate_over_pulses.csv"), read(c.path(), "sumrate_over_pulses.csv"));
}

#[test]
fn json_output() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(small_run(&["--format", "json"], tmp.path()).status.success());
    let text = read(tmp.path(), "pd_over_pulses.json");
    assert!(text.trim_start().starts_with('['));
    assert!(text.contains("\"p_detect\""));
}

#[test]
fn compare_labels_every_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cogisac(&[
        "compare",
        "--pulses",
        "3",
        "--mc-runs",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rate = read(tmp.path(), "sumrate_over_pulses.csv");
    for label in ["rl", "nrl", "orthogonal"] {
        assert_eq!(rate.lines().filter(|l| l.split(',').nth(1) == Some(label)).count(), 3, "{label}");
    }
}

#[test]
fn sweep_covers_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cogisac(&[
        "sweep",
        "--pulses",
        "2",
        "--mc-runs",
        "1",
        "--snr-db",
        "0:2:18",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read(tmp.path(), "sumrate_vs_snr.csv");
    assert_eq!(rows.lines().next().unwrap(), "policy,rho,snr_db,sum_rate,normalized_sum_rate");
    assert_eq!(rows.lines().count(), 1 + 4 * 10);
}

#[test]
fn replaying_a_manifest_reproduces_the_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(small_run(&["--rho", "0.6"], a.path()).status.success());
    let manifest = a.path().join("manifest.json");
    let o = cogisac(&["replay", manifest.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["pd_over_pulses.csv", "sumrate_over_pulses.csv", "manifest.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn output_directory_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cogisac"))
        .args(["run", "--pulses", "2", "--mc-runs", "1"])
        .env("COGISAC_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("pd_over_pulses.csv").is_file());
}

#[test]
fn bad_input_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(cogisac(&["run", "no-such-scenario", "--out", out]).status.code(), Some(2));
    let o = cogisac(&["run", "--rho", "1.5", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("O001"));
    assert_eq!(cogisac(&["run", "--rho", "0.2,0.4", "--out", out]).status.code(), Some(2));
    assert_eq!(cogisac(&["run", "--users", "17", "--out", out]).status.code(), Some(2));
}

#[test]
fn validate_reports_codes() {
    assert_eq!(cogisac(&["validate", "dynamic3"]).status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let shown = cogisac(&["show", "stationary4-desk"]);
    assert!(shown.status.success());
    let text = String::from_utf8(shown.stdout).unwrap();
    let good = tmp.path().join("good.toml");
    std::fs::write(&good, &text).unwrap();
    assert_eq!(cogisac(&["validate", good.to_str().unwrap()]).status.code(), Some(0));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, text.replacen("nu_x = -0.4", "nu_x = 0.37", 1)).unwrap();
    let o = cogisac(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("T001"));

    let garbled = tmp.path().join("garbled.toml");
    std::fs::write(&garbled, "pulses = \"many\"").unwrap();
    let o = cogisac(&["validate", garbled.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("S002"));
}

#[test]
fn list_scenarios_names_the_library() {
    let o = cogisac(&["list-scenarios"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["stationary4", "dynamic3", "sequential7", "stationary4-desk", "dynamic3-desk", "sequential7-desk"] {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}

use std::fs;
use std::process::{Command, Output};

fn qkdrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdrate"))
        .args(args)
        .output()
        .expect("spawn qkdrate")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(qkdrate(&["--help"]).status.code(), Some(0));
    assert_eq!(qkdrate(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        qkdrate(&["sweep", "--theta", "0.1", "--theta-a", "0.2"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn invalid_values_name_the_field() {
    let o = qkdrate(&["keyrate", "--mu", "-0.3", "--method", "analytical"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mu"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "protocol = \"bb84\"\np_z = 1.5\n").unwrap();
    let o = qkdrate(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("p_z"), "{}", stderr(&o));

    let o = qkdrate(&[
        "sweep",
        "--config",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rates.csv");
    let args = [
        "sweep",
        "--distance-km",
        "10,60",
        "--theta",
        "0.2",
        "--method",
        "numerical-fine,analytical",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    let o = qkdrate(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("4 rows, 0 failed"), "{}", stdout(&o));

    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# qkdrate"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("protocol,method"));
    assert_eq!(rows.len(), 5);

    let manifest = fs::read_to_string(dir.path().join("rates.csv.manifest.toml")).unwrap();
    assert!(manifest.contains("total_seconds"), "{manifest}");

    // Same inputs on one worker: identical CSV.
    let again = dir.path().join("again.csv");
    let mut args1 = args;
    args1[8] = "1";
    args1[10] = again.to_str().unwrap();
    assert_eq!(qkdrate(&args1).status.code(), Some(0));
    assert_eq!(fs::read_to_string(&again).unwrap(), csv);
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let o = qkdrate(&["keyrate", "--distance-km", "20", "--method", "analytical"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).lines().any(|l| l.starts_with("bb84,analytical")),
        "{}",
        stdout(&o)
    );
    assert!(stderr(&o).contains("1 rows"));
}

#[test]
fn simulate_and_decoy_emit_tables() {
    let o = qkdrate(&["simulate", "--distance-km", "30"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).is_empty());

    let o = qkdrate(&["decoy", "--distance-km", "30"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("single-photon intervals"));
    let o = qkdrate(&["decoy", "--distance-km", "30", "--raw-first"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn diagnose_reports_every_check() {
    let o = qkdrate(&["diagnose", "--distance-km", "40"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    for check in [
        "order-equivalence",
        "oracle-bracket",
        "povm-validation",
        "gradient-fd",
        "certificate-gap",
    ] {
        assert!(text.contains(check), "{check} missing from\n{text}");
    }
}

#[test]
fn compare_lists_all_methods() {
    let o = qkdrate(&["compare", "--distance-km", "50", "--theta", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("distance_km,theta_a,fine,coarse,analytical"));
    let fields: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    assert!(fields[2] >= fields[4], "fine below analytical: {fields:?}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polystab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polystab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_csv(dir: &Path, name: &str, rows: impl Iterator<Item = String>) -> String {
    let path = dir.join(name);
    let mut text = String::from("k,t,mean_square,std_error,surviving,blown_up\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = polystab(&[
        "simulate", "--problem", "linear", "--scheme", "em", "--dt", "0.1", "--paths", "200", "--steps", "2000",
        "--seed", "5", "--envelope", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["moments.csv", "config.json", "report.json", "envelope.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("moments.csv")).unwrap();
    assert!(csv.starts_with("k,t,mean_square,std_error,surviving,blown_up\n0,0.0,1.0,0.0,200,0\n"));
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["config"]["seed"], 5);
    assert_eq!(config["constants"]["k1"], 1.0);

    let a = polystab(&["analyze", out.join("moments.csv").to_str().unwrap(), "--problem", "linear"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert!(report["estimate"]["slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn simulate_to_stdout_is_thread_independent() {
    let args = [
        "simulate", "--problem", "bem-example", "--scheme", "bem", "--dt", "0.3", "--paths", "600", "--steps", "300",
        "--seed", "11",
    ];
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_polystab"))
            .args(args)
            .env("POLYSTAB_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("7"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(run("zero").status.code(), Some(1));
}

#[test]
fn spec_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"problem": {"label": "linear"}, "scheme": "em", "dt": 0.1, "num_steps": 500,
            "num_paths": 100, "seed": 3}"#,
    )
    .unwrap();
    let a = polystab(&["simulate", "--spec", spec.to_str().unwrap()]);
    let b = polystab(&[
        "simulate", "--problem", "linear", "--scheme", "em", "--dt", "0.1", "--paths", "100", "--steps", "500",
        "--seed", "3",
    ]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_errors_exit_one() {
    let missing_seed = polystab(&[
        "simulate", "--problem", "linear", "--scheme", "em", "--dt", "0.1", "--paths", "10", "--steps", "10",
    ]);
    assert_eq!(missing_seed.status.code(), Some(1));
    assert!(stderr(&missing_seed).contains("--seed"));
    let unknown = polystab(&[
        "simulate", "--problem", "nope", "--scheme", "em", "--dt", "0.1", "--paths", "10", "--steps", "10", "--seed",
        "1",
    ]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).contains("unknown problem"));
    assert_eq!(polystab(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let rows = |f: fn(f64) -> f64| (0..=40u64).map(move |i| {
        let t = 10f64.powf(i as f64 / 10.0) - 1.0;
        format!("{i},{t:?},{:?},0.0,100,0", f(t))
    });

    let good = write_csv(dir.path(), "good.csv", rows(|t| 2.0 * (1.0 + t).powf(-5.0)));
    let o = polystab(&["analyze", &good, "--k1", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((report["estimate"]["slope"].as_f64().unwrap() + 5.0).abs() < 1e-9);

    let slow = write_csv(dir.path(), "slow.csv", rows(|t| (1.0 + t).powf(-1.0)));
    assert_eq!(polystab(&["analyze", &slow, "--k1", "3"]).status.code(), Some(3));

    let blown = write_csv(
        dir.path(),
        "blown.csv",
        (0..=40u64).map(|i| format!("{i},{:?},1.0,0.1,90,10", 10f64.powf(i as f64 / 10.0) - 1.0)),
    );
    let o = polystab(&["analyze", &blown, "--k1", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let bad = write_csv(dir.path(), "bad.csv", ["0,0.0,1.0,0.0,1,0".to_string(), "1,oops,1.0,0.0,1,0".to_string()].into_iter());
    let o = polystab(&["analyze", &bad, "--k1", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn verify_gamma_pass_and_inverted_failure() {
    let o = polystab(&["verify-gamma", "--k-max", "20", "--samples", "50"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));

    let o = polystab(&["verify-gamma", "--k-max", "20", "--samples", "50", "--invert", "em-first-term"]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.contains("FAIL em-first-term"));
    assert!(text.contains("violation: k=2 dt=0.05 K1=1"), "{text}");

    assert_eq!(polystab(&["verify-gamma", "--k-max", "5", "--invert", "nope"]).status.code(), Some(1));
}

#[test]
fn counterexample_command() {
    let o = polystab(&["counterexample", "--dt", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let step: u64 = text
        .lines()
        .find_map(|l| l.strip_prefix("exceeds cap 1e12 at step "))
        .expect("cap line")
        .parse()
        .unwrap();
    assert!(step <= 10);
    assert!(text.contains("induction invariant: holds"));
    assert!(text.contains("x0 = 5.5"));
    assert!(text.contains("non-decreasing after the first blow-up: true"));

    assert_eq!(polystab(&["counterexample", "--dt", "0.6"]).status.code(), Some(1));
}

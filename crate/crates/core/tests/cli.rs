mod common;

use std::fs;

use common::{jitnet, scenarios_dir};
use jitnet::analyzer::RunSummary;

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn allocate_ten_slots_beta_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = jitnet(&["allocate", "--n", "10", "--beta", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut got: Vec<(usize, usize)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<usize> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    got.sort();
    assert_eq!(got, vec![(0, 3), (2, 5), (4, 7), (6, 9), (8, 1)]);
}

#[test]
fn allocate_reports_odd_period() {
    let tmp = tempfile::tempdir().unwrap();
    let o = jitnet(&["allocate", "--n", "10", "--beta", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k=5 is odd"), "{}", stderr(&o));
}

#[test]
fn allocate_check_all_on_power_of_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = jitnet(
        &["allocate", "--n", "64", "--beta", "1..63", "--check-all"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("63 of 63"));
    let o = jitnet(
        &["allocate", "--n", "12", "--beta", "1..11", "--check-all"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn allocate_heterogeneous_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("alloc.csv");
    let o = jitnet(
        &[
            "allocate",
            "--n",
            "20",
            "--beta",
            "2,5,9",
            "--csv",
            csv.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stderr(&o).contains("total distance 16 (exact)"),
        "{}",
        stderr(&o)
    );
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("pair_id,client_slot,server_slot,beta,distance"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn simulate_table1_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let m = scenarios_dir().join("table1-jit.toml");
    let o = jitnet(&["simulate", m.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("table1-jit");
    assert_eq!(
        fs::read_to_string(dir.join("manifest.toml")).unwrap(),
        fs::read_to_string(&m).unwrap()
    );
    let s: RunSummary =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let rtt = s.rtt_ns.unwrap().mean / 1e3;
    assert!((480.0..=540.0).contains(&rtt), "mean RTT {rtt} us");

    let out = tmp.path().join("fig9b.csv");
    let o = jitnet(
        &[
            "analyze",
            dir.to_str().unwrap(),
            "--figure",
            "fig9b",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("steady state"));
    let ys: Vec<i64> = fs::read_to_string(out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let (lo, hi) = (ys.iter().min().unwrap(), ys.iter().max().unwrap());
    assert!(hi - lo < 60_000, "{lo}..{hi}");
    assert!(*lo <= 30_000 && *hi >= 30_000);
}

#[test]
fn copied_manifest_reproduces_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let m = scenarios_dir().join("table1-jit-setting2.toml");
    assert_eq!(
        jitnet(&["simulate", m.to_str().unwrap()], &a).status.code(),
        Some(0)
    );
    let copy = a.join("table1-jit-setting2/manifest.toml");
    assert_eq!(
        jitnet(&["simulate", copy.to_str().unwrap()], &b)
            .status
            .code(),
        Some(0)
    );
    for f in [
        "trace.csv",
        "occupancy.csv",
        "telemetry.csv",
        "summary.json",
    ] {
        let x = fs::read(a.join("table1-jit-setting2").join(f)).unwrap();
        let y = fs::read(b.join("table1-jit-setting2").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn seed_range_fans_out() {
    let tmp = tempfile::tempdir().unwrap();
    let m = scenarios_dir().join("csma-pull.toml");
    let o = jitnet(
        &["simulate", m.to_str().unwrap(), "--seeds", "3..6"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for seed in 3..6 {
        let d = tmp.path().join(format!("csma-pull/seed-{seed}"));
        assert!(d.join("waits.csv").exists());
        assert!(d.join("summary.json").exists());
    }
    let a = fs::read(tmp.path().join("csma-pull/seed-3/waits.csv")).unwrap();
    let b = fs::read(tmp.path().join("csma-pull/seed-4/waits.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn malformed_manifest_names_key() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenarios_dir().join("table1-jit.toml"))
        .unwrap()
        .replace("num_frames = 10000", "num_frames = 10000\nframes_total = 5");
    let m = tmp.path().join("bad.toml");
    fs::write(&m, text).unwrap();
    let o = jitnet(&["simulate", m.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frames_total"), "{}", stderr(&o));
}

#[test]
fn invalid_config_is_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenarios_dir().join("table1-jit.toml"))
        .unwrap()
        .replace(
            "[tdma.server_delay]\nbase = \"30us\"",
            "[tdma.server_delay]\nbase = \"30ms\"",
        );
    assert!(text.contains("30ms"));
    let m = tmp.path().join("slow-server.toml");
    fs::write(&m, &text).unwrap();
    let o = jitnet(&["simulate", m.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn analyze_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = jitnet(
        &["analyze", tmp.path().to_str().unwrap(), "--figure", "fig8"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = jitnet(
        &["analyze", tmp.path().to_str().unwrap(), "--figure", "fig7"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = jitnet(&["bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = jitnet(&["--help"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
}

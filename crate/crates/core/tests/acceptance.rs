//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any outcome differs from the expected one.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{brute_force_packing, jitnet, scenarios_dir};
use jitnet::allocator::{
    all_betas_feasible, construct_optimal_packing, packing_feasible, PackingOrder, RingConfig,
};
use jitnet::analyzer::verify_recurrence;
use jitnet::clock::ClockSetting;
use jitnet::controller::controller_poles;
use jitnet::csma::{run_csma, CsmaScenario};
use jitnet::manifest::{Experiment, Manifest};
use jitnet::stats::paired_sign_test;
use jitnet::tdma::{aoi_series, run_experiment, ExperimentConfig, PreemptionModel, RunResult};
use jitnet::time::Nanos;

const US: i64 = 1_000;
const F: i64 = 9_600 * US;
const SLOT: i64 = 150 * US;
const TARGET: i64 = 30 * US;
const J: i64 = 30 * US;
const WARMUP: usize = 100;

// 1
const RTT_CENTER_US: f64 = 510.0;
const RTT_TOL_US: f64 = 30.0;
const RTT_MAX_RUNTIME: Duration = Duration::from_secs(10);
// 2
const WC_RIPPLE: i64 = 2 * US;
const BASELINE2_SPAN: f64 = 0.9;
// 3
const BASELINE1_SEEDS: u64 = 2_000;
const BASELINE1_MIN_SEEDS: u64 = 200;
const BASELINE1_REL_TOL: f64 = 0.05;
// 4
const UNDERFLOW_EVERY: u64 = 3;
const STATED_DRIFT_PPM: f64 = 5.0;
// 6
const PACKING_MAX_RUNTIME: Duration = Duration::from_secs(60);
// 9
const POLE_TOL: f64 = 1e-12;
const CONVERGE_TOL_NS: f64 = 100.0;
const RECURRENCE_RUNS: u64 = 20;
const QUANTUM_NS: f64 = 1.0;
// 10
const AOI_RIPPLE: i64 = 2 * US;
// 11
const CSMA_SEEDS: u64 = 40;
const CSMA_MIN_SEEDS: u64 = 30;
const SIGN_LEVEL: f64 = 0.05;

type Check = fn() -> (bool, String);

/// Criteria whose stated numbers cannot be reached by a faithful model.
const KNOWN_FAILING: &[u32] = &[4];

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn load(name: &str) -> Manifest {
    let text = fs::read_to_string(scenarios_dir().join(name)).unwrap();
    Manifest::parse(&text).unwrap()
}

fn tdma(name: &str) -> ExperimentConfig {
    let m = load(name);
    match m.experiment(m.seed).unwrap() {
        Experiment::Tdma(c) => c,
        Experiment::Csma(_) => panic!("{name} is not a tdma scenario"),
    }
}

fn csma(name: &str, seed: u64) -> CsmaScenario {
    match load(name).experiment(seed).unwrap() {
        Experiment::Csma(s) => s,
        Experiment::Tdma(_) => panic!("{name} is not a csma scenario"),
    }
}

fn steady_wc(r: &RunResult) -> Vec<i64> {
    r.wc.iter().skip(WARMUP).map(|w| w.w_c.as_ns()).collect()
}

fn range(v: &[i64]) -> (i64, i64) {
    (*v.iter().min().unwrap(), *v.iter().max().unwrap())
}

fn us(ns: i64) -> f64 {
    ns as f64 / 1e3
}

fn rtt_reproduction() -> (bool, String) {
    let c = tdma("table1-jit.toml");
    let t = Instant::now();
    let r = run_experiment(&c).unwrap();
    let took = t.elapsed();
    let rtt: Vec<f64> = r
        .traces
        .iter()
        .skip(WARMUP)
        .map(|t| t.rtt().as_us_f64())
        .collect();
    let mean = rtt.iter().sum::<f64>() / rtt.len() as f64;
    let ok = (mean - RTT_CENTER_US).abs() <= RTT_TOL_US && took < RTT_MAX_RUNTIME;
    (
        ok && c.num_frames == 10_000,
        format!(
            "mean RTT {mean:.1} us over {} exchanges, {} frames in {took:.2?}",
            rtt.len(),
            c.num_frames
        ),
    )
}

fn slack_regulation() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in [
        "table1-jit.toml",
        "table1-jit-setting2.toml",
        "table1-jit-setting3.toml",
    ] {
        let c = tdma(name);
        let r = run_experiment(&c).unwrap();
        let (lo, hi) = range(&steady_wc(&r));
        ok &= lo >= TARGET - J && hi <= TARGET + J + WC_RIPPLE;
        parts.push(format!(
            "jit-{} W_c [{:.1}, {:.1}] us",
            c.clock_setting.number(),
            us(lo),
            us(hi)
        ));
    }
    let r = run_experiment(&tdma("baseline-setting2.toml")).unwrap();
    let (lo, hi) = range(&r.wc.iter().map(|w| w.w_c.as_ns()).collect::<Vec<_>>());
    let span = (hi - lo) as f64 / F as f64;
    ok &= span >= BASELINE2_SPAN;
    parts.push(format!("baseline-2 spans {:.3} F", span));
    (ok, parts.join("; "))
}

fn baseline_average() -> (bool, String) {
    let base = tdma("baseline-setting1.toml");
    let per_run: Vec<f64> = (1..=BASELINE1_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let mut c = base.clone();
            c.seed = seed;
            c.num_frames = 200;
            let r = run_experiment(&c).unwrap();
            r.wc.iter().map(|w| w.w_c.as_f64_ns()).sum::<f64>() / r.wc.len() as f64
        })
        .collect();
    let mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
    let rel = (mean - F as f64 / 2.0).abs() / (F as f64 / 2.0);
    (
        rel <= BASELINE1_REL_TOL && per_run.len() as u64 >= BASELINE1_MIN_SEEDS,
        format!(
            "mean W_c {:.1} us over {} seeds ({:.2}% off F/2)",
            mean / 1e3,
            per_run.len(),
            rel * 100.0
        ),
    )
}

fn buffer_behavior() -> (bool, String) {
    let mut parts = Vec::new();
    let mut jit_ok = true;
    for name in [
        "table1-jit.toml",
        "table1-jit-setting2.toml",
        "table1-jit-setting3.toml",
    ] {
        let r = run_experiment(&tdma(name)).unwrap();
        jit_ok &= r.occupancy.iter().skip(WARMUP).all(|o| o.occupancy == 1);
    }
    parts.push(format!("jit occupancy always 1: {jit_ok}"));

    let c2 = tdma("baseline-setting2.toml");
    let r2 = run_experiment(&c2).unwrap();
    let occ: BTreeSet<usize> = r2.occupancy.iter().map(|o| o.occupancy).collect();
    let alternates = occ == BTreeSet::from([0, 1]) && r2.counters.client_underflows > 0;
    parts.push(format!(
        "baseline-2 occupancy values {occ:?}, {} underflows in {} frames at {} ppm",
        r2.counters.client_underflows, c2.num_frames, c2.drift_ppm
    ));
    let mut stated = c2.clone();
    stated.drift_ppm = STATED_DRIFT_PPM;
    let rs = run_experiment(&stated).unwrap();
    let rate_ok = rs.counters.client_underflows * UNDERFLOW_EVERY >= stated.num_frames;
    parts.push(format!(
        "{} underflows in {} frames at {} ppm (need 1 per {UNDERFLOW_EVERY})",
        rs.counters.client_underflows, stated.num_frames, STATED_DRIFT_PPM
    ));

    let c3 = tdma("baseline-setting3.toml");
    let r3 = run_experiment(&c3).unwrap();
    let monotone = r3
        .occupancy
        .windows(2)
        .all(|w| w[1].occupancy >= w[0].occupancy);
    let full = r3.occupancy.iter().map(|o| o.occupancy).max() == Some(c3.fifo_capacity);
    parts.push(format!(
        "baseline-3 monotone {monotone}, reaches capacity {full}, overflow at frame {}",
        r3.occupancy.len()
    ));
    (
        jit_ok && alternates && rate_ok && monotone && full && r3.partial(),
        parts.join("; "),
    )
}

fn worst_case_bound() -> (bool, String) {
    let r = run_experiment(&tdma("worst-case.toml")).unwrap();
    let worst = r
        .traces
        .iter()
        .map(|t| (t.w_c() + t.w_s()).as_ns())
        .max()
        .unwrap();
    (
        (worst - 2 * F).abs() <= SLOT,
        format!(
            "max W_c + W_s = {:.1} us vs 2F = {:.1} us",
            us(worst),
            us(2 * F)
        ),
    )
}

fn packing_correctness() -> (bool, String) {
    let t = Instant::now();
    let mut cases = 0;
    let mut bad = Vec::new();
    for n in (2..=20).step_by(2) {
        let ring = RingConfig::new(n, Nanos::from_us(150)).unwrap();
        for beta in 1..n {
            cases += 1;
            let oracle = brute_force_packing(n, beta).is_some();
            let verdict = packing_feasible(beta, &ring).unwrap().feasible;
            let built = match construct_optimal_packing(beta, &ring, PackingOrder::ClientFirst) {
                Ok(a) => {
                    let slots: BTreeSet<usize> = a
                        .pairs
                        .iter()
                        .flat_map(|p| [p.client_slot, p.server_slot])
                        .collect();
                    a.distances(&ring).iter().all(|&d| d == beta)
                        && slots.len() == 2 * a.len()
                        && a.len() == n / 2
                }
                Err(_) => false,
            };
            if verdict != oracle || (verdict && !built) {
                bad.push(format!("N={n} beta={beta}"));
            }
        }
    }
    let took = t.elapsed();
    (
        bad.is_empty() && took < PACKING_MAX_RUNTIME,
        format!("{cases} (N, beta) cases in {took:.2?}, mismatches {bad:?}"),
    )
}

fn power_of_two() -> (bool, String) {
    let mut bad = Vec::new();
    for n in (2..=64).step_by(2) {
        let ring = RingConfig::new(n, Nanos::from_us(150)).unwrap();
        let oracle = (1..n).all(|b| brute_force_packing(n, b).is_some());
        if all_betas_feasible(&ring) != n.is_power_of_two() || oracle != n.is_power_of_two() {
            bad.push(n);
        }
    }
    (
        bad.is_empty(),
        format!("even N up to 64, odd N pack nothing; mismatches {bad:?}"),
    )
}

fn ten_slot_packing() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let o = jitnet(&["allocate", "--n", "10", "--beta", "3"], tmp.path());
    let got: BTreeSet<(usize, usize)> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<usize> = l.split(',').filter_map(|x| x.parse().ok()).collect();
            (f.len() == 5).then(|| (f[1], f[2]))
        })
        .collect();
    let want = BTreeSet::from([(0, 3), (6, 9), (2, 5), (8, 1), (4, 7)]);
    (o.status.success() && got == want, format!("pairs {got:?}"))
}

fn controller_stability() -> (bool, String) {
    let poles_ok = (1..=10_000).all(|k| {
        let alpha = k as f64 / 10_000.0;
        let (p, q) = controller_poles(alpha).unwrap();
        let m = (1.0 - alpha).sqrt();
        (p.norm() - m).abs() <= POLE_TOL && (q.norm() - m).abs() <= POLE_TOL
    });

    let mut c = tdma("table1-jit-setting3.toml");
    c.alpha = 0.3;
    c.drift_ppm = 208.333_333; // 2 us of offset per 9.6 ms frame
    c.num_frames = 5_000;
    c.client_delay = PreemptionModel::fixed(c.client_delay.base_delay);
    let r = run_experiment(&c).unwrap();
    let tail: Vec<f64> = r
        .telemetry
        .iter()
        .skip(1_000)
        .map(|t| t.slack_ns as f64)
        .collect();
    let worst = tail
        .iter()
        .map(|s| (s - 32_000.0).abs())
        .fold(0.0, f64::max);
    let loop_ok = worst <= CONVERGE_TOL_NS;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let settings = [
        ClockSetting::Same,
        ClockSetting::JitSlow,
        ClockSetting::JitFast,
    ];
    let mut max_res = 0.0f64;
    let mut full = true;
    for k in 0..RECURRENCE_RUNS {
        let mut c = tdma("table1-jit.toml");
        c.clock_setting = settings[rng.gen_range(0..3)];
        c.alpha = rng.gen_range(0.05..=1.0);
        c.drift_ppm = rng.gen_range(1.0..50.0);
        c.client_delay =
            PreemptionModel::uniform(Nanos::from_us(30), Nanos::from_us(rng.gen_range(0..=30)));
        // wide target so no packet leaves the linear regime by missing its slot
        c.st_target_override = Some(Nanos::from_us(500));
        c.num_frames = 3_000;
        c.seed = 1_000 + k;
        let r = run_experiment(&c).unwrap();
        full &= r.telemetry.len() as u64 == c.num_frames && r.counters.overruns == 0;
        max_res = max_res.max(verify_recurrence(&r.telemetry, c.alpha, r.st_target).unwrap());
    }
    (
        poles_ok && loop_ok && full && max_res <= QUANTUM_NS,
        format!(
            "poles ok {poles_ok}; closed loop off 32 us by at most {worst:.1} ns; recurrence residual {max_res:.2e} ns over {RECURRENCE_RUNS} runs"
        ),
    )
}

fn aoi_boundedness() -> (bool, String) {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["table1-jit-setting2.toml", "table1-jit-setting3.toml"] {
        let mut c = tdma(name);
        c.client_delay = PreemptionModel::fixed(c.client_delay.base_delay);
        c.alpha = 0.5;
        let r = run_experiment(&c).unwrap();
        let a: Vec<i64> = aoi_series(&r.traces)
            .iter()
            .skip(500)
            .map(|x| x.as_ns())
            .collect();
        let (lo, hi) = range(&a);
        ok &= hi - lo <= 1;
        parts.push(format!(
            "jitter-free jit-{} AoI [{lo}, {hi}] ns",
            c.clock_setting.number()
        ));
    }
    let c = tdma("table1-jit-setting2.toml");
    let r = run_experiment(&c).unwrap();
    let a: Vec<i64> = aoi_series(&r.traces)
        .iter()
        .skip(WARMUP)
        .map(|x| x.as_ns())
        .collect();
    let (lo, hi) = range(&a);
    ok &= hi - lo <= J + AOI_RIPPLE;
    parts.push(format!("jittered AoI range {:.2} us", us(hi - lo)));
    (ok, parts.join("; "))
}

fn csma_dominance() -> (bool, String) {
    let pairs: Vec<(f64, f64)> = (1..=CSMA_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let p = run_csma(&csma("csma-pull.toml", seed)).unwrap();
            let q = run_csma(&csma("csma-push.toml", seed)).unwrap();
            (p.mean_wait_ns(), q.mean_wait_ns())
        })
        .collect();
    let (pull, push): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (wins, n, p) = paired_sign_test(&pull, &push);
    let mp = pull.iter().sum::<f64>() / pull.len() as f64;
    let mq = push.iter().sum::<f64>() / push.len() as f64;
    (
        CSMA_SEEDS >= CSMA_MIN_SEEDS && mp <= mq && p < SIGN_LEVEL,
        format!(
            "mean wait pull {:.1} us vs push {:.1} us; pull lower in {wins}/{n} seeds, p = {p:.2e}",
            mp / 1e3,
            mq / 1e3
        ),
    )
}

const TRACE_FILES: &[&str] = &[
    "trace.csv",
    "occupancy.csv",
    "telemetry.csv",
    "waits.csv",
    "server_waits.csv",
];

fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    let mut differing = Vec::new();
    let mut compared = 0;
    for path in &names {
        let m = load(path.file_name().unwrap().to_str().unwrap());
        let mut dirs = Vec::new();
        for run in ["a", "b"] {
            let root = tmp.path().join(run);
            let o = jitnet(&["simulate", path.to_str().unwrap()], &root);
            assert!(matches!(o.status.code(), Some(0 | 2)), "{}", path.display());
            dirs.push(root.join(m.output_dir()));
        }
        for f in TRACE_FILES {
            let (x, y) = (dirs[0].join(f), dirs[1].join(f));
            if x.exists() || y.exists() {
                compared += 1;
                if !same_bytes(&x, &y) {
                    differing.push(format!("{}/{f}", m.name));
                }
            }
        }
    }
    (
        differing.is_empty() && compared > 0,
        format!(
            "{} scenarios, {compared} trace files compared, differing {differing:?}",
            names.len()
        ),
    )
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    matches!((fs::read(a), fs::read(b)), (Ok(x), Ok(y)) if x == y)
}

fn main() {
    let checks: [(u32, &'static str, Check); 12] = [
        (1, "RTT reproduction", rtt_reproduction),
        (2, "slack regulation", slack_regulation),
        (3, "baseline-1 average wait", baseline_average),
        (4, "buffer behavior", buffer_behavior),
        (5, "worst-case bound", worst_case_bound),
        (6, "packing correctness", packing_correctness),
        (7, "power-of-two characterization", power_of_two),
        (8, "ten-slot packing instance", ten_slot_packing),
        (9, "controller stability", controller_stability),
        (10, "AoI boundedness", aoi_boundedness),
        (11, "CSMA dominance", csma_dominance),
        (12, "determinism", determinism),
    ];
    let outcomes: Vec<Outcome> = checks
        .iter()
        .map(|&(id, title, f)| {
            let (pass, detail) = f();
            Outcome {
                id,
                title,
                pass,
                detail,
            }
        })
        .collect();

    let mut unexpected = 0;
    for o in &outcomes {
        let known = KNOWN_FAILING.contains(&o.id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} {:>2} {}: {}", o.id, o.title, o.detail);
        if o.pass == known {
            unexpected += 1;
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria pass", outcomes.len());
    if unexpected > 0 {
        eprintln!("{unexpected} criteria differ from the expected outcome");
        std::process::exit(1);
    }
}

//! The `jitnet` command line.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::allocator::{
    beta_from_delay, construct_optimal_packing, multi_slot_assignment, packing_feasible,
    solve_general_allocation, PackingOrder, PairRequirement, RingConfig, SlotAllocation,
    EXACT_WORK_BOUND,
};
use crate::analyzer::{
    detect_convergence, emit_figure_data, write_figure_csv, Figure, RunData, RunSummary,
    DEFAULT_TOLERANCE, DEFAULT_WINDOW, OCCUPANCY_FILE, SERVER_WAITS_FILE, SUMMARY_FILE,
    TELEMETRY_FILE, TRACE_FILE, WAITS_FILE,
};
use crate::csma::{run_csma, CsmaScenario};
use crate::manifest::{Experiment, Manifest};
use crate::stats::summarize;
use crate::tdma::{
    run_experiment, write_rows_with_header, ExperimentConfig, TraceRow, OCCUPANCY_HEADER,
    TELEMETRY_HEADER, TRACE_HEADER,
};
use crate::time::Nanos;

pub const OUTPUT_ROOT_ENV: &str = "JITNET_OUTPUT_ROOT";
pub const MANIFEST_COPY: &str = "manifest.toml";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "jitnet",
    version,
    about = "TDMA/CSMA request-response simulator with JIT packet generation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a manifest.
    Simulate(SimulateArgs),
    /// Compute time-slot allocations.
    Allocate(AllocateArgs),
    /// Emit figure data from a run directory.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub manifest: PathBuf,
    /// Seed range `A..B` (exclusive end) or `A..=B`; one output directory per seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output root; overrides the environment variable and the default `runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    /// Slots per frame.
    #[arg(long = "n")]
    pub n: usize,
    /// Separation(s): `3`, `2,5,9` or the inclusive range `1..63`.
    #[arg(long)]
    pub beta: Option<String>,
    /// Server processing delays, e.g. `30us,500us`; converted with `--slot`.
    #[arg(long, value_delimiter = ',')]
    pub server_delay: Vec<Nanos>,
    #[arg(long, default_value = "150us")]
    pub slot: Nanos,
    /// Report packing feasibility for every listed beta.
    #[arg(long)]
    pub check_all: bool,
    /// Only emit the first P pairs of an equal-beta packing.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Slot pairs per frame for one logical pair.
    #[arg(long)]
    pub interactions: Option<usize>,
    #[arg(long)]
    pub server_first: bool,
    #[arg(long, default_value_t = EXACT_WORK_BOUND)]
    pub work_bound: f64,
    /// Write the allocation CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub run_dir: PathBuf,
    #[arg(long)]
    pub figure: Figure,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Output CSV; defaults to `<run_dir>/<figure>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Allocate(a) => cmd_allocate(&a),
        Command::Analyze(a) => cmd_analyze(&a),
    }
}

fn parse_seeds(spec: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..=") {
        let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (a <= b).then(|| (a..=b).collect());
    }
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (a < b).then(|| (a..b).collect());
    }
    spec.trim().parse().ok().map(|s| vec![s])
}

fn output_root(cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn us(ns: f64) -> f64 {
    ns / 1e3
}

pub fn cmd_simulate(a: &SimulateArgs) -> i32 {
    let text = match fs::read_to_string(&a.manifest) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", a.manifest.display());
            return EXIT_CONFIG;
        }
    };
    let manifest = match Manifest::parse(&text) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("config error in {}: {e}", a.manifest.display());
            return EXIT_CONFIG;
        }
    };
    let (seeds, fan_out) = match &a.seeds {
        None => (vec![manifest.seed], false),
        Some(spec) => match parse_seeds(spec) {
            Some(s) => (s, true),
            None => {
                eprintln!("error: bad --seeds `{spec}` (expected A..B or A..=B)");
                return EXIT_CONFIG;
            }
        },
    };
    let mut experiments = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        match manifest.experiment(seed) {
            Ok(Experiment::Tdma(cfg)) => match cfg.validate() {
                Ok(()) => experiments.push((seed, Experiment::Tdma(cfg))),
                Err(e) => {
                    eprintln!("config error in {}: {e}", a.manifest.display());
                    return EXIT_CONFIG;
                }
            },
            Ok(Experiment::Csma(sc)) => match sc.validate() {
                Ok(()) => experiments.push((seed, Experiment::Csma(sc))),
                Err(e) => {
                    eprintln!("config error in {}: {e}", a.manifest.display());
                    return EXIT_CONFIG;
                }
            },
            Err(e) => {
                eprintln!("config error in {}: {e}", a.manifest.display());
                return EXIT_CONFIG;
            }
        }
    }
    let base = output_root(a.out.as_deref()).join(manifest.output_dir());
    let outcomes: Vec<(u64, PathBuf, Result<RunSummary, String>)> = experiments
        .par_iter()
        .map(|(seed, exp)| {
            let dir = if fan_out {
                base.join(format!("seed-{seed}"))
            } else {
                base.clone()
            };
            let outcome = run_one(&manifest, &text, exp, *seed, &dir);
            (*seed, dir, outcome)
        })
        .collect();

    let mut code = EXIT_OK;
    for (seed, dir, outcome) in outcomes {
        match outcome {
            Ok(s) => {
                print_summary(&s, &dir);
                if s.partial {
                    code = code.max(EXIT_INFEASIBLE);
                }
            }
            Err(msg) => {
                eprintln!("seed {seed}: {msg}");
                code = code.max(EXIT_CONFIG);
            }
        }
    }
    code
}

fn run_one(
    manifest: &Manifest,
    text: &str,
    exp: &Experiment,
    seed: u64,
    dir: &Path,
) -> Result<RunSummary, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    fs::write(dir.join(MANIFEST_COPY), text).map_err(|e| e.to_string())?;
    let summary = match exp {
        Experiment::Tdma(cfg) => write_tdma(manifest, cfg, seed, dir)?,
        Experiment::Csma(sc) => write_csma(manifest, sc, dir)?,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    fs::write(dir.join(SUMMARY_FILE), json + "\n").map_err(|e| e.to_string())?;
    Ok(summary)
}

fn csv_file<T: Serialize>(
    dir: &Path,
    name: &str,
    rows: &[T],
    header: &[&str],
) -> Result<(), String> {
    let f = fs::File::create(dir.join(name)).map_err(|e| e.to_string())?;
    write_rows_with_header(rows, header, BufWriter::new(f)).map_err(|e| e.to_string())
}

fn write_tdma(
    manifest: &Manifest,
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
) -> Result<RunSummary, String> {
    let r = run_experiment(cfg).map_err(|e| e.to_string())?;
    let rows: Vec<TraceRow> = r.traces.iter().map(TraceRow::from).collect();
    csv_file(dir, TRACE_FILE, &rows, TRACE_HEADER)?;
    csv_file(dir, OCCUPANCY_FILE, &r.occupancy, OCCUPANCY_HEADER)?;
    if !r.telemetry.is_empty() {
        csv_file(dir, TELEMETRY_FILE, &r.telemetry, TELEMETRY_HEADER)?;
    }
    let warmup = manifest.output.warmup_frames.min(cfg.num_frames / 2);
    Ok(RunSummary::tdma(
        &manifest.name,
        cfg.mode,
        cfg.clock_setting,
        seed,
        cfg.num_frames,
        warmup,
        &r,
    ))
}

#[derive(Serialize)]
struct WaitRow<'a> {
    packet_index: usize,
    mode: &'a str,
    wait_ns: i64,
}

fn write_csma(manifest: &Manifest, sc: &CsmaScenario, dir: &Path) -> Result<RunSummary, String> {
    let r = run_csma(sc).map_err(|e| e.to_string())?;
    let header = &["packet_index", "mode", "wait_ns"];
    let rows = |v: &[Nanos]| -> Vec<WaitRow<'static>> {
        v.iter()
            .enumerate()
            .map(|(i, w)| WaitRow {
                packet_index: i,
                mode: sc.mode.label(),
                wait_ns: w.as_ns(),
            })
            .collect()
    };
    csv_file(dir, WAITS_FILE, &rows(&r.waits), header)?;
    if sc.server.is_some() {
        csv_file(dir, SERVER_WAITS_FILE, &rows(&r.server_waits), header)?;
    }
    let f = |v: &[Nanos]| summarize(&v.iter().map(|w| w.as_f64_ns()).collect::<Vec<_>>());
    Ok(RunSummary {
        name: manifest.name.clone(),
        mode: sc.mode.label().to_string(),
        clock_setting: None,
        seed: sc.seed,
        num_frames: None,
        st_target_ns: None,
        warmup_frames: 0,
        partial: false,
        overflow_at_ns: None,
        counters: None,
        rtt_ns: None,
        w_c_ns: None,
        csma_wait_ns: f(&r.waits),
        csma_server_wait_ns: f(&r.server_waits),
    })
}

fn print_summary(s: &RunSummary, dir: &Path) {
    println!(
        "{} [{}] seed {} -> {}",
        s.name,
        s.series_label(),
        s.seed,
        dir.display()
    );
    if let Some(rtt) = &s.rtt_ns {
        println!(
            "  RTT us: mean {:.1} min {:.1} max {:.1} p99 {:.1} ({} exchanges)",
            us(rtt.mean),
            us(rtt.min),
            us(rtt.max),
            us(rtt.p99),
            rtt.count
        );
    }
    if let Some(w) = &s.w_c_ns {
        println!("  W_c us: mean {:.1} max {:.1}", us(w.mean), us(w.max));
    }
    if let Some(c) = &s.counters {
        println!(
            "  underflows {} overflows {} overruns {}",
            c.client_underflows, c.overflows, c.overruns
        );
    }
    if let Some(w) = &s.csma_wait_ns {
        println!(
            "  MAC wait us: mean {:.1} max {:.1} ({} packets)",
            us(w.mean),
            us(w.max),
            w.count
        );
    }
    if let Some(w) = &s.csma_server_wait_ns {
        println!(
            "  server MAC wait us: mean {:.1} max {:.1}",
            us(w.mean),
            us(w.max)
        );
    }
    if s.partial {
        println!(
            "  FIFO overflow at {:.3} ms: run terminated, outputs are partial",
            s.overflow_at_ns.unwrap_or(0) as f64 / 1e6
        );
    }
}

fn parse_betas(spec: &str) -> Option<Vec<usize>> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().ok()?;
        let b: usize = b.trim_start_matches('=').trim().parse().ok()?;
        return (a <= b).then(|| (a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().ok()).collect()
}

pub fn cmd_allocate(a: &AllocateArgs) -> i32 {
    let ring = match RingConfig::new(a.n, a.slot) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let reqs: Vec<PairRequirement> = match (&a.beta, a.server_delay.is_empty()) {
        (Some(spec), true) => match parse_betas(spec) {
            Some(b) if !b.is_empty() => b
                .iter()
                .enumerate()
                .map(|(j, &beta)| PairRequirement::from_beta_raw(j, beta, &ring))
                .collect(),
            _ => {
                eprintln!("error: bad --beta `{spec}`");
                return EXIT_CONFIG;
            }
        },
        (None, false) => {
            let mut v = Vec::new();
            for (j, &d) in a.server_delay.iter().enumerate() {
                match beta_from_delay(j, d, &ring) {
                    Ok(r) => v.push(r),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_CONFIG;
                    }
                }
            }
            v
        }
        _ => {
            eprintln!("error: give exactly one of --beta or --server-delay");
            return EXIT_CONFIG;
        }
    };
    let order = if a.server_first {
        PackingOrder::ServerFirst
    } else {
        PackingOrder::ClientFirst
    };
    let stdout = io::stdout();

    if a.check_all {
        let mut all = true;
        for r in &reqs {
            match packing_feasible(r.beta, &ring) {
                Ok(v) => {
                    all &= v.feasible;
                    println!(
                        "N={} beta={} k={} {}",
                        a.n,
                        r.beta,
                        v.period,
                        if v.feasible {
                            "feasible"
                        } else {
                            "infeasible (k odd)"
                        }
                    );
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            }
        }
        println!(
            "{} of {} betas admit an optimal packing",
            reqs.iter()
                .filter(|r| packing_feasible(r.beta, &ring).is_ok_and(|v| v.feasible))
                .count(),
            reqs.len()
        );
        return if all { EXIT_OK } else { EXIT_INFEASIBLE };
    }

    let emit = |alloc: &SlotAllocation, reqs: &[PairRequirement]| -> i32 {
        let res = match &a.csv {
            Some(p) => fs::File::create(p)
                .map_err(|e| e.to_string())
                .and_then(|f| alloc.write_csv(&ring, reqs, f).map_err(|e| e.to_string())),
            None => alloc
                .write_csv(&ring, reqs, stdout.lock())
                .map_err(|e| e.to_string()),
        };
        match res {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        }
    };

    if reqs.len() == 1 {
        let req = reqs[0];
        if let Some(m) = a.interactions {
            return match multi_slot_assignment(&req, &ring, m) {
                Ok(pairs) => {
                    eprintln!("{m} interactions per frame, beta={}", req.beta);
                    let reqs = vec![req; pairs.len()];
                    emit(&SlotAllocation::new(pairs), &reqs)
                }
                Err(e) => {
                    eprintln!("infeasible: {e}");
                    EXIT_INFEASIBLE
                }
            };
        }
        let verdict = match packing_feasible(req.beta, &ring) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        if !verdict.feasible {
            eprintln!(
                "N={} beta={}: infeasible, subring period k={} is odd so no optimal packing exists",
                a.n, req.beta, verdict.period
            );
            return EXIT_INFEASIBLE;
        }
        eprintln!(
            "N={} beta={}: feasible, subring period k={} ({} subrings)",
            a.n,
            req.beta,
            verdict.period,
            a.n / verdict.period
        );
        let mut alloc = match construct_optimal_packing(req.beta, &ring, order) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("infeasible: {e}");
                return EXIT_INFEASIBLE;
            }
        };
        if let Some(p) = a.pairs {
            alloc.pairs.truncate(p);
        }
        let reqs: Vec<PairRequirement> = (0..alloc.len())
            .map(|j| PairRequirement { pair_id: j, ..req })
            .collect();
        return emit(&alloc, &reqs);
    }

    match solve_general_allocation(&reqs, &ring, a.work_bound) {
        Ok(sol) => {
            eprintln!(
                "N={} {} pairs: total distance {} ({})",
                a.n,
                reqs.len(),
                sol.total_distance,
                if sol.exact { "exact" } else { "heuristic" }
            );
            emit(&sol.allocation, &reqs)
        }
        Err(e) => {
            eprintln!("infeasible: {e}");
            EXIT_INFEASIBLE
        }
    }
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> i32 {
    let run = match RunData::load(&a.run_dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let points = match emit_figure_data(&run, a.figure, a.stride) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.run_dir.join(format!("{}.csv", a.figure)));
    let written = fs::File::create(&out)
        .map_err(|e| e.to_string())
        .and_then(|f| write_figure_csv(&points, BufWriter::new(f)).map_err(|e| e.to_string()));
    if let Err(e) = written {
        eprintln!("error: writing {}: {e}", out.display());
        return EXIT_CONFIG;
    }
    println!("{} points -> {}", points.len(), out.display());
    report_convergence(&run, a.figure, &mut io::stdout().lock());
    EXIT_OK
}

fn report_convergence<W: Write>(run: &RunData, figure: Figure, w: &mut W) {
    let (series, tol, unit): (Vec<f64>, f64, &str) = match figure {
        Figure::Fig8 => (
            run.occupancy.iter().map(|o| o.occupancy as f64).collect(),
            0.5,
            "packets",
        ),
        Figure::Fig9a | Figure::Fig9b => (
            run.traces.iter().map(|t| t.w_c().as_f64_ns()).collect(),
            DEFAULT_TOLERANCE.as_f64_ns(),
            "ns",
        ),
        Figure::Fig10 => (
            run.traces.iter().map(|t| t.rtt().as_f64_ns()).collect(),
            DEFAULT_TOLERANCE.as_f64_ns(),
            "ns",
        ),
    };
    let _ = match detect_convergence(&series, tol, DEFAULT_WINDOW) {
        Ok(s) => writeln!(
            w,
            "{}: steady state from sample {} of {}, mean {:.1} {unit}",
            run.summary.series_label(),
            s.start_frame,
            s.end_frame,
            s.mean
        ),
        Err(e) => writeln!(w, "no convergence: {e}"),
    };
}

//! Post-processing of simulator output: figure series, steady-state
//! detection and an independent check of the slack recurrence.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clock::ClockSetting;
use crate::stats::{summarize, Summary};
use crate::tdma::{
    read_rows, ExchangeTrace, Mode, OccupancySample, RunCounters, RunResult, TelemetryRow,
    TraceError, TraceRow,
};
use crate::time::Nanos;

pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const OCCUPANCY_FILE: &str = "occupancy.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const WAITS_FILE: &str = "waits.csv";
pub const SERVER_WAITS_FILE: &str = "server_waits.csv";

pub const DEFAULT_WINDOW: usize = 200;
pub const DEFAULT_TOLERANCE: Nanos = Nanos::from_us(2);

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("telemetry is empty")]
    NoTelemetry,
    #[error("telemetry packet {got} follows packet {prev}")]
    TelemetryGap { prev: u64, got: u64 },
    #[error("{figure} needs a {needed} run, this one is {found}")]
    WrongMode {
        figure: Figure,
        needed: &'static str,
        found: String,
    },
    #[error("series of length {len} is shorter than two windows of {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("no window of {window} samples stays within +-{tolerance} of the tail mean")]
    NoConvergence { window: usize, tolerance: f64 },
    #[error("missing run artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
    #[error("{path}: {msg}")]
    Summary { path: PathBuf, msg: String },
    #[error("unknown figure `{0}` (expected fig8, fig9a, fig9b or fig10)")]
    UnknownFigure(String),
    #[error("writing figure data: {0}")]
    Write(String),
}

/// Iterates the slack-deviation difference equation
///
/// ```text
/// y_1 = x_1 + (1-a) y_0
/// y_i = x_i + (1-a) y_{i-1} - a * sum_{j=0}^{i-2} (1-a)^{i-j-1} y_j
/// ```
///
/// returning `y_0..y_n`. The sum is carried as `S_{i+1} = (1-a)(S_i + y_{i-1})`.
pub fn iterate_recurrence(y0: f64, xs: &[f64], alpha: f64) -> Vec<f64> {
    let b = 1.0 - alpha;
    let mut ys = Vec::with_capacity(xs.len() + 1);
    ys.push(y0);
    let mut s = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let i = k + 1;
        if i >= 2 {
            s = b * (s + ys[i - 2]);
        }
        let y = x + b * ys[i - 1] - alpha * s;
        ys.push(y);
    }
    ys
}

/// Largest `|y_i - (ST_i - target)|` between the recorded slack and the
/// recurrence driven by the recorded offsets and processing delays.
pub fn verify_recurrence(
    telemetry: &[TelemetryRow],
    alpha: f64,
    st_target: Nanos,
) -> Result<f64, AnalyzeError> {
    let first = telemetry.first().ok_or(AnalyzeError::NoTelemetry)?;
    for w in telemetry.windows(2) {
        if w[1].packet != w[0].packet + 1 {
            return Err(AnalyzeError::TelemetryGap {
                prev: w[0].packet,
                got: w[1].packet,
            });
        }
    }
    let target = st_target.as_f64_ns();
    let xs: Vec<f64> = telemetry
        .windows(2)
        .map(|w| (w[1].offset_ns - w[0].offset_ns) - (w[1].d_c_ns - w[0].d_c_ns) as f64)
        .collect();
    let ys = iterate_recurrence(first.slack_ns as f64 - target, &xs, alpha);
    Ok(telemetry
        .iter()
        .zip(&ys)
        .map(|(r, y)| (y - (r.slack_ns as f64 - target)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateWindow {
    pub start_frame: usize,
    pub end_frame: usize,
    pub window: usize,
    pub tolerance: f64,
    pub mean: f64,
}

/// Earliest start from which every full block of `window` samples has its
/// mean within `tolerance` of the mean of the remaining series. At least two
/// full blocks are required.
pub fn detect_convergence(
    series: &[f64],
    tolerance: f64,
    window: usize,
) -> Result<SteadyStateWindow, AnalyzeError> {
    let n = series.len();
    let window = window.max(1);
    if n < 2 * window {
        return Err(AnalyzeError::SeriesTooShort { len: n, window });
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0f64);
    for v in series {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    let range_mean = |a: usize, b: usize| (prefix[b] - prefix[a]) / (b - a) as f64;
    for start in 0..=n - 2 * window {
        let tail = range_mean(start, n);
        let blocks = (n - start) / window;
        let ok = (0..blocks).all(|b| {
            let a = start + b * window;
            (range_mean(a, a + window) - tail).abs() <= tolerance
        });
        if ok {
            return Ok(SteadyStateWindow {
                start_frame: start,
                end_frame: n,
                window,
                tolerance,
                mean: tail,
            });
        }
    }
    Err(AnalyzeError::NoConvergence { window, tolerance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig8,
    Fig9a,
    Fig9b,
    Fig10,
}

impl Figure {
    pub fn default_stride(self) -> usize {
        match self {
            Figure::Fig9b => 1,
            _ => 100,
        }
    }
}

impl std::fmt::Display for Figure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Figure::Fig8 => "fig8",
            Figure::Fig9a => "fig9a",
            Figure::Fig9b => "fig9b",
            Figure::Fig10 => "fig10",
        })
    }
}

impl FromStr for Figure {
    type Err = AnalyzeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig8" => Ok(Figure::Fig8),
            "fig9a" => Ok(Figure::Fig9a),
            "fig9b" => Ok(Figure::Fig9b),
            "fig10" => Ok(Figure::Fig10),
            other => Err(AnalyzeError::UnknownFigure(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigurePoint {
    pub x: u64,
    pub series_label: String,
    pub y: i64,
}

/// Run summary written next to the traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub clock_setting: Option<u8>,
    pub seed: u64,
    pub num_frames: Option<u64>,
    pub st_target_ns: Option<i64>,
    pub warmup_frames: u64,
    pub partial: bool,
    pub overflow_at_ns: Option<i64>,
    pub counters: Option<RunCounters>,
    pub rtt_ns: Option<Summary>,
    pub w_c_ns: Option<Summary>,
    pub csma_wait_ns: Option<Summary>,
    pub csma_server_wait_ns: Option<Summary>,
}

impl RunSummary {
    /// Mode plus clock setting, e.g. `jit-2` or `baseline-3`.
    pub fn series_label(&self) -> String {
        match self.clock_setting {
            Some(s) => format!("{}-{}", self.mode, s),
            None => self.mode.clone(),
        }
    }

    pub fn tdma(
        name: &str,
        mode: Mode,
        setting: ClockSetting,
        seed: u64,
        num_frames: u64,
        warmup_frames: u64,
        r: &RunResult,
    ) -> Self {
        let steady = |f: &dyn Fn(&ExchangeTrace) -> Nanos| {
            let v: Vec<f64> = r
                .traces
                .iter()
                .filter(|t| t.frame_index >= warmup_frames)
                .map(|t| f(t).as_f64_ns())
                .collect();
            summarize(&v)
        };
        let w_c: Vec<f64> =
            r.wc.iter()
                .filter(|s| s.frame >= warmup_frames)
                .map(|s| s.w_c.as_f64_ns())
                .collect();
        RunSummary {
            name: name.to_string(),
            mode: mode_label(mode).to_string(),
            clock_setting: Some(setting.number()),
            seed,
            num_frames: Some(num_frames),
            st_target_ns: (mode == Mode::Jit).then_some(r.st_target.as_ns()),
            warmup_frames,
            partial: r.partial(),
            overflow_at_ns: r.overflow_at.map(Nanos::as_ns),
            counters: Some(r.counters),
            rtt_ns: steady(&ExchangeTrace::rtt),
            w_c_ns: summarize(&w_c),
            csma_wait_ns: None,
            csma_server_wait_ns: None,
        }
    }
}

pub fn mode_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Jit => "jit",
        Mode::Baseline => "baseline",
    }
}

/// Artifacts of one TDMA run directory.
#[derive(Debug, Clone)]
pub struct RunData {
    pub summary: RunSummary,
    pub traces: Vec<ExchangeTrace>,
    pub occupancy: Vec<OccupancySample>,
    pub telemetry: Vec<TelemetryRow>,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AnalyzeError> {
    let f = File::open(path).map_err(|_| AnalyzeError::MissingArtifact(path.to_path_buf()))?;
    read_rows(BufReader::new(f)).map_err(|source| AnalyzeError::Read {
        path: path.to_path_buf(),
        source,
    })
}

impl RunData {
    pub fn load(dir: &Path) -> Result<Self, AnalyzeError> {
        let sp = dir.join(SUMMARY_FILE);
        let text =
            std::fs::read_to_string(&sp).map_err(|_| AnalyzeError::MissingArtifact(sp.clone()))?;
        let summary: RunSummary =
            serde_json::from_str(&text).map_err(|e| AnalyzeError::Summary {
                path: sp,
                msg: e.to_string(),
            })?;
        let rows: Vec<TraceRow> = read_csv(&dir.join(TRACE_FILE))?;
        let occupancy = read_csv(&dir.join(OCCUPANCY_FILE))?;
        let tp = dir.join(TELEMETRY_FILE);
        let telemetry = if tp.exists() {
            read_csv(&tp)?
        } else {
            Vec::new()
        };
        Ok(Self {
            summary,
            traces: rows.iter().map(ExchangeTrace::from).collect(),
            occupancy,
            telemetry,
        })
    }
}

/// Series for one of the figure selectors, sampled every `stride` frames.
pub fn emit_figure_data(
    run: &RunData,
    figure: Figure,
    stride: Option<usize>,
) -> Result<Vec<FigurePoint>, AnalyzeError> {
    let stride = stride.unwrap_or(figure.default_stride()).max(1) as u64;
    let label = run.summary.series_label();
    if figure == Figure::Fig9b && run.summary.mode != "jit" {
        return Err(AnalyzeError::WrongMode {
            figure,
            needed: "jit",
            found: run.summary.mode.clone(),
        });
    }
    if run.summary.mode != "jit" && run.summary.mode != "baseline" {
        return Err(AnalyzeError::WrongMode {
            figure,
            needed: "tdma",
            found: run.summary.mode.clone(),
        });
    }
    let point = |x: u64, y: i64| FigurePoint {
        x,
        series_label: label.clone(),
        y,
    };
    let out = match figure {
        Figure::Fig8 => run
            .occupancy
            .iter()
            .filter(|o| o.frame % stride == 0)
            .map(|o| point(o.frame, o.occupancy as i64))
            .collect(),
        Figure::Fig9a | Figure::Fig9b => run
            .traces
            .iter()
            .filter(|t| t.frame_index % stride == 0)
            .map(|t| point(t.frame_index, t.w_c().as_ns()))
            .collect(),
        Figure::Fig10 => run
            .traces
            .iter()
            .filter(|t| t.frame_index % stride == 0)
            .map(|t| point(t.frame_index, t.rtt().as_ns()))
            .collect(),
    };
    Ok(out)
}

pub fn write_figure_csv<W: Write>(points: &[FigurePoint], out: W) -> Result<(), AnalyzeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "series_label", "y"])
        .map_err(|e| AnalyzeError::Write(e.to_string()))?;
    for p in points {
        w.write_record([p.x.to_string(), p.series_label.clone(), p.y.to_string()])
            .map_err(|e| AnalyzeError::Write(e.to_string()))?;
    }
    w.flush().map_err(|e| AnalyzeError::Write(e.to_string()))
}

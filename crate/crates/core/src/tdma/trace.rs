//! Per-exchange timestamps and the CSV records the simulator writes.
//!
//! Timestamps follow one request-response cycle: `t0` sensing starts, `t1`
//! the request reaches the MAC, `t2..t5` first/last bit sent and received,
//! `t6` the response is ready, `t7..t10` the same four instants for the
//! response.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::time::Nanos;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("exchange is missing timestamp t{0}")]
    Missing(usize),
    #[error("timestamps out of order at t{0}")]
    OutOfOrder(usize),
    #[error("transmission durations differ between sender and receiver")]
    Asymmetric,
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for TraceError {
    fn from(e: csv::Error) -> Self {
        TraceError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeTrace {
    pub pair_id: usize,
    /// Frame in which the request was transmitted.
    pub frame_index: u64,
    pub t: [Nanos; 11],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RttBreakdown {
    pub d_c: Nanos,
    pub w_c: Nanos,
    pub t_phy_c: Nanos,
    pub d_s: Nanos,
    pub w_s: Nanos,
    pub t_phy_s: Nanos,
}

impl RttBreakdown {
    pub fn sum(&self) -> Nanos {
        self.d_c + self.w_c + self.t_phy_c + self.d_s + self.w_s + self.t_phy_s
    }
}

impl ExchangeTrace {
    pub fn rtt(&self) -> Nanos {
        self.t[10] - self.t[0]
    }

    pub fn d_c(&self) -> Nanos {
        self.t[1] - self.t[0]
    }

    pub fn w_c(&self) -> Nanos {
        self.t[2] - self.t[1]
    }

    pub fn t_phy_c(&self) -> Nanos {
        self.t[5] - self.t[2]
    }

    pub fn d_s(&self) -> Nanos {
        self.t[6] - self.t[5]
    }

    pub fn w_s(&self) -> Nanos {
        self.t[7] - self.t[6]
    }

    pub fn t_phy_s(&self) -> Nanos {
        self.t[10] - self.t[7]
    }

    /// Age of the request's information when it goes on air, `t2 - t0`.
    pub fn aoi(&self) -> Nanos {
        self.t[2] - self.t[0]
    }
}

/// Splits the round trip into its six components after checking event order.
pub fn decompose_rtt(trace: &ExchangeTrace) -> Result<RttBreakdown, TraceError> {
    let t = &trace.t;
    if let Some(k) = (0..10).find(|&k| t[k] > t[k + 1]) {
        return Err(TraceError::OutOfOrder(k));
    }
    if t[5] - t[3] != t[4] - t[2] || t[10] - t[8] != t[9] - t[7] {
        return Err(TraceError::Asymmetric);
    }
    Ok(RttBreakdown {
        d_c: trace.d_c(),
        w_c: trace.w_c(),
        t_phy_c: trace.t_phy_c(),
        d_s: trace.d_s(),
        w_s: trace.w_s(),
        t_phy_s: trace.t_phy_s(),
    })
}

/// Exchange still in flight; missing timestamps are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartialExchange {
    pub pair_id: usize,
    pub frame_index: u64,
    pub t: [Option<Nanos>; 11],
}

impl PartialExchange {
    pub fn complete(&self) -> Result<ExchangeTrace, TraceError> {
        let mut t = [Nanos::ZERO; 11];
        for (k, slot) in self.t.iter().enumerate() {
            t[k] = slot.ok_or(TraceError::Missing(k))?;
        }
        let trace = ExchangeTrace {
            pair_id: self.pair_id,
            frame_index: self.frame_index,
            t,
        };
        decompose_rtt(&trace)?;
        Ok(trace)
    }
}

/// `U^MAC - U^JIT` for every exchange, in reference time.
pub fn aoi_series(traces: &[ExchangeTrace]) -> Vec<Nanos> {
    traces.iter().map(ExchangeTrace::aoi).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub frame: u64,
    pub pair: usize,
    pub t0: i64,
    pub t1: i64,
    pub t2: i64,
    pub t3: i64,
    pub t4: i64,
    pub t5: i64,
    pub t6: i64,
    pub t7: i64,
    pub t8: i64,
    pub t9: i64,
    pub t10: i64,
    pub d_c: i64,
    pub w_c: i64,
    pub t_phy_c: i64,
    pub d_s: i64,
    pub w_s: i64,
    pub t_phy_s: i64,
    pub rtt: i64,
}

impl From<&ExchangeTrace> for TraceRow {
    fn from(e: &ExchangeTrace) -> Self {
        let t = e.t.map(Nanos::as_ns);
        TraceRow {
            frame: e.frame_index,
            pair: e.pair_id,
            t0: t[0],
            t1: t[1],
            t2: t[2],
            t3: t[3],
            t4: t[4],
            t5: t[5],
            t6: t[6],
            t7: t[7],
            t8: t[8],
            t9: t[9],
            t10: t[10],
            d_c: e.d_c().0,
            w_c: e.w_c().0,
            t_phy_c: e.t_phy_c().0,
            d_s: e.d_s().0,
            w_s: e.w_s().0,
            t_phy_s: e.t_phy_s().0,
            rtt: e.rtt().0,
        }
    }
}

impl From<&TraceRow> for ExchangeTrace {
    fn from(r: &TraceRow) -> Self {
        ExchangeTrace {
            pair_id: r.pair,
            frame_index: r.frame,
            t: [
                r.t0, r.t1, r.t2, r.t3, r.t4, r.t5, r.t6, r.t7, r.t8, r.t9, r.t10,
            ]
            .map(Nanos),
        }
    }
}

/// FIFO state seen by the client at one of its transmission opportunities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancySample {
    pub frame: u64,
    pub slot: usize,
    pub occupancy: usize,
    pub underflow_flag: u8,
}

/// Controller state for one pulled packet. Local-clock quantities are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub packet: u64,
    pub pull_local_ns: f64,
    pub pull_ref_ns: i64,
    pub offset_ns: f64,
    pub n_hat_ns: f64,
    pub d_c_ns: i64,
    pub arrival_ns: i64,
    pub scheduled_ns: i64,
    pub slack_ns: i64,
    pub overrun: u8,
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| TraceError::Csv(e.to_string()))
}

/// Header-only CSV when `rows` is empty, so readers can still check columns.
pub fn write_rows_with_header<T: Serialize, W: Write>(
    rows: &[T],
    header: &[&str],
    out: W,
) -> Result<(), TraceError> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        return w.flush().map_err(|e| TraceError::Csv(e.to_string()));
    }
    write_rows(rows, out)
}

pub fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(TraceError::from))
        .collect()
}

pub const TRACE_HEADER: &[&str] = &[
    "frame", "pair", "t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9", "t10", "d_c",
    "w_c", "t_phy_c", "d_s", "w_s", "t_phy_s", "rtt",
];
pub const OCCUPANCY_HEADER: &[&str] = &["frame", "slot", "occupancy", "underflow_flag"];
pub const TELEMETRY_HEADER: &[&str] = &[
    "packet",
    "pull_local_ns",
    "pull_ref_ns",
    "offset_ns",
    "n_hat_ns",
    "d_c_ns",
    "arrival_ns",
    "scheduled_ns",
    "slack_ns",
    "overrun",
];

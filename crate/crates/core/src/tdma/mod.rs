//! Discrete-event TDMA request-response simulator.

mod config;
mod engine;
mod fifo;
mod trace;

pub use config::{
    ConfigError, ExperimentConfig, JitterDistribution, Mode, PreemptionModel, DEFAULT_FIFO_CAPACITY,
};
pub use engine::{
    baseline_wc_series, resolve_st_target, run_experiment, worst_case_wait, RunCounters, RunError,
    RunResult, WcSample,
};
pub use fifo::{FifoBuffer, Overflow};
pub use trace::{
    aoi_series, decompose_rtt, read_rows, write_rows, write_rows_with_header, ExchangeTrace,
    OccupancySample, PartialExchange, RttBreakdown, TelemetryRow, TraceError, TraceRow,
    OCCUPANCY_HEADER, TELEMETRY_HEADER, TRACE_HEADER,
};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig, Mode};
use super::fifo::FifoBuffer;
use super::trace::{ExchangeTrace, OccupancySample, PartialExchange, TelemetryRow};
use crate::clock::{ClockError, VirtualClock};
use crate::controller::{
    compute_slack, estimate_st_target, ControllerError, SlackFeedback, SyncState,
};
use crate::time::Nanos;

const STREAM_CLIENT: u64 = 1;
const STREAM_SERVER: u64 = 2;
const STREAM_TARGET: u64 = 3;
const STREAM_PHASE: u64 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("operation needs a {expected:?}-mode configuration")]
    WrongMode { expected: Mode },
}

/// Client wait of one transmitted request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcSample {
    pub frame: u64,
    pub w_c: Nanos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub packets_generated: u64,
    pub packets_sent: u64,
    pub exchanges_completed: u64,
    pub client_underflows: u64,
    pub overflows: u64,
    pub overruns: u64,
    pub server_idle_slots: u64,
    pub superseded_responses: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub traces: Vec<ExchangeTrace>,
    pub occupancy: Vec<OccupancySample>,
    pub wc: Vec<WcSample>,
    /// JIT mode only: one row per pulled packet.
    pub telemetry: Vec<TelemetryRow>,
    pub st_target: Nanos,
    pub counters: RunCounters,
    /// Set when a FIFO overflow ended the run early.
    pub overflow_at: Option<Nanos>,
}

impl RunResult {
    pub fn partial(&self) -> bool {
        self.overflow_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Pull,
    Arrival,
    ResponseReady,
    ClientSlot,
    ServerSlot,
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Generate { packet: u64 },
    Arrival { packet: Packet },
    ResponseReady { ex: PartialExchange },
    ClientSlot { frame: u64 },
    ServerSlot { frame: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    index: u64,
    t0: Nanos,
    t1: Nanos,
}

#[derive(Debug)]
struct Event {
    at: Nanos,
    kind: Kind,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.kind, other.seq).cmp(&(self.at, self.kind, self.seq))
    }
}

struct Sim<'a> {
    cfg: &'a ExperimentConfig,
    clock: VirtualClock,
    frame: Nanos,
    horizon: Nanos,
    client_offset: Nanos,
    server_offset: Nanos,
    rng_client: ChaCha8Rng,
    rng_server: ChaCha8Rng,
    queue: BinaryHeap<Event>,
    seq: u64,
    fifo: FifoBuffer<Packet>,
    controller: Option<SyncState>,
    baseline_phase_local: f64,
    server_pending: Option<PartialExchange>,
    server_started: bool,
    /// Telemetry rows whose packet has reached the MAC.
    telemetry_done: usize,
    out: RunResult,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, at: Nanos, kind: Kind, payload: Payload) {
        self.seq += 1;
        self.queue.push(Event {
            at,
            kind,
            seq: self.seq,
            payload,
        });
    }

    fn pair_id(&self) -> usize {
        0
    }

    /// Start of the first client slot at or after `t`.
    fn next_client_slot(&self, t: Nanos) -> Nanos {
        let rel = t - self.client_offset;
        let f = self.frame.as_ns();
        let k = if rel.as_ns() <= 0 {
            0
        } else {
            (rel.as_ns() + f - 1) / f
        };
        self.frame * k + self.client_offset
    }

    fn generate(&mut self, now: Nanos, packet: u64) {
        let d_c = self.cfg.client_delay.sample(&mut self.rng_client);
        let p = Packet {
            index: packet,
            t0: now,
            t1: now + d_c,
        };
        self.out.counters.packets_generated += 1;
        if let Some(row) = self.out.telemetry.get_mut(packet as usize) {
            row.d_c_ns = d_c.as_ns();
            row.arrival_ns = p.t1.as_ns();
        }
        self.schedule(p.t1, Kind::Arrival, Payload::Arrival { packet: p });
        if self.cfg.mode == Mode::Baseline {
            let next = packet + 1;
            let local = self.baseline_phase_local + next as f64 * self.frame.as_f64_ns();
            if let Ok(t) = self.clock.reference_at(local) {
                let t = Nanos::from_f64_ns(t);
                if t < self.horizon {
                    self.schedule(t, Kind::Pull, Payload::Generate { packet: next });
                }
            }
        }
    }

    fn arrival(&mut self, now: Nanos, p: Packet) -> bool {
        let ahead = self.fifo.occupancy() as i64;
        let scheduled = self.next_client_slot(now) + self.frame * ahead;
        if self.fifo.push(p).is_err() {
            self.out.counters.overflows += 1;
            self.out.overflow_at = Some(now);
            return false;
        }
        let Some(ctl) = self.controller.as_mut() else {
            return true;
        };
        let slack = compute_slack(scheduled, now);
        if let Some(row) = self.out.telemetry.get_mut(p.index as usize) {
            row.scheduled_ns = scheduled.as_ns();
            row.slack_ns = slack.as_ns();
        }
        self.telemetry_done += 1;
        // Feedback arrives in packet order, so this cannot fail.
        let _ = ctl.update_offset(SlackFeedback {
            packet_index: p.index,
            slack,
        });
        let next_index = ctl.packet_index();
        let now_local = self.clock.local_at(now.as_f64_ns());
        let overrun = ctl.next_pull_time(Some(now_local)).is_err();
        let local = ctl.last_pull_local();
        let n_hat = ctl.n_hat();
        if overrun {
            self.out.counters.overruns += 1;
        }
        let Ok(t_ref) = self.clock.reference_at(local) else {
            return true;
        };
        let u = Nanos::from_f64_ns(t_ref).max(now);
        if u >= self.horizon {
            return true;
        }
        self.out.telemetry.push(TelemetryRow {
            packet: next_index,
            pull_local_ns: local,
            pull_ref_ns: u.as_ns(),
            offset_ns: local - u.as_f64_ns(),
            n_hat_ns: n_hat,
            d_c_ns: 0,
            arrival_ns: 0,
            scheduled_ns: 0,
            slack_ns: 0,
            overrun: overrun as u8,
        });
        self.schedule(u, Kind::Pull, Payload::Generate { packet: next_index });
        true
    }

    fn client_slot(&mut self, now: Nanos, frame: u64) {
        let occupancy = self.fifo.occupancy();
        let (head, underflow) = self.fifo.take();
        self.out.occupancy.push(OccupancySample {
            frame,
            slot: self.cfg.measured_pair().client_slot,
            occupancy,
            underflow_flag: underflow as u8,
        });
        if let Some(p) = head {
            self.out.counters.packets_sent += 1;
            let prop = self.cfg.propagation_delay;
            let tx = self.cfg.airtime;
            let t2 = now;
            let t4 = t2 + tx;
            let t5 = t4 + prop;
            let d_s = self.cfg.server_delay.sample(&mut self.rng_server);
            let mut ex = PartialExchange {
                pair_id: self.pair_id(),
                frame_index: frame,
                ..Default::default()
            };
            ex.t[0] = Some(p.t0);
            ex.t[1] = Some(p.t1);
            ex.t[2] = Some(t2);
            ex.t[3] = Some(t2 + prop);
            ex.t[4] = Some(t4);
            ex.t[5] = Some(t5);
            ex.t[6] = Some(t5 + d_s);
            self.out.wc.push(WcSample {
                frame,
                w_c: t2 - p.t1,
            });
            self.server_started = true;
            self.schedule(t5 + d_s, Kind::ResponseReady, Payload::ResponseReady { ex });
        }
        if frame + 1 < self.cfg.num_frames {
            self.schedule(
                now + self.frame,
                Kind::ClientSlot,
                Payload::ClientSlot { frame: frame + 1 },
            );
        }
    }

    fn server_slot(&mut self, now: Nanos, frame: u64) {
        match self.server_pending.take() {
            Some(mut ex) => {
                let prop = self.cfg.propagation_delay;
                let t9 = now + self.cfg.airtime;
                ex.t[7] = Some(now);
                ex.t[8] = Some(now + prop);
                ex.t[9] = Some(t9);
                ex.t[10] = Some(t9 + prop);
                if let Ok(trace) = ex.complete() {
                    self.out.traces.push(trace);
                    self.out.counters.exchanges_completed += 1;
                }
            }
            None if self.server_started => self.out.counters.server_idle_slots += 1,
            None => {}
        }
        if frame + 1 < self.cfg.num_frames + 2 {
            self.schedule(
                now + self.frame,
                Kind::ServerSlot,
                Payload::ServerSlot { frame: frame + 1 },
            );
        }
    }

    fn run(mut self) -> RunResult {
        while let Some(ev) = self.queue.pop() {
            match ev.payload {
                Payload::Generate { packet } => self.generate(ev.at, packet),
                Payload::Arrival { packet } => {
                    if !self.arrival(ev.at, packet) {
                        break;
                    }
                }
                Payload::ResponseReady { ex } => {
                    if self.server_pending.replace(ex).is_some() {
                        self.out.counters.superseded_responses += 1;
                    }
                }
                Payload::ClientSlot { frame } => self.client_slot(ev.at, frame),
                Payload::ServerSlot { frame } => self.server_slot(ev.at, frame),
            }
        }
        self.out.counters.client_underflows = self.fifo.underflow_events;
        // pulls whose packet never reached the MAC carry no slack
        self.out.telemetry.truncate(self.telemetry_done);
        self.out
    }
}

/// Target slack used by a run: the override, or the estimate from `q_init`
/// sampled processing delays.
pub fn resolve_st_target(cfg: &ExperimentConfig) -> Result<Nanos, RunError> {
    match cfg.st_target_override {
        Some(t) => Ok(t),
        None => {
            let mut rng = stream(cfg.seed, STREAM_TARGET);
            let samples: Vec<Nanos> = (0..cfg.q_init)
                .map(|_| cfg.client_delay.sample(&mut rng))
                .collect();
            Ok(estimate_st_target(&samples)?)
        }
    }
}

/// Plays out one experiment. Deterministic in `cfg` (including its seed).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let clock = cfg.clock_setting.jit_clock(cfg.drift_ppm)?;
    let frame = cfg.frame_duration();
    let dt = cfg.ring.slot_duration();
    let pair = cfg.measured_pair();
    let st_target = resolve_st_target(cfg)?;
    let mut sim = Sim {
        cfg,
        clock,
        frame,
        horizon: frame * cfg.num_frames as i64,
        client_offset: dt * pair.client_slot as i64,
        server_offset: dt * pair.server_slot as i64,
        rng_client: stream(cfg.seed, STREAM_CLIENT),
        rng_server: stream(cfg.seed, STREAM_SERVER),
        queue: BinaryHeap::new(),
        seq: 0,
        fifo: FifoBuffer::new(cfg.fifo_capacity),
        controller: None,
        baseline_phase_local: 0.0,
        server_pending: None,
        server_started: false,
        telemetry_done: 0,
        out: RunResult {
            traces: Vec::new(),
            occupancy: Vec::with_capacity(cfg.num_frames as usize),
            wc: Vec::with_capacity(cfg.num_frames as usize),
            telemetry: Vec::new(),
            st_target,
            counters: RunCounters::default(),
            overflow_at: None,
        },
    };
    sim.schedule(
        sim.client_offset,
        Kind::ClientSlot,
        Payload::ClientSlot { frame: 0 },
    );
    sim.schedule(
        sim.server_offset,
        Kind::ServerSlot,
        Payload::ServerSlot { frame: 0 },
    );

    match cfg.mode {
        Mode::Jit => {
            let lead = st_target + cfg.client_delay.base_delay;
            let first_mac = sim.next_client_slot(lead);
            let u0 = first_mac - lead;
            let local0 = clock.local_at(u0.as_f64_ns());
            let ctl = SyncState::new(cfg.alpha, st_target, frame, local0)?;
            let u0 = Nanos::from_f64_ns(clock.reference_at(local0)?);
            sim.out.telemetry.push(TelemetryRow {
                packet: 0,
                pull_local_ns: local0,
                pull_ref_ns: u0.as_ns(),
                offset_ns: local0 - u0.as_f64_ns(),
                n_hat_ns: ctl.n_hat(),
                d_c_ns: 0,
                arrival_ns: 0,
                scheduled_ns: 0,
                slack_ns: 0,
                overrun: 0,
            });
            sim.controller = Some(ctl);
            sim.schedule(u0, Kind::Pull, Payload::Generate { packet: 0 });
        }
        Mode::Baseline => {
            let phase = match cfg.baseline_phase {
                Some(p) => p,
                None => Nanos(stream(cfg.seed, STREAM_PHASE).gen_range(0..frame.as_ns())),
            };
            sim.baseline_phase_local = phase.as_f64_ns();
            let t0 = Nanos::from_f64_ns(clock.reference_at(sim.baseline_phase_local)?);
            sim.schedule(t0, Kind::Pull, Payload::Generate { packet: 0 });
        }
    }
    Ok(sim.run())
}

/// Per-frame client wait of a baseline run.
pub fn baseline_wc_series(cfg: &ExperimentConfig) -> Result<Vec<Nanos>, RunError> {
    if cfg.mode != Mode::Baseline {
        return Err(RunError::WrongMode {
            expected: Mode::Baseline,
        });
    }
    Ok(run_experiment(cfg)?.wc.iter().map(|s| s.w_c).collect())
}

/// `W* = 2F`, the largest combined client and server wait without JIT.
pub fn worst_case_wait(ring: &crate::allocator::RingConfig) -> Nanos {
    ring.frame_duration() * 2
}

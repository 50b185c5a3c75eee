//! Slotted CSMA with a fixed contention window and a probabilistic JIT pull.
//!
//! The client's middleware watches its backoff counter and pulls a packet
//! from the application when the counter reaches
//! `K = ceil(turnaround / slot_time)`, so the packet is ready roughly when the
//! counter expires. In push mode the application hands over its next packet
//! as soon as the previous one leaves the MAC.
//!
//! Counters freeze while the medium is busy. Contenders are saturated and
//! redraw uniformly from `[0, CW)` after every transmission.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::time::Nanos;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CsmaError {
    #[error("slot time must be positive, got {0}")]
    SlotTime(Nanos),
    #[error("contention window must be at least 1")]
    Window,
    #[error("transmissions must last at least one slot")]
    FrameSlots,
    #[error("{0} must be non-negative")]
    Negative(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsmaMode {
    JitPull,
    Push,
}

impl CsmaMode {
    pub fn label(self) -> &'static str {
        match self {
            CsmaMode::JitPull => "jit-pull",
            CsmaMode::Push => "push",
        }
    }
}

/// Responding server node. With `preset`, its counter is set to the slot
/// count of its turnaround when a request arrives instead of being drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsmaServer {
    pub turnaround: Nanos,
    pub preset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsmaScenario {
    pub num_contenders: usize,
    pub turnaround: Nanos,
    pub mode: CsmaMode,
    pub seed: u64,
    pub num_packets: usize,
    pub slot_time: Nanos,
    pub contention_window: u32,
    /// Medium occupancy of one transmission, in backoff slots.
    pub frame_slots: u64,
    pub server: Option<CsmaServer>,
    /// Keep a per-slot log of medium state and the client counter.
    pub record_slots: bool,
}

impl CsmaScenario {
    pub fn new(mode: CsmaMode, num_contenders: usize, seed: u64) -> Self {
        Self {
            num_contenders,
            turnaround: Nanos::from_us(100),
            mode,
            seed,
            num_packets: 10_000,
            slot_time: Nanos::from_us(9),
            contention_window: 32,
            frame_slots: 20,
            server: None,
            record_slots: false,
        }
    }

    /// Counter value at which the pull fires.
    pub fn pull_threshold(&self) -> u64 {
        ceil_div(self.turnaround, self.slot_time)
    }

    pub fn validate(&self) -> Result<(), CsmaError> {
        if self.slot_time <= Nanos::ZERO {
            return Err(CsmaError::SlotTime(self.slot_time));
        }
        if self.contention_window == 0 {
            return Err(CsmaError::Window);
        }
        if self.frame_slots == 0 {
            return Err(CsmaError::FrameSlots);
        }
        if self.turnaround.is_negative() {
            return Err(CsmaError::Negative("turnaround"));
        }
        if self.server.is_some_and(|s| s.turnaround.is_negative()) {
            return Err(CsmaError::Negative("server turnaround"));
        }
        Ok(())
    }
}

fn ceil_div(a: Nanos, b: Nanos) -> u64 {
    ((a.as_ns() + b.as_ns() - 1) / b.as_ns()).max(0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLog {
    pub slot: u64,
    /// Start slot of the transmission occupying this slot, if any.
    pub busy_since: Option<u64>,
    pub client_counter: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsmaResult {
    /// Arrival-to-transmission wait of each client packet.
    pub waits: Vec<Nanos>,
    pub server_waits: Vec<Nanos>,
    pub collisions: u64,
    pub slot_log: Vec<SlotLog>,
}

impl CsmaResult {
    pub fn mean_wait_ns(&self) -> f64 {
        mean(&self.waits)
    }

    pub fn mean_server_wait_ns(&self) -> f64 {
        mean(&self.server_waits)
    }
}

fn mean(v: &[Nanos]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|w| w.as_f64_ns()).sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, Default)]
struct Station {
    counter: u64,
    /// MAC arrival time of the packet waiting to go out.
    ready_at: Option<Nanos>,
    pulled: bool,
}

/// Runs until the client has transmitted `num_packets` packets.
pub fn run_csma(sc: &CsmaScenario) -> Result<CsmaResult, CsmaError> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let cw = sc.contention_window as u64;
    let k = sc.pull_threshold();
    let slot_ns = sc.slot_time;
    let at = |slot: u64| slot_ns * slot as i64;

    let mut client = Station {
        counter: rng.gen_range(0..cw),
        ..Default::default()
    };
    let mut contenders: Vec<u64> = (0..sc.num_contenders)
        .map(|_| rng.gen_range(0..cw))
        .collect();
    let mut server: Option<Station> = None;
    let mut out = CsmaResult::default();

    let mut slot: u64 = 0;
    match sc.mode {
        CsmaMode::Push => client.ready_at = Some(sc.turnaround),
        CsmaMode::JitPull if client.counter <= k => {
            client.ready_at = Some(sc.turnaround);
            client.pulled = true;
        }
        CsmaMode::JitPull => {}
    }

    while out.waits.len() < sc.num_packets {
        let now = at(slot);
        let client_tx = client.counter == 0 && client.ready_at.is_some_and(|t| t <= now);
        let server_tx = server
            .as_ref()
            .is_some_and(|s| s.counter == 0 && s.ready_at.is_some_and(|t| t <= now));
        let n_tx = contenders.iter().filter(|&&c| c == 0).count()
            + client_tx as usize
            + server_tx as usize;

        if n_tx == 0 {
            if sc.record_slots {
                out.slot_log.push(SlotLog {
                    slot,
                    busy_since: None,
                    client_counter: client.counter,
                });
            }
            for c in contenders.iter_mut() {
                *c -= 1;
            }
            if let Some(s) = server.as_mut() {
                s.counter = s.counter.saturating_sub(1);
            }
            client.counter = client.counter.saturating_sub(1);
            slot += 1;
            if sc.mode == CsmaMode::JitPull && !client.pulled && client.counter == k {
                client.ready_at = Some(at(slot) + sc.turnaround);
                client.pulled = true;
            }
            continue;
        }

        if n_tx > 1 {
            out.collisions += 1;
        }
        for c in contenders.iter_mut().filter(|c| **c == 0) {
            *c = rng.gen_range(0..cw);
        }
        let end = slot + sc.frame_slots;
        if server_tx {
            if let Some(s) = server.as_mut() {
                out.server_waits.push(now - s.ready_at.unwrap_or(now));
                s.ready_at = None;
            }
        }
        if client_tx {
            out.waits.push(now - client.ready_at.unwrap_or(now));
            client.counter = rng.gen_range(0..cw);
            client.pulled = false;
            client.ready_at = None;
            match sc.mode {
                CsmaMode::Push => client.ready_at = Some(now + sc.turnaround),
                CsmaMode::JitPull if client.counter <= k => {
                    // counting resumes once the medium is free again
                    client.ready_at = Some(at(end) + sc.turnaround);
                    client.pulled = true;
                }
                CsmaMode::JitPull => {}
            }
            if let Some(spec) = sc.server {
                // request fully received at the end of the transmission
                let counter = if spec.preset {
                    ceil_div(spec.turnaround, slot_ns)
                } else {
                    rng.gen_range(0..cw)
                };
                server = Some(Station {
                    counter,
                    ready_at: Some(at(end) + spec.turnaround),
                    pulled: true,
                });
            }
        }
        if sc.record_slots {
            for s in slot..end {
                out.slot_log.push(SlotLog {
                    slot: s,
                    busy_since: Some(slot),
                    client_counter: client.counter,
                });
            }
        }
        slot = end;
    }
    Ok(out)
}

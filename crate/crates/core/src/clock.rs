//! Drift-able software clocks measured against the reference MAC timeline.
//!
//! A [`VirtualClock`] reads `t_local = initial_offset + tick_ratio * t_ref`.
//! The offset `o(t) = t_local - t_ref` therefore grows at the constant rate
//! `tick_ratio - 1`.

use serde::{Deserialize, Serialize};

use crate::time::Nanos;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClockError {
    #[error("tick ratio must be finite and positive, got {0}")]
    BadTickRatio(f64),
    #[error("local time {local} ns precedes the clock epoch at {epoch} ns")]
    BeforeEpoch { local: f64, epoch: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualClock {
    tick_ratio: f64,
    initial_offset: Nanos,
}

impl VirtualClock {
    pub fn new(tick_ratio: f64, initial_offset: Nanos) -> Result<Self, ClockError> {
        if !tick_ratio.is_finite() || tick_ratio <= 0.0 {
            return Err(ClockError::BadTickRatio(tick_ratio));
        }
        Ok(Self {
            tick_ratio,
            initial_offset,
        })
    }

    /// The reference clock itself.
    pub fn identity() -> Self {
        Self {
            tick_ratio: 1.0,
            initial_offset: Nanos::ZERO,
        }
    }

    /// A clock whose rate differs from the reference by `ppm` parts per million
    /// (positive: local clock runs fast).
    pub fn with_ppm(ppm: f64) -> Result<Self, ClockError> {
        Self::new(1.0 + ppm * 1e-6, Nanos::ZERO)
    }

    pub fn tick_ratio(&self) -> f64 {
        self.tick_ratio
    }

    pub fn initial_offset(&self) -> Nanos {
        self.initial_offset
    }

    /// Exact local reading (fractional ns) at reference time `t_ref_ns`.
    pub fn local_at(&self, t_ref_ns: f64) -> f64 {
        self.initial_offset.as_f64_ns() + self.tick_ratio * t_ref_ns
    }

    /// Exact reference time (fractional ns) at which this clock reads `local_ns`.
    pub fn reference_at(&self, local_ns: f64) -> Result<f64, ClockError> {
        let epoch = self.initial_offset.as_f64_ns();
        if local_ns < epoch {
            return Err(ClockError::BeforeEpoch {
                local: local_ns,
                epoch: self.initial_offset.as_ns(),
            });
        }
        Ok((local_ns - epoch) / self.tick_ratio)
    }

    /// Local reading at `t_ref`, rounded to the time quantum.
    pub fn to_local(&self, t_ref: Nanos) -> Nanos {
        Nanos::from_f64_ns(self.local_at(t_ref.as_f64_ns()))
    }

    /// Reference time at which this clock reads `t_local`, rounded to the quantum.
    pub fn to_reference(&self, t_local: Nanos) -> Result<Nanos, ClockError> {
        self.reference_at(t_local.as_f64_ns())
            .map(Nanos::from_f64_ns)
    }

    /// Offset `o(t) = t_local - t_ref` at reference time `t_ref_ns`.
    pub fn offset_at(&self, t_ref_ns: f64) -> f64 {
        self.local_at(t_ref_ns) - t_ref_ns
    }
}

/// The three tick-rate relationships between the JIT clock and the MAC clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClockSetting {
    /// Both clocks tick at the same rate.
    Same = 1,
    /// JIT clock ticks more slowly than the MAC clock.
    JitSlow = 2,
    /// JIT clock ticks faster than the MAC clock.
    JitFast = 3,
}

/// 0.0005 %, the default tick-rate difference for settings 2 and 3.
pub const DEFAULT_DRIFT_PPM: f64 = 5.0;

impl ClockSetting {
    pub fn number(self) -> u8 {
        self as u8
    }

    /// JIT clock for this setting with the given tick-rate difference.
    pub fn jit_clock(self, drift_ppm: f64) -> Result<VirtualClock, ClockError> {
        match self {
            ClockSetting::Same => Ok(VirtualClock::identity()),
            ClockSetting::JitSlow => VirtualClock::with_ppm(-drift_ppm.abs()),
            ClockSetting::JitFast => VirtualClock::with_ppm(drift_ppm.abs()),
        }
    }
}

impl TryFrom<u8> for ClockSetting {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(ClockSetting::Same),
            2 => Ok(ClockSetting::JitSlow),
            3 => Ok(ClockSetting::JitFast),
            other => Err(format!("clock setting must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<ClockSetting> for u8 {
    fn from(s: ClockSetting) -> u8 {
        s as u8
    }
}

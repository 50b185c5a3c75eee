use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{RingConfig, SlotAllocation, SlotPair};
use crate::clock::{ClockSetting, DEFAULT_DRIFT_PPM};
use crate::controller::{DEFAULT_ALPHA, DEFAULT_Q_INIT};
use crate::time::Nanos;

pub const DEFAULT_FIFO_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("num_frames must be at least 1")]
    NoFrames,
    #[error("allocation is empty")]
    EmptyAllocation,
    #[error("invalid allocation: {0}")]
    Allocation(#[from] crate::allocator::AllocError),
    #[error("airtime must be in (0, slot_duration], got {0}")]
    BadAirtime(Nanos),
    #[error("propagation delay must be in [0, airtime], got {0}")]
    BadPropagation(Nanos),
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: Nanos },
    #[error("maximum server delay {max} must be shorter than the frame {frame}")]
    ServerTooSlow { max: Nanos, frame: Nanos },
    #[error("alpha must satisfy 0 < alpha <= 1, got {0}")]
    Alpha(f64),
    #[error("q_init must be at least 2 when the target slack is estimated, got {0}")]
    QInit(usize),
    #[error("fifo capacity must be at least 1")]
    Capacity,
    #[error("drift must be finite and below 1e6 ppm, got {0}")]
    Drift(f64),
    #[error("baseline phase must lie in [0, F), got {0}")]
    Phase(Nanos),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Jit,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterDistribution {
    None,
    #[default]
    Uniform,
    TwoPoint,
}

/// Processing delay `base + jitter`, jitter drawn from `distribution` on `[0, jitter_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreemptionModel {
    pub base_delay: Nanos,
    pub jitter_max: Nanos,
    pub distribution: JitterDistribution,
}

impl PreemptionModel {
    pub fn fixed(delay: Nanos) -> Self {
        Self {
            base_delay: delay,
            jitter_max: Nanos::ZERO,
            distribution: JitterDistribution::None,
        }
    }

    pub fn uniform(base: Nanos, jitter_max: Nanos) -> Self {
        Self {
            base_delay: base,
            jitter_max,
            distribution: JitterDistribution::Uniform,
        }
    }

    pub fn max_delay(&self) -> Nanos {
        match self.distribution {
            JitterDistribution::None => self.base_delay,
            _ => self.base_delay + self.jitter_max,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Nanos {
        let j = self.jitter_max.as_ns();
        let extra = match self.distribution {
            JitterDistribution::None => 0,
            _ if j == 0 => 0,
            JitterDistribution::Uniform => rng.gen_range(0..=j),
            JitterDistribution::TwoPoint => {
                if rng.gen_bool(0.5) {
                    j
                } else {
                    0
                }
            }
        };
        self.base_delay + Nanos(extra)
    }

    fn validate(&self, what: &'static str) -> Result<(), ConfigError> {
        for value in [self.base_delay, self.jitter_max] {
            if value.is_negative() {
                return Err(ConfigError::Negative { what, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub clock_setting: ClockSetting,
    /// Tick-rate difference of the JIT clock for settings 2 and 3.
    pub drift_ppm: f64,
    pub ring: RingConfig,
    /// Pair 0 is simulated end to end; other pairs only reserve their slots.
    pub allocation: SlotAllocation,
    pub client_delay: PreemptionModel,
    pub server_delay: PreemptionModel,
    pub alpha: f64,
    pub st_target_override: Option<Nanos>,
    pub q_init: usize,
    pub num_frames: u64,
    pub seed: u64,
    pub propagation_delay: Nanos,
    /// Transmission time of one message; defaults to the slot duration.
    pub airtime: Nanos,
    pub fifo_capacity: usize,
    /// Local-clock time of the first baseline generation. Drawn from the seed when unset.
    pub baseline_phase: Option<Nanos>,
}

impl ExperimentConfig {
    /// N = 64, dt = 150 us, D_c = 30 us + uniform(0, 30 us), D_s = 30 us,
    /// target slack 30 us, pair at slots (0, 2).
    pub fn table1(mode: Mode, clock_setting: ClockSetting) -> Self {
        let slot = Nanos::from_us(150);
        Self {
            mode,
            clock_setting,
            drift_ppm: DEFAULT_DRIFT_PPM,
            ring: RingConfig::new(64, slot).expect("static ring"),
            allocation: SlotAllocation::new(vec![SlotPair::new(0, 2)]),
            client_delay: PreemptionModel::uniform(Nanos::from_us(30), Nanos::from_us(30)),
            server_delay: PreemptionModel::fixed(Nanos::from_us(30)),
            alpha: DEFAULT_ALPHA,
            st_target_override: Some(Nanos::from_us(30)),
            q_init: DEFAULT_Q_INIT,
            num_frames: 10_000,
            seed: 1,
            propagation_delay: Nanos::ZERO,
            airtime: slot,
            fifo_capacity: DEFAULT_FIFO_CAPACITY,
            baseline_phase: None,
        }
    }

    pub fn frame_duration(&self) -> Nanos {
        self.ring.frame_duration()
    }

    pub fn measured_pair(&self) -> SlotPair {
        self.allocation.pairs[0]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_frames == 0 {
            return Err(ConfigError::NoFrames);
        }
        if self.allocation.is_empty() {
            return Err(ConfigError::EmptyAllocation);
        }
        self.allocation.check_injective(&self.ring)?;
        if self.airtime <= Nanos::ZERO || self.airtime > self.ring.slot_duration() {
            return Err(ConfigError::BadAirtime(self.airtime));
        }
        if self.propagation_delay.is_negative() || self.propagation_delay > self.airtime {
            return Err(ConfigError::BadPropagation(self.propagation_delay));
        }
        self.client_delay.validate("client delay")?;
        self.server_delay.validate("server delay")?;
        let frame = self.frame_duration();
        if self.server_delay.max_delay() >= frame {
            return Err(ConfigError::ServerTooSlow {
                max: self.server_delay.max_delay(),
                frame,
            });
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        match self.st_target_override {
            Some(t) if t.is_negative() => {
                return Err(ConfigError::Negative {
                    what: "target slack",
                    value: t,
                })
            }
            None if self.q_init < 2 => return Err(ConfigError::QInit(self.q_init)),
            _ => {}
        }
        if self.fifo_capacity == 0 {
            return Err(ConfigError::Capacity);
        }
        if !self.drift_ppm.is_finite() || self.drift_ppm.abs() >= 1e6 {
            return Err(ConfigError::Drift(self.drift_ppm));
        }
        if let Some(p) = self.baseline_phase {
            if p.is_negative() || p >= frame {
                return Err(ConfigError::Phase(p));
            }
        }
        Ok(())
    }
}

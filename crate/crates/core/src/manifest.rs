//! TOML experiment manifests.
//!
//! Unknown keys are rejected and every duration carries a unit
//! (`"150us"`, `"9.6ms"`, `"30ns"`).

use serde::Deserialize;

use crate::allocator::{
    beta_from_delay, construct_optimal_packing, AllocError, PackingOrder, RingConfig,
    SlotAllocation, SlotPair,
};
use crate::clock::{ClockSetting, DEFAULT_DRIFT_PPM};
use crate::controller::{DEFAULT_ALPHA, DEFAULT_Q_INIT};
use crate::csma::{CsmaMode, CsmaScenario, CsmaServer};
use crate::tdma::{
    ExperimentConfig, JitterDistribution, Mode, PreemptionModel, DEFAULT_FIFO_CAPACITY,
};
use crate::time::Nanos;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("manifest needs exactly one of [tdma] or [csma]")]
    Kind,
    #[error("[tdma.allocation] needs exactly one of `pairs` or `packing_pairs`")]
    AllocationSpec,
    #[error("[tdma.allocation]: {0}")]
    Allocation(#[from] AllocError),
    #[error("`packing_pairs` = {got} exceeds the {max} pairs of the packing")]
    PackingPairs { got: usize, max: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    pub tdma: Option<TdmaSpec>,
    pub csma: Option<CsmaSpec>,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory below the output root; defaults to the manifest name.
    pub dir: Option<String>,
    /// Frames excluded from the summary statistics.
    #[serde(default = "default_warmup")]
    pub warmup_frames: u64,
}

fn default_warmup() -> u64 {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub base: Nanos,
    #[serde(default)]
    pub jitter_max: Nanos,
    #[serde(default)]
    pub distribution: Option<JitterDistribution>,
}

impl DelaySpec {
    fn model(&self) -> PreemptionModel {
        let distribution = self
            .distribution
            .unwrap_or(if self.jitter_max == Nanos::ZERO {
                JitterDistribution::None
            } else {
                JitterDistribution::Uniform
            });
        PreemptionModel {
            base_delay: self.base,
            jitter_max: self.jitter_max,
            distribution,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSpec {
    /// Explicit `[client, server]` slot pairs; the first pair is simulated.
    pub pairs: Option<Vec<[usize; 2]>>,
    /// Take this many pairs from the optimal packing for the server delay's beta.
    pub packing_pairs: Option<usize>,
    #[serde(default)]
    pub order: PackingOrder,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdmaSpec {
    pub mode: Mode,
    #[serde(default = "setting_one")]
    pub clock_setting: ClockSetting,
    #[serde(default = "default_drift")]
    pub drift_ppm: f64,
    pub n_slots: usize,
    pub slot_duration: Nanos,
    #[serde(default)]
    pub allocation: AllocationSpec,
    pub client_delay: DelaySpec,
    pub server_delay: DelaySpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub st_target: Option<Nanos>,
    #[serde(default = "default_q")]
    pub q_init: usize,
    pub num_frames: u64,
    #[serde(default)]
    pub propagation_delay: Nanos,
    pub airtime: Option<Nanos>,
    #[serde(default = "default_capacity")]
    pub fifo_capacity: usize,
    pub baseline_phase: Option<Nanos>,
}

fn setting_one() -> ClockSetting {
    ClockSetting::Same
}
fn default_drift() -> f64 {
    DEFAULT_DRIFT_PPM
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_q() -> usize {
    DEFAULT_Q_INIT
}
fn default_capacity() -> usize {
    DEFAULT_FIFO_CAPACITY
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsmaServerSpec {
    pub turnaround: Nanos,
    #[serde(default)]
    pub preset: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsmaSpec {
    pub mode: CsmaMode,
    pub num_contenders: usize,
    pub turnaround: Nanos,
    pub num_packets: usize,
    pub slot_time: Nanos,
    pub contention_window: u32,
    pub frame_slots: u64,
    pub server: Option<CsmaServerSpec>,
}

/// What a manifest asks to run, for one seed.
#[derive(Debug, Clone)]
pub enum Experiment {
    Tdma(ExperimentConfig),
    Csma(CsmaScenario),
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let m: Manifest = toml::from_str(text)?;
        if m.tdma.is_some() == m.csma.is_some() {
            return Err(ManifestError::Kind);
        }
        Ok(m)
    }

    pub fn output_dir(&self) -> &str {
        self.output.dir.as_deref().unwrap_or(&self.name)
    }

    pub fn experiment(&self, seed: u64) -> Result<Experiment, ManifestError> {
        match (&self.tdma, &self.csma) {
            (Some(t), None) => Ok(Experiment::Tdma(t.config(seed)?)),
            (None, Some(c)) => Ok(Experiment::Csma(c.scenario(seed))),
            _ => Err(ManifestError::Kind),
        }
    }
}

impl TdmaSpec {
    pub fn config(&self, seed: u64) -> Result<ExperimentConfig, ManifestError> {
        let ring = RingConfig::new(self.n_slots, self.slot_duration)?;
        let server_delay = self.server_delay.model();
        let allocation = match (&self.allocation.pairs, self.allocation.packing_pairs) {
            (Some(pairs), None) => {
                SlotAllocation::new(pairs.iter().map(|&[c, s]| SlotPair::new(c, s)).collect())
            }
            (None, Some(count)) => {
                let req = beta_from_delay(0, server_delay.max_delay(), &ring)?;
                let mut packing =
                    construct_optimal_packing(req.beta, &ring, self.allocation.order)?;
                if count == 0 || count > packing.len() {
                    return Err(ManifestError::PackingPairs {
                        got: count,
                        max: packing.len(),
                    });
                }
                packing.pairs.truncate(count);
                packing
            }
            (None, None) => {
                let req = beta_from_delay(0, server_delay.max_delay(), &ring)?;
                SlotAllocation::new(vec![SlotPair::new(0, req.beta.max(1))])
            }
            (Some(_), Some(_)) => return Err(ManifestError::AllocationSpec),
        };
        Ok(ExperimentConfig {
            mode: self.mode,
            clock_setting: self.clock_setting,
            drift_ppm: self.drift_ppm,
            ring,
            allocation,
            client_delay: self.client_delay.model(),
            server_delay,
            alpha: self.alpha,
            st_target_override: self.st_target,
            q_init: self.q_init,
            num_frames: self.num_frames,
            seed,
            propagation_delay: self.propagation_delay,
            airtime: self.airtime.unwrap_or(self.slot_duration),
            fifo_capacity: self.fifo_capacity,
            baseline_phase: self.baseline_phase,
        })
    }
}

impl CsmaSpec {
    pub fn scenario(&self, seed: u64) -> CsmaScenario {
        CsmaScenario {
            num_contenders: self.num_contenders,
            turnaround: self.turnaround,
            mode: self.mode,
            seed,
            num_packets: self.num_packets,
            slot_time: self.slot_time,
            contention_window: self.contention_window,
            frame_slots: self.frame_slots,
            server: self.server.as_ref().map(|s| CsmaServer {
                turnaround: s.turnaround,
                preset: s.preset,
            }),
            record_slots: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = r#"
name = "table1-jit"
seed = 7

[tdma]
mode = "jit"
clock_setting = 2
n_slots = 64
slot_duration = "150us"
st_target = "30us"
num_frames = 10000

[tdma.allocation]
packing_pairs = 5

[tdma.client_delay]
base = "30us"
jitter_max = "30us"

[tdma.server_delay]
base = "30us"
"#;

    #[test]
    fn parses_table1() {
        let m = Manifest::parse(TABLE1).unwrap();
        assert_eq!(m.output_dir(), "table1-jit");
        let Experiment::Tdma(c) = m.experiment(m.seed).unwrap() else {
            panic!("expected tdma");
        };
        c.validate().unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.clock_setting, ClockSetting::JitSlow);
        assert_eq!(c.allocation.pairs[0], SlotPair::new(0, 2));
        assert_eq!(c.allocation.pairs[4], SlotPair::new(16, 18));
        assert_eq!(c.client_delay.distribution, JitterDistribution::Uniform);
        assert_eq!(c.server_delay.distribution, JitterDistribution::None);
        assert_eq!(c.airtime, Nanos::from_us(150));
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = TABLE1.replace("num_frames = 10000", "num_frames = 10000\nnum_frame = 3");
        let err = Manifest::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("num_frame"), "{err}");
    }

    #[test]
    fn durations_need_units() {
        let bad = TABLE1.replace("\"150us\"", "\"150\"");
        let err = Manifest::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("unit"), "{err}");
    }

    #[test]
    fn needs_exactly_one_kind() {
        assert!(matches!(
            Manifest::parse("name = \"x\""),
            Err(ManifestError::Kind)
        ));
    }

    #[test]
    fn parses_csma() {
        let m = Manifest::parse(
            r#"
name = "csma-pull"
[csma]
mode = "jit-pull"
num_contenders = 5
turnaround = "100us"
num_packets = 1000
slot_time = "9us"
contention_window = 32
frame_slots = 20
"#,
        )
        .unwrap();
        let Experiment::Csma(s) = m.experiment(3).unwrap() else {
            panic!("expected csma");
        };
        assert_eq!(s.mode, CsmaMode::JitPull);
        assert_eq!(s.pull_threshold(), 12);
    }
}

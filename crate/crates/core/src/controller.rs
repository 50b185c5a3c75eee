//! Adaptive pull-signal synchronization for the client's JIT middleware.
//!
//! The middleware pulls packet `i` from the application at local time
//! `U_i = U_{i-1} + F + n_i`, where the timing offset follows an EWMA of the
//! slack error reported by the MAC layer:
//!
//! ```text
//! n_i = (1 - alpha) * n_{i-1} + alpha * (ST_{i-1} - ST_target),   n_0 = 0
//! ```
//!
//! Slack is measured on the MAC clock while the target and the pull schedule
//! live on the JIT clock; the two are combined without conversion.

use num_complex::Complex64;

use crate::time::Nanos;

/// Default EWMA smoothing parameter (deadbeat).
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Default number of initialization packets used to estimate the target slack.
pub const DEFAULT_Q_INIT: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("smoothing parameter must satisfy 0 < alpha <= 1, got {0}")]
    AlphaOutOfRange(f64),
    #[error("target slack must be non-negative, got {0}")]
    NegativeTarget(Nanos),
    #[error("need at least 2 processing-delay samples, got {0}")]
    InsufficientSamples(usize),
    #[error("processing-delay sample {index} is negative ({value})")]
    NegativeSample { index: usize, value: Nanos },
    #[error("feedback for packet {got} out of order (expected packet {expected})")]
    OutOfOrderFeedback { expected: u64, got: u64 },
    #[error("pull for packet {packet} scheduled at {scheduled:.1} ns but JIT clock already reads {now:.1} ns")]
    SchedulingOverrun {
        packet: u64,
        scheduled: f64,
        now: f64,
    },
}

/// MAC-layer report for one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlackFeedback {
    pub packet_index: u64,
    /// `ST = U_MAC - U_arr`, MAC clock. Negative when the packet missed its slot.
    pub slack: Nanos,
}

/// Controller state of one client's JIT middleware.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    alpha: f64,
    st_target: Nanos,
    /// Current timing offset adjustment, fractional nanoseconds (JIT clock).
    n_hat: f64,
    /// Local (JIT clock) time of the last pull, fractional nanoseconds.
    last_pull_local: f64,
    frame_duration: Nanos,
    /// Index of the next packet to be pulled.
    packet_index: u64,
    last_feedback: Option<u64>,
}

impl SyncState {
    /// Controller that has just pulled packet 0 at local time `first_pull_local`.
    pub fn new(
        alpha: f64,
        st_target: Nanos,
        frame_duration: Nanos,
        first_pull_local: f64,
    ) -> Result<Self, ControllerError> {
        check_alpha(alpha)?;
        if st_target.is_negative() {
            return Err(ControllerError::NegativeTarget(st_target));
        }
        Ok(Self {
            alpha,
            st_target,
            n_hat: 0.0,
            last_pull_local: first_pull_local,
            frame_duration,
            packet_index: 1,
            last_feedback: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn st_target(&self) -> Nanos {
        self.st_target
    }

    pub fn n_hat(&self) -> f64 {
        self.n_hat
    }

    pub fn last_pull_local(&self) -> f64 {
        self.last_pull_local
    }

    pub fn frame_duration(&self) -> Nanos {
        self.frame_duration
    }

    pub fn packet_index(&self) -> u64 {
        self.packet_index
    }

    /// Folds the slack of packet `i-1` into the timing offset `n_i`.
    pub fn update_offset(&mut self, fb: SlackFeedback) -> Result<f64, ControllerError> {
        let expected = self.packet_index - 1;
        if fb.packet_index != expected || self.last_feedback == Some(expected) {
            return Err(ControllerError::OutOfOrderFeedback {
                expected,
                got: fb.packet_index,
            });
        }
        let err = (fb.slack - self.st_target).as_f64_ns();
        self.n_hat = (1.0 - self.alpha) * self.n_hat + self.alpha * err;
        self.last_feedback = Some(expected);
        Ok(self.n_hat)
    }

    /// Local time of the next pull, `U_{i-1} + F + n_i`, and advances to packet `i+1`.
    ///
    /// When `now_local` is already past the computed time the pull is moved to
    /// `now_local` and the overrun is returned as an error.
    pub fn next_pull_time(&mut self, now_local: Option<f64>) -> Result<f64, ControllerError> {
        let scheduled = self.last_pull_local + self.frame_duration.as_f64_ns() + self.n_hat;
        let packet = self.packet_index;
        self.packet_index += 1;
        match now_local {
            Some(now) if scheduled < now => {
                self.last_pull_local = now;
                Err(ControllerError::SchedulingOverrun {
                    packet,
                    scheduled,
                    now,
                })
            }
            _ => {
                self.last_pull_local = scheduled;
                Ok(scheduled)
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), ControllerError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(ControllerError::AlphaOutOfRange(alpha))
    }
}

/// Target slack from `Q` initialization packets: the largest pairwise
/// difference of measured processing delays, i.e. `max - min`.
pub fn estimate_st_target(processing_delays: &[Nanos]) -> Result<Nanos, ControllerError> {
    if processing_delays.len() < 2 {
        return Err(ControllerError::InsufficientSamples(
            processing_delays.len(),
        ));
    }
    if let Some((index, &value)) = processing_delays
        .iter()
        .enumerate()
        .find(|(_, d)| d.is_negative())
    {
        return Err(ControllerError::NegativeSample { index, value });
    }
    let max = processing_delays.iter().max().copied().unwrap_or_default();
    let min = processing_delays.iter().min().copied().unwrap_or_default();
    Ok(max - min)
}

/// `ST = scheduled_tx - arrival`, both on the MAC clock.
pub fn compute_slack(scheduled_tx_mac: Nanos, arrival_mac: Nanos) -> Nanos {
    scheduled_tx_mac - arrival_mac
}

/// Poles of the closed-loop slack response, `(1-a) +- j sqrt(a(1-a))`.
pub fn controller_poles(alpha: f64) -> Result<(Complex64, Complex64), ControllerError> {
    check_alpha(alpha)?;
    let re = 1.0 - alpha;
    let im = (alpha * (1.0 - alpha)).sqrt();
    Ok((Complex64::new(re, im), Complex64::new(re, -im)))
}

/// Steady-state slack under a constant composite input `delta = dO - dD_c`.
pub fn predict_converged_slack(delta: Nanos, st_target: Nanos) -> Nanos {
    delta + st_target
}

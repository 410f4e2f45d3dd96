//! Gate-level Monte Carlo of the gated detector and of a decoy BB84 session.
//!
//! Gates are split into fixed-size blocks. Block `b` draws from the ChaCha8
//! stream `b` of the run seed, so a block's output depends only on
//! `(seed, block_size, b)`. Blocks run in parallel and merge by integer
//! summation, which makes results independent of the thread count.

mod characterization;
mod session;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::DetectorOperatingPoint;
use crate::error::{check, Issue, Result};

pub use characterization::{
    estimate_characterization, expected_histogram, simulate_characterization_run,
    write_histogram_csv, CharacterizationEstimate, GateHistogram,
};
pub use session::{generator_truth, simulate_qkd_session, GeneratorTruth};

/// Where a session afterpulse is booked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfterpulseMode {
    /// With probability `P_a` a click adds one extra detection with a random
    /// bit to the same pulse. Matches the analytic `Q_det·(1 + P_a)` model.
    #[default]
    SamePulse,
    /// Afterpulses fire on later gates through the exponential kernel and are
    /// booked against whatever pulse occupies that gate.
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_gates: u64,
    pub seed: u64,
    pub block_size: u64,
    /// Gates per laser period in the characterization run.
    pub illumination_period: u64,
    /// Mean photon number per characterization pulse.
    pub mu_per_pulse: f64,
    pub ap_time_constant_s: f64,
    /// Kernel is truncated once the remaining mass falls below this fraction.
    pub ap_kernel_tail: f64,
    /// Detections per second above which clicks are discarded.
    pub saturation_cap_hz: Option<f64>,
    pub afterpulse_mode: AfterpulseMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_gates: 100_000_000,
            seed: 42,
            block_size: 1 << 20,
            illumination_period: 64,
            mu_per_pulse: 0.1,
            ap_time_constant_s: 5e-8,
            ap_kernel_tail: 1e-6,
            saturation_cap_hz: None,
            afterpulse_mode: AfterpulseMode::SamePulse,
        }
    }
}

impl SimConfig {
    pub fn with_gates(self, n_gates: u64) -> Self {
        Self { n_gates, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn issues(&self, prefix: &str) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut bad = |key: &str, msg: &str| out.push(Issue::new(format!("{prefix}{key}"), msg));
        if self.n_gates < 1 {
            bad("n_gates", "must be >= 1");
        }
        if self.block_size < 1 {
            bad("block_size", "must be >= 1");
        }
        if self.illumination_period < 1 {
            bad("illumination_period", "must be >= 1");
        }
        if !(self.mu_per_pulse >= 0.0) || !self.mu_per_pulse.is_finite() {
            bad("mu_per_pulse", "must be >= 0");
        }
        if !(self.ap_time_constant_s > 0.0) || !self.ap_time_constant_s.is_finite() {
            bad("ap_time_constant_s", "must be > 0");
        }
        if !(self.ap_kernel_tail > 0.0 && self.ap_kernel_tail < 1.0) {
            bad("ap_kernel_tail", "must lie in (0, 1)");
        }
        if let Some(cap) = self.saturation_cap_hz {
            if !(cap > 0.0) {
                bad("saturation_cap_hz", "must be > 0 when set");
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues(""))
    }

    /// `(start gate, length)` of every block.
    pub(crate) fn blocks(&self) -> Vec<(u64, u64)> {
        let size = self.block_size.max(1);
        let count = self.n_gates.div_ceil(size);
        (0..count)
            .map(|b| {
                let start = b * size;
                (start, size.min(self.n_gates - start))
            })
            .collect()
    }
}

pub(crate) fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f(block_index, start, len)` for every block and returns results in
/// block order.
pub(crate) fn run_blocks<T, F>(sim: &SimConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64, u64) -> T + Sync,
{
    sim.blocks()
        .into_par_iter()
        .enumerate()
        .map(|(b, (start, len))| f(b as u64, start, len))
        .collect()
}

/// Exponential afterpulse memory, `a(k) = A·r^k` with `r = e^{−Δt/τ}` and
/// `Σ_{k≥1} a(k) = P_a`.
#[derive(Debug, Clone)]
pub(crate) struct AfterpulseKernel {
    ratio: f64,
    first: f64,
    horizon: u64,
    /// `(birth gate, trigger probability at the next gate)`.
    pending: VecDeque<(u64, f64)>,
}

impl AfterpulseKernel {
    pub fn new(op: &DetectorOperatingPoint, sim: &SimConfig) -> Self {
        let step = 1.0 / (op.gate_rate_hz * sim.ap_time_constant_s);
        let ratio = (-step).exp();
        let amplitude = op.afterpulse_prob * (1.0 - ratio) / ratio;
        let horizon = ((1.0 / sim.ap_kernel_tail).ln() / step).ceil().max(1.0) as u64;
        Self {
            ratio,
            first: amplitude * ratio,
            horizon,
            pending: VecDeque::new(),
        }
    }

    #[cfg(test)]
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn is_active(&self) -> bool {
        self.first > 0.0
    }

    /// Probability that no pending avalanche triggers the current gate.
    pub fn survival(&self) -> f64 {
        self.pending.iter().map(|&(_, p)| 1.0 - p).product()
    }

    /// Moves to the next gate, registering an avalanche at `gate` if any.
    pub fn advance(&mut self, gate: u64, avalanche: bool) {
        if !self.is_active() {
            return;
        }
        for (_, p) in self.pending.iter_mut() {
            *p *= self.ratio;
        }
        if avalanche {
            self.pending.push_back((gate, self.first));
        }
        while let Some(&(birth, _)) = self.pending.front() {
            if gate + 1 - birth > self.horizon {
                self.pending.pop_front();
            } else {
                break;
            }
        }
    }
}

/// Token bucket limiting the detection rate. One token per kept detection.
#[derive(Debug, Clone)]
pub(crate) struct SaturationCap {
    tokens: f64,
    refill: f64,
    burst: f64,
}

impl SaturationCap {
    pub fn new(cap_hz: Option<f64>, gate_rate_hz: f64) -> Option<Self> {
        cap_hz.map(|cap| {
            // Burst allowance of one microsecond at the cap rate.
            let burst = (cap * 1e-6).max(1.0);
            Self {
                tokens: burst,
                refill: cap / gate_rate_hz,
                burst,
            }
        })
    }

    /// Called once per gate; returns whether a detection here is kept.
    pub fn admit(&mut self, detection: bool) -> bool {
        self.tokens = (self.tokens + self.refill).min(self.burst);
        if !detection {
            return false;
        }
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(pa: f64) -> DetectorOperatingPoint {
        DetectorOperatingPoint::new(20.0, 0.0, pa, 0.25).unwrap()
    }

    #[test]
    fn blocks_cover_all_gates() {
        let sim = SimConfig::default().with_gates(10).with_seed(1);
        let sim = SimConfig {
            block_size: 4,
            ..sim
        };
        assert_eq!(sim.blocks(), vec![(0, 4), (4, 4), (8, 2)]);
    }

    #[test]
    fn kernel_mass_converges_to_afterpulse_probability() {
        let sim = SimConfig::default();
        let k = AfterpulseKernel::new(&op(0.028), &sim);
        let mut mass = 0.0;
        let mut p = k.first;
        for _ in 0..k.horizon() {
            mass += p;
            p *= k.ratio;
        }
        assert!((mass / 0.028 - 1.0).abs() <= sim.ap_kernel_tail * 1.0001);
        let mut p = k.first;
        let mut full = 0.0;
        for _ in 0..100_000 {
            full += p;
            p *= k.ratio;
        }
        assert!((full / 0.028 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_tracks_pending_avalanches() {
        let sim = SimConfig {
            ap_time_constant_s: 2e-9,
            ap_kernel_tail: 1e-3,
            ..SimConfig::default()
        };
        let mut k = AfterpulseKernel::new(&op(0.1), &sim);
        assert_eq!(k.survival(), 1.0);
        k.advance(0, true);
        let r = (-0.5f64).exp();
        let a = 0.1 * (1.0 - r) / r;
        assert!((1.0 - k.survival() - a * r).abs() < 1e-15);
        k.advance(1, true);
        let expected = (1.0 - a * r * r) * (1.0 - a * r);
        assert!((k.survival() - expected).abs() < 1e-15);
        for g in 2..100 {
            k.advance(g, false);
        }
        assert!(k.pending.is_empty());
    }

    #[test]
    fn saturation_cap_limits_rate() {
        let mut cap = SaturationCap::new(Some(1e6), 1e9).unwrap();
        let kept = (0..10_000_000).filter(|_| cap.admit(true)).count();
        assert!((kept as f64 - 1e4).abs() <= 2.0, "{kept}");
    }

    #[test]
    fn validation_lists_keys() {
        let bad = SimConfig {
            n_gates: 0,
            ap_time_constant_s: 0.0,
            ..SimConfig::default()
        };
        let err = bad.validate().unwrap_err().to_string();
        assert!(
            err.contains("n_gates") && err.contains("ap_time_constant_s"),
            "{err}"
        );
    }
}

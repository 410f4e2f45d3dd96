//! Finite-key secure length of an efficient (biased-basis) decoy-state BB84
//! session, plus the infinite-key rate used for limit checks.
//!
//! Key is distilled from Z-basis signal detections. The X basis is used only
//! for the phase-error estimate. With `n` the number of Z-basis signal pulses
//! kept after sifting:
//!
//! ```text
//! s0L = n · e^{−μ_s} · Y0L
//! s1L = n · μ_s e^{−μ_s} · Y1L
//! ℓ   = ⌊ s0L + s1L·(1 − h(e1U)) − f·n_Z·h(E_Z) − log₂(2/ε_cor) − 2·log₂(1/ε_pa) ⌋₊
//! ```

pub mod decoy;
pub mod interval;

use serde::{Deserialize, Serialize};

pub use decoy::{
    bounds_from_inputs, decoy_bounds, sign_inspection_bounds, Corner, CornerAudit, DecoyBounds,
    DecoyInputs, Side,
};
pub use interval::{bernoulli_kl, frequency_interval, hoeffding_delta, Deviation, Interval};

use crate::detector::DetectorOperatingPoint;
use crate::error::{Error, Issue, Result};
use crate::link::{
    effective_yield, expected_session_counts, gain_total, qber, single_photon_error,
    system_efficiency, ChannelConfig, ProtocolConfig, SessionStatistics,
};

/// Number of parameter-estimation slots the estimation share is split over.
pub const ESTIMATION_USES: u32 = 8;

/// Split of the total security parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub epsilon_total: f64,
    pub epsilon_cor: f64,
    pub epsilon_pa: f64,
    /// Two-sided failure probability allowed for each confidence interval.
    pub epsilon_est_each: f64,
}

impl EpsilonBudget {
    /// `ε/4` for correctness, `ε/4` for privacy amplification, and the
    /// remaining `ε/2` over [`ESTIMATION_USES`] estimates.
    pub fn split(epsilon_total: f64) -> Self {
        Self {
            epsilon_total,
            epsilon_cor: epsilon_total / 4.0,
            epsilon_pa: epsilon_total / 4.0,
            epsilon_est_each: epsilon_total / 2.0 / ESTIMATION_USES as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        for (key, v) in [
            ("epsilon_cor", self.epsilon_cor),
            ("epsilon_pa", self.epsilon_pa),
            ("epsilon_est_each", self.epsilon_est_each),
        ] {
            if !(v > 0.0) {
                issues.push(Issue::new(key, "must be > 0"));
            }
        }
        let used =
            self.epsilon_cor + self.epsilon_pa + ESTIMATION_USES as f64 * self.epsilon_est_each;
        if used > self.epsilon_total * (1.0 + 1e-12) {
            issues.push(Issue::new("epsilon_total", "shares exceed the total"));
        }
        crate::error::check(issues)
    }
}

impl Default for EpsilonBudget {
    fn default() -> Self {
        Self::split(1e-10)
    }
}

/// Which X-basis error data bounds the single-photon error rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    /// Decoy-intensity X data only.
    Decoy,
    /// The tighter of the decoy- and signal-intensity bounds, per corner.
    #[default]
    DecoyOrSignal,
}

/// Statistical options of the finite-key analysis, as they appear in config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiniteKeyOptions {
    pub deviation: Deviation,
    pub error_source: ErrorSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeySettings {
    pub budget: EpsilonBudget,
    pub deviation: Deviation,
    pub error_source: ErrorSource,
}

impl FiniteKeySettings {
    pub fn new(protocol: &ProtocolConfig, options: FiniteKeyOptions) -> Self {
        Self {
            budget: EpsilonBudget::split(protocol.epsilon),
            deviation: options.deviation,
            error_source: options.error_source,
        }
    }

    pub fn options(&self) -> FiniteKeyOptions {
        FiniteKeyOptions {
            deviation: self.deviation,
            error_source: self.error_source,
        }
    }
}

impl Default for FiniteKeySettings {
    fn default() -> Self {
        Self::new(&ProtocolConfig::default(), FiniteKeyOptions::default())
    }
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy of {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

fn h(x: f64) -> f64 {
    binary_entropy(x.clamp(0.0, 1.0)).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroKeyReason {
    NoDetections,
    /// Single-photon yield bound not positive.
    SingleYieldNotPositive,
    /// Phase error bound at or above 1/2.
    PhaseErrorTooHigh,
    /// Costs exceed the extractable entropy.
    LengthNotPositive,
}

impl ZeroKeyReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::NoDetections => "no_detections",
            Self::SingleYieldNotPositive => "single_yield_not_positive",
            Self::PhaseErrorTooHigh => "phase_error_too_high",
            Self::LengthNotPositive => "length_not_positive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyAudit {
    pub z_signal_sent: f64,
    pub z_signal_detections: f64,
    pub z_signal_qber: f64,
    pub correctness_bits: f64,
    pub privacy_amplification_bits: f64,
    /// Length before flooring and clamping.
    pub unclamped_length_bits: f64,
    pub bounds: Option<DecoyBounds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecureKeyResult {
    pub s0_lower: f64,
    pub s1_lower: f64,
    pub phase_error_upper: f64,
    pub ec_leak_bits: f64,
    pub secure_length_bits: f64,
    pub secure_rate_bps: f64,
    pub reason: Option<ZeroKeyReason>,
    pub audit: KeyAudit,
}

impl SecureKeyResult {
    fn zero(reason: ZeroKeyReason, audit: KeyAudit) -> Self {
        Self {
            s0_lower: 0.0,
            s1_lower: 0.0,
            phase_error_upper: audit.bounds.map_or(0.5, |b| b.e1_upper),
            ec_leak_bits: 0.0,
            secure_length_bits: 0.0,
            secure_rate_bps: 0.0,
            reason: Some(reason),
            audit,
        }
    }
}

/// Secure key length from session statistics and decoy bounds.
///
/// Zero-key outcomes are returned as a result with `secure_length_bits = 0`
/// and a [`ZeroKeyReason`].
pub fn secure_key_length(
    stats: &SessionStatistics,
    bounds: &DecoyBounds,
    protocol: &ProtocolConfig,
    settings: &FiniteKeySettings,
) -> SecureKeyResult {
    let z = &stats.signal.z;
    let budget = &settings.budget;
    let correctness_bits = (2.0 / budget.epsilon_cor).log2();
    let pa_bits = 2.0 * (1.0 / budget.epsilon_pa).log2();
    let mut audit = KeyAudit {
        z_signal_sent: z.sent_pulses,
        z_signal_detections: z.detections,
        z_signal_qber: z.qber(),
        correctness_bits,
        privacy_amplification_bits: pa_bits,
        unclamped_length_bits: 0.0,
        bounds: Some(*bounds),
    };
    if !(z.detections > 0.0) {
        return SecureKeyResult::zero(ZeroKeyReason::NoDetections, audit);
    }
    if bounds.aborted || !(bounds.y1_lower > 0.0) {
        return SecureKeyResult::zero(ZeroKeyReason::SingleYieldNotPositive, audit);
    }
    let phase = bounds.e1_upper;
    if phase >= 0.5 {
        return SecureKeyResult::zero(ZeroKeyReason::PhaseErrorTooHigh, audit);
    }

    let mu = protocol.intensities.signal;
    let vacuum_share = (-mu).exp();
    let s0 = z.sent_pulses * vacuum_share * bounds.y0_lower;
    let s1 = z.sent_pulses * mu * vacuum_share * bounds.y1_lower;
    let leak = protocol.ec_efficiency_f * z.detections * h(z.qber());
    let raw = s0 + s1 * (1.0 - h(phase)) - leak - correctness_bits - pa_bits;
    audit.unclamped_length_bits = raw;
    let length = raw.floor().max(0.0);
    SecureKeyResult {
        s0_lower: s0,
        s1_lower: s1,
        phase_error_upper: phase,
        ec_leak_bits: leak,
        secure_length_bits: length,
        secure_rate_bps: length / protocol.session_s,
        reason: (length <= 0.0).then_some(ZeroKeyReason::LengthNotPositive),
        audit,
    }
}

/// Expected counts → decoy bounds → key length, all on the analytic path.
pub fn expected_key(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
    settings: &FiniteKeySettings,
) -> Result<(SessionStatistics, SecureKeyResult)> {
    let stats = expected_session_counts(protocol, channel, op);
    let bounds = decoy_bounds(&stats, protocol, settings)?;
    let key = secure_key_length(&stats, &bounds, protocol, settings);
    Ok((stats, key))
}

/// Infinite-key rate in bit/s with the true model yields,
/// `clock · p_s · p_z² · [Q_0 + Q_1·(1 − h(e_1)) − f·Q_s·h(E_s)]`, clamped at 0.
pub fn asymptotic_rate(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
) -> f64 {
    let eta = system_efficiency(channel, op);
    let mu = protocol.intensities.signal;
    let e_d = protocol.intrinsic_error_e_d;
    let q_tot = gain_total(mu, eta, op).q_tot;
    if !(q_tot > 0.0) {
        return 0.0;
    }
    let e_s = qber(mu, eta, op, e_d).unwrap_or(0.5);
    let q0 = (-mu).exp() * effective_yield(0, eta, op);
    let q1 = mu * (-mu).exp() * effective_yield(1, eta, op);
    let e1 = single_photon_error(eta, op, e_d);
    let p_z = protocol.basis_probs.p_z;
    let per_pulse = q0 + q1 * (1.0 - h(e1)) - protocol.ec_efficiency_f * q_tot * h(e_s);
    (protocol.clock_hz * protocol.send_probs.signal * p_z * p_z * per_pulse).max(0.0)
}

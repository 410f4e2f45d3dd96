//! Fiber channel, protocol parameters and the analytic gain/QBER model.
//!
//! A pulse of mean photon number `μ` reaching a two-APD receiver through a
//! system transmittance `η` clicks with probability
//!
//! ```text
//! Y_0   = 1 − (1 − P_d)²
//! Q_det = 1 − (1 − Y_0) · exp(−η μ)
//! Q_tot = Q_det · (1 + P_a)
//! ```
//!
//! Afterpulses inflate the count multiplicatively and carry a random bit.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorOperatingPoint;
use crate::error::{check, Error, Issue, Result};

/// Error probability of a click carrying no information.
pub const RANDOM_ERROR: f64 = 0.5;

/// Intrinsic (optical misalignment) error probability, fixed by matching the
/// 50 km / 20 °C / 20 min finite-key rate to 1.26 Mbit/s with every other
/// parameter at its default. Regenerate with
/// [`crate::experiments::calibrate_intrinsic_error`].
pub const DEFAULT_INTRINSIC_ERROR: f64 = 0.027_581_05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Signal,
    Decoy,
    Vacuum,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Signal, Intensity::Decoy, Intensity::Vacuum];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];
}

/// One value per intensity, serialised as `[signal, decoy, vacuum]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct PerIntensity {
    pub signal: f64,
    pub decoy: f64,
    pub vacuum: f64,
}

impl From<[f64; 3]> for PerIntensity {
    fn from([signal, decoy, vacuum]: [f64; 3]) -> Self {
        Self {
            signal,
            decoy,
            vacuum,
        }
    }
}

impl From<PerIntensity> for [f64; 3] {
    fn from(p: PerIntensity) -> Self {
        [p.signal, p.decoy, p.vacuum]
    }
}

impl Index<Intensity> for PerIntensity {
    type Output = f64;

    fn index(&self, k: Intensity) -> &f64 {
        match k {
            Intensity::Signal => &self.signal,
            Intensity::Decoy => &self.decoy,
            Intensity::Vacuum => &self.vacuum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisProbs {
    pub p_z: f64,
    pub p_x: f64,
}

impl BasisProbs {
    pub fn get(&self, b: Basis) -> f64 {
        match b {
            Basis::Z => self.p_z,
            Basis::X => self.p_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    /// Connector and receiver losses on top of the fiber.
    pub extra_loss_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            length_km: 50.0,
            attenuation_db_per_km: 0.2,
            extra_loss_db: 0.1,
        }
    }
}

impl ChannelConfig {
    pub fn with_length(self, length_km: f64) -> Self {
        Self { length_km, ..self }
    }

    pub fn total_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.length_km + self.extra_loss_db
    }

    pub fn issues(&self, prefix: &str) -> Vec<Issue> {
        let mut out = Vec::new();
        for (key, v) in [
            ("length_km", self.length_km),
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("extra_loss_db", self.extra_loss_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(Issue::new(
                    format!("{prefix}{key}"),
                    "must be finite and >= 0",
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues(""))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Mean photon numbers per pulse.
    pub intensities: PerIntensity,
    pub send_probs: PerIntensity,
    pub basis_probs: BasisProbs,
    /// Total security parameter.
    pub epsilon: f64,
    pub session_s: f64,
    pub clock_hz: f64,
    pub ec_efficiency_f: f64,
    pub intrinsic_error_e_d: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            intensities: [0.42, 0.042, 0.0007].into(),
            send_probs: [0.9883, 0.0078, 0.0039].into(),
            basis_probs: BasisProbs {
                p_z: 15.0 / 16.0,
                p_x: 1.0 / 16.0,
            },
            epsilon: 1e-10,
            session_s: 1200.0,
            clock_hz: 1e9,
            ec_efficiency_f: 1.16,
            intrinsic_error_e_d: DEFAULT_INTRINSIC_ERROR,
        }
    }
}

impl ProtocolConfig {
    pub fn with_session(self, session_s: f64) -> Self {
        Self { session_s, ..self }
    }

    pub fn with_intrinsic_error(self, e_d: f64) -> Self {
        Self {
            intrinsic_error_e_d: e_d,
            ..self
        }
    }

    pub fn total_pulses(&self) -> f64 {
        self.clock_hz * self.session_s
    }

    pub fn issues(&self, prefix: &str) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut bad = |key: &str, msg: &str| out.push(Issue::new(format!("{prefix}{key}"), msg));

        let sp = self.send_probs;
        if [sp.signal, sp.decoy, sp.vacuum]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            bad("send_probs", "each probability must lie in [0, 1]");
        } else if ((sp.signal + sp.decoy + sp.vacuum) - 1.0).abs() > 1e-6 {
            bad("send_probs", "must sum to 1 within 1e-6");
        }
        let mu = self.intensities;
        if !(mu.signal > mu.decoy && mu.decoy > mu.vacuum && mu.vacuum >= 0.0)
            || !mu.signal.is_finite()
        {
            bad("intensities", "require signal > decoy > vacuum >= 0");
        }
        let bp = self.basis_probs;
        if !(bp.p_z > 0.0 && bp.p_x > 0.0) || (bp.p_z + bp.p_x - 1.0).abs() > 1e-12 {
            bad("basis_probs", "require p_z, p_x > 0 with p_z + p_x = 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bad("epsilon", "must lie in (0, 1)");
        }
        if !(self.session_s > 0.0 && self.session_s.is_finite()) {
            bad("session_s", "must be > 0");
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            bad("clock_hz", "must be > 0");
        }
        if !(self.ec_efficiency_f >= 1.0 && self.ec_efficiency_f.is_finite()) {
            bad("ec_efficiency_f", "must be >= 1");
        }
        if !(0.0..=RANDOM_ERROR).contains(&self.intrinsic_error_e_d) {
            bad("intrinsic_error_e_d", "must lie in [0, 0.5]");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues(""))
    }
}

/// Channel transmittance `10^(−(αL + extra)/10)`.
pub fn transmittance(channel: &ChannelConfig) -> f64 {
    10f64.powf(-channel.total_loss_db() / 10.0)
}

/// End-to-end detection efficiency of a single photon.
pub fn system_efficiency(channel: &ChannelConfig, op: &DetectorOperatingPoint) -> f64 {
    transmittance(channel) * op.efficiency
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    /// Click probability from light and dark counts.
    pub q_det: f64,
    /// Expected counts per pulse including afterpulses.
    pub q_tot: f64,
}

pub fn gain_total(mu: f64, eta_sys: f64, op: &DetectorOperatingPoint) -> Gain {
    let y0 = op.background_yield();
    let q_det = 1.0 - (1.0 - y0) * (-eta_sys * mu).exp();
    Gain {
        q_det,
        q_tot: q_det * (1.0 + op.afterpulse_prob),
    }
}

/// Quantum bit error rate of intensity `mu`.
///
/// Dark counts and afterpulses err with probability 1/2, photon clicks with
/// `e_d`.
pub fn qber(mu: f64, eta_sys: f64, op: &DetectorOperatingPoint, e_d: f64) -> Result<f64> {
    let g = gain_total(mu, eta_sys, op);
    if !(g.q_tot > 0.0) {
        return Err(Error::UndefinedQber);
    }
    let y0 = op.background_yield();
    let photon = -(-eta_sys * mu).exp_m1();
    let errors = RANDOM_ERROR * y0 + e_d * photon + RANDOM_ERROR * op.afterpulse_prob * g.q_det;
    Ok(errors / g.q_tot)
}

/// Effective `n`-photon yield, `(1 + P_a)·[1 − (1 − Y_0)(1 − η)ⁿ]`.
pub fn effective_yield(n: u32, eta_sys: f64, op: &DetectorOperatingPoint) -> f64 {
    let y0 = op.background_yield();
    (1.0 + op.afterpulse_prob) * (1.0 - (1.0 - y0) * (1.0 - eta_sys).powi(n as i32))
}

/// Error rate of single-photon pulses under the same error decomposition as
/// [`qber`].
pub fn single_photon_error(eta_sys: f64, op: &DetectorOperatingPoint, e_d: f64) -> f64 {
    let y0 = op.background_yield();
    let y1 = effective_yield(1, eta_sys, op);
    if y1 <= 0.0 {
        return RANDOM_ERROR;
    }
    let q_det1 = 1.0 - (1.0 - y0) * (1.0 - eta_sys);
    (RANDOM_ERROR * y0 + e_d * eta_sys + RANDOM_ERROR * op.afterpulse_prob * q_det1) / y1
}

/// Sent, detected and erroneous counts for one intensity in one basis.
///
/// `sent_pulses` counts pulses where both parties chose this basis, so
/// `detections / sent_pulses` is the gain of the sifted data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub sent_pulses: f64,
    pub detections: f64,
    pub errors: f64,
}

impl Counts {
    pub fn gain(&self) -> f64 {
        if self.sent_pulses > 0.0 {
            self.detections / self.sent_pulses
        } else {
            0.0
        }
    }

    pub fn qber(&self) -> f64 {
        if self.detections > 0.0 {
            self.errors / self.detections
        } else {
            0.0
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sent_pulses: self.sent_pulses * factor,
            detections: self.detections * factor,
            errors: self.errors * factor,
        }
    }

    fn add(&mut self, other: &Counts) {
        self.sent_pulses += other.sent_pulses;
        self.detections += other.detections;
        self.errors += other.errors;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisCounts {
    pub z: Counts,
    pub x: Counts,
}

impl BasisCounts {
    pub fn get(&self, b: Basis) -> &Counts {
        match b {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        }
    }

    pub fn get_mut(&mut self, b: Basis) -> &mut Counts {
        match b {
            Basis::Z => &mut self.z,
            Basis::X => &mut self.x,
        }
    }
}

/// Sifted per-intensity, per-basis statistics of one session.
///
/// Counts are real-valued: the analytic path stores expectations and the
/// Monte Carlo path stores integers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionStatistics {
    pub signal: BasisCounts,
    pub decoy: BasisCounts,
    pub vacuum: BasisCounts,
}

impl SessionStatistics {
    pub fn get(&self, k: Intensity) -> &BasisCounts {
        match k {
            Intensity::Signal => &self.signal,
            Intensity::Decoy => &self.decoy,
            Intensity::Vacuum => &self.vacuum,
        }
    }

    pub fn get_mut(&mut self, k: Intensity) -> &mut BasisCounts {
        match k {
            Intensity::Signal => &mut self.signal,
            Intensity::Decoy => &mut self.decoy,
            Intensity::Vacuum => &mut self.vacuum,
        }
    }

    pub fn cell(&self, k: Intensity, b: Basis) -> &Counts {
        self.get(k).get(b)
    }

    pub fn cells(&self) -> impl Iterator<Item = (Intensity, Basis, &Counts)> {
        Intensity::ALL
            .into_iter()
            .flat_map(move |k| Basis::ALL.into_iter().map(move |b| (k, b, self.cell(k, b))))
    }

    /// Elementwise sum; used to merge Monte Carlo blocks.
    pub fn merge(&mut self, other: &SessionStatistics) {
        for k in Intensity::ALL {
            for b in Basis::ALL {
                self.get_mut(k).get_mut(b).add(other.cell(k, b));
            }
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut issues = Vec::new();
        for (k, b, c) in self.cells() {
            if !(c.errors >= 0.0 && c.errors <= c.detections && c.detections <= c.sent_pulses) {
                issues.push(Issue::new(
                    format!("{k:?}.{b:?}"),
                    "require 0 <= errors <= detections <= sent_pulses",
                ));
            }
        }
        check(issues)
    }
}

/// Expected sifted counts of a session under the analytic model.
pub fn expected_session_counts(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
) -> SessionStatistics {
    let eta = system_efficiency(channel, op);
    let total = protocol.total_pulses();
    let mut stats = SessionStatistics::default();
    for k in Intensity::ALL {
        let mu = protocol.intensities[k];
        let g = gain_total(mu, eta, op);
        let e = qber(mu, eta, op, protocol.intrinsic_error_e_d).unwrap_or(0.0);
        for b in Basis::ALL {
            let pb = protocol.basis_probs.get(b);
            let sent = total * protocol.send_probs[k] * pb * pb;
            let detections = sent * g.q_tot;
            *stats.get_mut(k).get_mut(b) = Counts {
                sent_pulses: sent,
                detections,
                errors: detections * e,
            };
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn op(pd: f64, pa: f64, eff: f64) -> DetectorOperatingPoint {
        DetectorOperatingPoint::new(20.0, pd, pa, eff).unwrap()
    }

    #[test]
    fn transmittance_examples() {
        let lossless = ChannelConfig {
            length_km: 0.0,
            attenuation_db_per_km: 0.2,
            extra_loss_db: 0.0,
        };
        assert_eq!(transmittance(&lossless), 1.0);
        let c = ChannelConfig::default();
        assert_relative_eq!(transmittance(&c), 10f64.powf(-1.01), max_relative = 1e-14);
        assert_relative_eq!(transmittance(&c), 0.09772, max_relative = 1e-4);
        assert_relative_eq!(
            transmittance(&c.with_length(100.0)),
            9.772e-3,
            max_relative = 1e-4
        );
    }

    #[test]
    fn gain_examples() {
        let g = gain_total(0.0, 0.3, &op(0.0, 0.0, 0.25));
        assert_eq!((g.q_det, g.q_tot), (0.0, 0.0));

        let g = gain_total(0.5, 0.1, &op(1e-3, 0.0, 0.25));
        assert_relative_eq!(
            g.q_det,
            1.0 - 0.998001 * (-0.05f64).exp(),
            max_relative = 1e-12
        );
        // Quoted value 0.050673 is the closed form rounded up in the last digit.
        assert!((g.q_det - 0.050673).abs() < 2e-6);

        let g = gain_total(0.42, 0.024431, &op(5.9e-5, 0.028, 0.25));
        assert_relative_eq!(g.q_det, 0.010326, max_relative = 2e-4);
        assert_relative_eq!(g.q_tot, 0.010615, max_relative = 2e-4);
    }

    #[test]
    fn qber_examples() {
        assert_eq!(qber(0.42, 0.1, &op(0.0, 0.0, 0.25), 0.0).unwrap(), 0.0);
        assert_relative_eq!(qber(0.42, 0.0, &op(1e-5, 0.0, 0.25), 0.01).unwrap(), 0.5);
        let e = qber(0.42, 0.024431, &op(5.9e-5, 0.028, 0.25), 0.01).unwrap();
        assert_relative_eq!(e, 0.0288, max_relative = 5e-3);
        assert!(matches!(
            qber(0.42, 0.0, &op(0.0, 0.0, 0.25), 0.01),
            Err(Error::UndefinedQber)
        ));
    }

    #[test]
    fn session_count_examples() {
        let p = ProtocolConfig::default();
        assert_relative_eq!(p.total_pulses(), 1.2e12);
        let s = expected_session_counts(&p, &ChannelConfig::default(), &op(5.9e-5, 0.028, 0.25));
        let vac = s.vacuum.z.sent_pulses + s.vacuum.x.sent_pulses;
        let pz2 = (15.0f64 / 16.0).powi(2);
        let px2 = (1.0f64 / 16.0).powi(2);
        assert_relative_eq!(vac, 0.0039 * 1.2e12 * (pz2 + px2), max_relative = 1e-12);
        assert_relative_eq!(s.signal.z.detections, 1.107e10, max_relative = 1e-3);
        s.check_invariants().unwrap();
    }

    #[test]
    fn afterpulse_ratio_is_exact() {
        let g = gain_total(0.42, 0.02, &op(5.9e-5, 0.0, 0.25));
        assert_eq!(g.q_tot, g.q_det);
        let g = gain_total(0.42, 0.02, &op(5.9e-5, 0.0389, 0.25));
        assert_relative_eq!(g.q_tot / g.q_det, 1.0389, max_relative = 1e-15);
    }

    #[test]
    fn poisson_mixture_of_yields_matches_gain() {
        // Σ_n Poisson(n; μ) · Y_n^eff, truncated once the tail mass is < 1e-12.
        for &(mu, eta, pd, pa) in &[
            (0.42, 0.024431, 5.9e-5, 0.0282),
            (0.042, 0.3, 1e-3, 0.0389),
            (0.0007, 0.9, 3.1e-6, 0.03),
            (2.0, 0.5, 1e-4, 0.01),
        ] {
            let o = op(pd, pa, 0.25);
            let mut term = (-mu as f64).exp();
            let (mut mass, mut sum, mut n) = (0.0, 0.0, 0u32);
            while mass < 1.0 - 1e-12 {
                sum += term * effective_yield(n, eta, &o);
                mass += term;
                n += 1;
                term *= mu / n as f64;
            }
            let q = gain_total(mu, eta, &o).q_tot;
            assert_relative_eq!(sum, q, max_relative = 1e-6);
        }
    }

    #[test]
    fn counts_scale_linearly() {
        let o = op(5.9e-5, 0.028, 0.25);
        let c = ChannelConfig::default();
        let p = ProtocolConfig::default();
        let base = expected_session_counts(&p, &c, &o);
        let long = expected_session_counts(&p.with_session(3.0 * p.session_s), &c, &o);
        let fast = expected_session_counts(&ProtocolConfig { clock_hz: 2e9, ..p }, &c, &o);
        for (k, b, cnt) in base.cells() {
            let l = long.cell(k, b);
            let f = fast.cell(k, b);
            assert_relative_eq!(l.detections, 3.0 * cnt.detections, max_relative = 1e-12);
            assert_relative_eq!(f.errors, 2.0 * cnt.errors, max_relative = 1e-12);
        }
    }

    #[test]
    fn protocol_validation() {
        ProtocolConfig::default().validate().unwrap();
        let bad = ProtocolConfig {
            send_probs: [0.5, 0.5, 0.5].into(),
            ..ProtocolConfig::default()
        };
        match bad.validate() {
            Err(Error::Validation(issues)) => assert_eq!(issues[0].key, "send_probs"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = ProtocolConfig {
            intensities: [0.1, 0.2, 0.0].into(),
            epsilon: 1.0,
            ..ProtocolConfig::default()
        };
        let Err(Error::Validation(issues)) = bad.validate() else {
            panic!()
        };
        assert_eq!(issues.len(), 2);
    }

    proptest! {
        #[test]
        fn gain_is_monotone(mu in 0.0f64..1.0, eta in 0.0f64..1.0, pd in 0.0f64..0.01, d in 1e-6f64..0.1) {
            let o = op(pd, 0.03, 0.25);
            let g = gain_total(mu, eta, &o).q_det;
            prop_assert!(gain_total(mu + d, eta, &o).q_det >= g);
            prop_assert!(gain_total(mu, (eta + d).min(1.0), &o).q_det >= g);
            prop_assert!(gain_total(mu, eta, &op(pd + d * 0.01, 0.03, 0.25)).q_det >= g);
        }

        #[test]
        fn qber_is_bounded(mu in 1e-4f64..1.0, eta in 0.0f64..1.0, pd in 1e-7f64..1e-3,
                           pa in 0.0f64..0.1, frac in 0.0f64..=1.0) {
            // Photon/dark coincidences enter the numerator twice, so the bound
            // E <= 1/2 holds for e_d <= (1 - Y_0)/2.
            let o = op(pd, pa, 0.25);
            let e_d = frac * 0.5 * (1.0 - o.background_yield());
            let e = qber(mu, eta, &o, e_d).unwrap();
            prop_assert!((0.0..=0.5 + 1e-12).contains(&e));
        }
    }
}

//! Gate-by-gate simulation of a decoy BB84 session.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{block_rng, run_blocks, AfterpulseKernel, AfterpulseMode, SaturationCap, SimConfig};
use crate::detector::DetectorOperatingPoint;
use crate::error::Result;
use crate::link::{
    system_efficiency, Basis, ChannelConfig, Counts, Intensity, ProtocolConfig, SessionStatistics,
};

/// `[intensity][basis] = (sent, detections, errors)`.
type Tally = [[[u64; 3]; 2]; 3];

/// Simulates `sim.n_gates` pulses of a session.
///
/// Per gate: the intensity follows `send_probs` (resolved to 2⁻³²) and both
/// parties pick bases independently (resolved to 2⁻¹⁶). The pulse clicks with probability `1 − e^{−ημ}` and lands
/// on the wrong detector with probability `e_d`; each of the two detectors
/// also dark-fires with `P_d`. Double clicks get a fair random bit.
/// Afterpulses follow `sim.afterpulse_mode`. Only matching-basis gates are
/// tallied.
pub fn simulate_qkd_session(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
    sim: &SimConfig,
) -> Result<SessionStatistics> {
    protocol.validate()?;
    channel.validate()?;
    op.validate()?;
    sim.validate()?;
    let eta = system_efficiency(channel, op);
    let photon = Intensity::ALL.map(|k| -(-protocol.intensities[k] * eta).exp_m1());
    let tallies = run_blocks(sim, |b, start, len| {
        let mut gen = Generator {
            rng: block_rng(sim.seed, b),
            protocol,
            op,
            photon,
            kernel: match sim.afterpulse_mode {
                AfterpulseMode::Kernel => Some(AfterpulseKernel::new(op, sim)),
                AfterpulseMode::SamePulse => None,
            },
            cap: SaturationCap::new(sim.saturation_cap_hz, op.gate_rate_hz),
        };
        gen.run(start, len)
    });
    let mut total: Tally = Default::default();
    for t in &tallies {
        for k in 0..3 {
            for b in 0..2 {
                for f in 0..3 {
                    total[k][b][f] += t[k][b][f];
                }
            }
        }
    }
    let mut stats = SessionStatistics::default();
    for k in Intensity::ALL {
        for (bi, b) in Basis::ALL.into_iter().enumerate() {
            let [sent, det, err] = total[k.index()][bi];
            *stats.get_mut(k).get_mut(b) = Counts {
                sent_pulses: sent as f64,
                detections: det as f64,
                errors: err as f64,
            };
        }
    }
    Ok(stats)
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    protocol: &'a ProtocolConfig,
    op: &'a DetectorOperatingPoint,
    photon: [f64; 3],
    kernel: Option<AfterpulseKernel>,
    cap: Option<SaturationCap>,
}

impl Generator<'_> {
    fn run(&mut self, start: u64, len: u64) -> Tally {
        let mut tally: Tally = Default::default();
        let sp = self.protocol.send_probs;
        // Intensity from the top 32 bits of one draw, each basis from 16 bits.
        let cut32 = |p: f64| (p * 4_294_967_296.0).round() as u64;
        let (c_signal, c_decoy) = (cut32(sp.signal), cut32(sp.signal + sp.decoy));
        let z_cut = (self.protocol.basis_probs.p_z * 65_536.0).round() as u64;
        let e_d = self.protocol.intrinsic_error_e_d;
        let pd = self.op.dark_count_prob;
        let pa = self.op.afterpulse_prob;
        let y0 = 1.0 - (1.0 - pd) * (1.0 - pd);
        // Given at least one dark click: P(one specific detector only).
        let single = if y0 > 0.0 { pd * (1.0 - pd) / y0 } else { 0.5 };
        let fire = self.photon.map(|p| 1.0 - (1.0 - p) * (1.0 - y0));
        let same_pulse = self.kernel.is_none() && pa > 0.0;

        for g in start..start + len {
            let rng = &mut self.rng;
            let bits: u64 = rng.random();
            let top = bits >> 32;
            let k = if top < c_signal {
                0
            } else if top < c_decoy {
                1
            } else {
                2
            };
            let alice_z = (bits >> 16) & 0xffff < z_cut;
            let bob_z = bits & 0xffff < z_cut;

            // Fired detectors: `right` carries the sent bit, `wrong` its flip.
            let (mut right, mut wrong) = (false, false);
            let u: f64 = rng.random();
            if u < fire[k] {
                let photon = self.photon[k];
                let (dark_r, dark_w) = if u < photon {
                    if rng.random::<f64>() < e_d {
                        wrong = true;
                    } else {
                        right = true;
                    }
                    let w: f64 = rng.random();
                    if w < y0 {
                        split_dark(w / y0, single)
                    } else {
                        (false, false)
                    }
                } else {
                    split_dark((u - photon) / (fire[k] - photon), single)
                };
                right |= dark_r;
                wrong |= dark_w;
            }
            if let Some(kernel) = &self.kernel {
                if kernel.is_active() && rng.random::<f64>() >= kernel.survival() {
                    if rng.random::<bool>() {
                        right = true;
                    } else {
                        wrong = true;
                    }
                }
            }
            let avalanche = right || wrong;
            let mut detections = 0u64;
            let mut errors = 0u64;
            if avalanche {
                detections = 1;
                errors = u64::from(if right && wrong {
                    rng.random::<bool>()
                } else {
                    wrong
                });
                if same_pulse && rng.random::<f64>() < pa {
                    detections += 1;
                    errors += u64::from(rng.random::<bool>());
                }
            }
            if let Some(kernel) = &mut self.kernel {
                kernel.advance(g, avalanche);
            }
            if let Some(cap) = &mut self.cap {
                if !cap.admit(avalanche) {
                    detections = 0;
                    errors = 0;
                }
            }
            if alice_z == bob_z {
                let cell = &mut tally[k][usize::from(!alice_z)];
                cell[0] += 1;
                cell[1] += detections;
                cell[2] += errors;
            }
        }
        tally
    }
}

/// Which detectors dark-fire, given that at least one does; `v` is uniform
/// on `[0, 1)`.
fn split_dark(v: f64, single: f64) -> (bool, bool) {
    if v < single {
        (true, false)
    } else if v < 2.0 * single {
        (false, true)
    } else {
        (true, true)
    }
}

/// Exact vacuum and single-photon yields and single-photon error rate of
/// the same-pulse generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTruth {
    pub y0: f64,
    pub y1: f64,
    pub e1: f64,
}

pub fn generator_truth(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
) -> GeneratorTruth {
    let eta = system_efficiency(channel, op);
    let e_d = protocol.intrinsic_error_e_d;
    let pd = op.dark_count_prob;
    let pa = op.afterpulse_prob;
    let boost = 1.0 + pa;
    let y0_click = 1.0 - (1.0 - pd) * (1.0 - pd);
    // Error of a dark-only gate: wrong detector alone, or both with a coin.
    let dark_error = pd * (1.0 - pd) + 0.5 * pd * pd;
    let y1_click = 1.0 - (1.0 - eta) * (1.0 - pd) * (1.0 - pd);
    let y1_error =
        (1.0 - eta) * dark_error + eta * (1.0 - e_d) * 0.5 * pd + eta * e_d * (1.0 - 0.5 * pd);
    GeneratorTruth {
        y0: boost * y0_click,
        y1: boost * y1_click,
        e1: if y1_click > 0.0 {
            (y1_error + 0.5 * pa * y1_click) / (boost * y1_click)
        } else {
            0.5
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{effective_yield, single_photon_error};

    #[test]
    fn noiseless_session_has_no_errors() {
        let op = DetectorOperatingPoint::new(20.0, 0.0, 0.0, 0.25).unwrap();
        let protocol = ProtocolConfig::default().with_intrinsic_error(0.0);
        let sim = SimConfig::default().with_gates(300_000);
        let s = simulate_qkd_session(&protocol, &ChannelConfig::default(), &op, &sim).unwrap();
        assert!(s.cells().all(|(_, _, c)| c.errors == 0.0));
        assert!(s.signal.z.detections > 0.0);
        s.check_invariants().unwrap();
    }

    #[test]
    fn truth_matches_analytic_yields() {
        let op = DetectorOperatingPoint::new(20.0, 5.9e-5, 0.0282, 0.25).unwrap();
        let protocol = ProtocolConfig::default();
        let channel = ChannelConfig::default();
        let t = generator_truth(&protocol, &channel, &op);
        let eta = system_efficiency(&channel, &op);
        assert!((t.y0 / effective_yield(0, eta, &op) - 1.0).abs() < 1e-12);
        assert!((t.y1 / effective_yield(1, eta, &op) - 1.0).abs() < 1e-12);
        // The analytic decomposition counts photon+dark coincidences twice.
        let analytic = single_photon_error(eta, &op, protocol.intrinsic_error_e_d);
        assert!(t.e1 < analytic && t.e1 > 0.99 * analytic);
    }

    #[test]
    fn same_seed_same_statistics() {
        let op = DetectorOperatingPoint::new(20.0, 1e-3, 0.05, 0.25).unwrap();
        let sim = SimConfig {
            block_size: 10_000,
            afterpulse_mode: AfterpulseMode::Kernel,
            ..SimConfig::default().with_gates(55_555)
        };
        let p = ProtocolConfig::default();
        let c = ChannelConfig::default();
        let a = simulate_qkd_session(&p, &c, &op, &sim).unwrap();
        let b = simulate_qkd_session(&p, &c, &op, &sim).unwrap();
        assert_eq!(a, b);
        let other = simulate_qkd_session(&p, &c, &op, &sim.with_seed(7)).unwrap();
        assert_ne!(a, other);
        let sifted: f64 = a.cells().map(|(_, _, c)| c.sent_pulses).sum();
        assert!(sifted <= 55_555.0);
    }
}

//! Detector characterization: a weak laser fires on one gate per period and
//! the click histogram over gate phase separates photon, dark and afterpulse
//! counts.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{block_rng, run_blocks, AfterpulseKernel, SimConfig};
use crate::detector::DetectorOperatingPoint;
use crate::error::{check, Error, Issue, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateHistogram {
    /// Clicks per gate position within the laser period; index 0 is lit.
    pub counts_by_phase: Vec<u64>,
    pub total_gates: u64,
    /// Clicks in a laser-off run of `total_gates` gates.
    pub dark_run_counts: u64,
}

impl GateHistogram {
    pub fn period(&self) -> u64 {
        self.counts_by_phase.len() as u64
    }

    /// Number of gates that fell on phase `k`.
    pub fn gates_in_bin(&self, k: u64) -> u64 {
        let p = self.period();
        self.total_gates / p + u64::from(k < self.total_gates % p)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.counts_by_phase.is_empty() {
            issues.push(Issue::new("counts_by_phase", "must not be empty"));
        }
        let sum: u64 = self.counts_by_phase.iter().sum();
        if sum > self.total_gates {
            issues.push(Issue::new("counts_by_phase", "sum exceeds total_gates"));
        }
        if self.dark_run_counts > self.total_gates {
            issues.push(Issue::new("dark_run_counts", "exceeds total_gates"));
        }
        check(issues)
    }
}

/// Simulates the lit run and the laser-off run of a characterization.
///
/// Lit gates (global index ≡ 0 mod period) see `1 − e^{−μη}` photon trigger
/// probability. Every gate sees `P_d` and the afterpulse kernel of all
/// earlier avalanches, including afterpulse cascades.
pub fn simulate_characterization_run(
    sim: &SimConfig,
    op: &DetectorOperatingPoint,
) -> Result<GateHistogram> {
    sim.validate()?;
    op.validate()?;
    let period = sim.illumination_period;
    let photon = -(-sim.mu_per_pulse * op.efficiency).exp_m1();
    let parts = run_blocks(sim, |b, start, len| {
        let lit = run_block(sim, op, 2 * b, start, len, period, photon);
        let dark = run_block(sim, op, 2 * b + 1, start, len, period, 0.0);
        (lit, dark.iter().sum::<u64>())
    });
    let mut counts = vec![0u64; period as usize];
    let mut dark_run_counts = 0;
    for (lit, dark) in parts {
        for (c, x) in counts.iter_mut().zip(lit) {
            *c += x;
        }
        dark_run_counts += dark;
    }
    Ok(GateHistogram {
        counts_by_phase: counts,
        total_gates: sim.n_gates,
        dark_run_counts,
    })
}

fn run_block(
    sim: &SimConfig,
    op: &DetectorOperatingPoint,
    stream: u64,
    start: u64,
    len: u64,
    period: u64,
    photon: f64,
) -> Vec<u64> {
    let mut rng = block_rng(sim.seed, stream);
    let mut kernel = AfterpulseKernel::new(op, sim);
    let mut counts = vec![0u64; period as usize];
    let no_dark = 1.0 - op.dark_count_prob;
    let mut phase = start % period;
    for g in start..start + len {
        let light = if phase == 0 { 1.0 - photon } else { 1.0 };
        let quiet = light * no_dark * kernel.survival();
        let click = rng.random::<f64>() >= quiet;
        if click {
            counts[phase as usize] += 1;
        }
        kernel.advance(g, click);
        phase += 1;
        if phase == period {
            phase = 0;
        }
    }
    counts
}

/// Histogram of expected counts (rounded) for a detector without
/// afterpulsing.
pub fn expected_histogram(sim: &SimConfig, op: &DetectorOperatingPoint) -> GateHistogram {
    let photon = -(-sim.mu_per_pulse * op.efficiency).exp_m1();
    let pd = op.dark_count_prob;
    let mut h = GateHistogram {
        counts_by_phase: vec![0; sim.illumination_period as usize],
        total_gates: sim.n_gates,
        dark_run_counts: (sim.n_gates as f64 * pd).round() as u64,
    };
    for k in 0..h.period() {
        let p = if k == 0 {
            1.0 - (1.0 - photon) * (1.0 - pd)
        } else {
            pd
        };
        h.counts_by_phase[k as usize] = (h.gates_in_bin(k) as f64 * p).round() as u64;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationEstimate {
    pub p_d_hat: f64,
    pub p_a_hat: f64,
    pub eta_hat: f64,
    pub p_d_sigma: f64,
    pub p_a_sigma: f64,
    pub eta_sigma: f64,
    /// Lit-bin clicks minus the dark expectation.
    pub photon_clicks: f64,
    /// Unlit-bin clicks minus the dark expectation.
    pub afterpulse_clicks: f64,
}

/// Background-subtracted estimates of dark count probability, afterpulse
/// ratio and detection efficiency from a characterization histogram.
///
/// ```text
/// p_d  = dark_run_counts / total_gates
/// N_ph = c_0 − p_d·n_0
/// N_ap = Σ_{k≥1} (c_k − p_d·n_k)
/// p_a  = N_ap · P/(P−1) / N_ph
/// η    = −ln(1 − N_ph/(n_0·(1 − p_d))) / μ
/// ```
///
/// `P/(P−1)` restores the afterpulses that land in the lit bin.
/// Uncertainties are binomial, propagated to first order.
pub fn estimate_characterization(
    hist: &GateHistogram,
    mu: f64,
) -> Result<CharacterizationEstimate> {
    hist.check_invariants()?;
    if hist.total_gates == 0 {
        return Err(Error::InsufficientData("histogram has no gates".into()));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mean photon number {mu}")));
    }
    let period = hist.period();
    let total = hist.total_gates as f64;
    let dark = hist.dark_run_counts as f64;
    let p_d = dark / total;
    let var_p_d = dark.max(1.0) * (1.0 - p_d) / (total * total);

    let n0 = hist.gates_in_bin(0) as f64;
    let c0 = hist.counts_by_phase[0] as f64;
    let photon_clicks = c0 - p_d * n0;
    if !(photon_clicks > 0.0) {
        return Err(Error::NoSignal(format!(
            "lit bin holds {c0} clicks against {:.3} expected dark clicks",
            p_d * n0
        )));
    }
    let var_photon = c0.max(1.0) * (1.0 - c0 / n0) + n0 * n0 * var_p_d;

    let unlit_gates = total - n0;
    let unlit_counts: f64 = hist.counts_by_phase[1..].iter().map(|&c| c as f64).sum();
    let afterpulse_clicks = unlit_counts - p_d * unlit_gates;
    let var_ap = unlit_counts.max(1.0) + unlit_gates * unlit_gates * var_p_d;

    let fold = if period > 1 {
        period as f64 / (period - 1) as f64
    } else {
        0.0
    };
    let p_a = (afterpulse_clicks * fold / photon_clicks).max(0.0);
    let p_a_sigma = fold / photon_clicks
        * (var_ap + (afterpulse_clicks / photon_clicks).powi(2) * var_photon).sqrt();

    // Exact inversion of 1 − (1 − p_ph)(1 − p_d) for the lit-bin click rate.
    let frac = photon_clicks / (n0 * (1.0 - p_d));
    if frac >= 1.0 {
        return Err(Error::Domain("lit bin saturated".into()));
    }
    let eta = -(-frac).ln_1p() / mu;
    let eta_sigma = var_photon.sqrt() / (n0 * (1.0 - p_d) * (1.0 - frac) * mu);

    Ok(CharacterizationEstimate {
        p_d_hat: p_d,
        p_a_hat: p_a,
        eta_hat: eta,
        p_d_sigma: var_p_d.sqrt(),
        p_a_sigma,
        eta_sigma,
        photon_clicks,
        afterpulse_clicks,
    })
}

/// Writes `phase_index,counts` rows.
pub fn write_histogram_csv<W: Write>(hist: &GateHistogram, mut out: W) -> std::io::Result<()> {
    writeln!(out, "phase_index,counts")?;
    for (k, c) in hist.counts_by_phase.iter().enumerate() {
        writeln!(out, "{k},{c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(pd: f64, pa: f64, eff: f64) -> DetectorOperatingPoint {
        DetectorOperatingPoint::new(20.0, pd, pa, eff).unwrap()
    }

    #[test]
    fn silent_detector_never_clicks() {
        let sim = SimConfig::default().with_gates(200_000);
        let h = simulate_characterization_run(&sim, &op(0.0, 0.0, 0.0)).unwrap();
        assert!(h.counts_by_phase.iter().all(|&c| c == 0));
        assert_eq!(h.dark_run_counts, 0);
        assert!(matches!(
            estimate_characterization(&h, 0.1),
            Err(Error::NoSignal(_))
        ));
    }

    #[test]
    fn dark_run_is_binomial() {
        let sim = SimConfig::default().with_gates(1_000_000);
        let h = simulate_characterization_run(&sim, &op(1e-3, 0.0, 0.25)).unwrap();
        let d = h.dark_run_counts as f64;
        assert!((d - 1000.0).abs() <= 126.0, "{d}");
    }

    #[test]
    fn estimator_inverts_noiseless_histogram() {
        let sim = SimConfig::default().with_gates(1 << 50);
        let o = op(5.9e-5, 0.0, 0.25);
        let e = estimate_characterization(&expected_histogram(&sim, &o), 0.1).unwrap();
        assert!((e.eta_hat / 0.25 - 1.0).abs() <= 1e-6, "{}", e.eta_hat);
        // Only count rounding remains.
        assert!(e.p_a_hat <= 1e-9, "{}", e.p_a_hat);
        assert!((e.p_d_hat / 5.9e-5 - 1.0).abs() <= 1e-6);
        assert!(e.p_d_sigma > 0.0 && e.p_a_sigma > 0.0 && e.eta_sigma > 0.0);
    }

    #[test]
    fn gates_per_bin() {
        let h = GateHistogram {
            counts_by_phase: vec![0; 4],
            total_gates: 10,
            dark_run_counts: 0,
        };
        let n: Vec<u64> = (0..4).map(|k| h.gates_in_bin(k)).collect();
        assert_eq!(n, vec![3, 3, 2, 2]);
    }

    #[test]
    fn block_layout_does_not_change_phases() {
        // Phases follow the global gate index, so the lit bin gets the same
        // number of gates for any block size.
        let o = op(0.0, 0.0, 1.0);
        let base = SimConfig {
            mu_per_pulse: 50.0,
            illumination_period: 7,
            ..SimConfig::default().with_gates(1000)
        };
        for block_size in [1, 3, 64, 1000] {
            let h = simulate_characterization_run(&SimConfig { block_size, ..base }, &o).unwrap();
            assert_eq!(h.counts_by_phase[0], h.gates_in_bin(0));
            assert_eq!(h.counts_by_phase[1..].iter().sum::<u64>(), 0);
        }
    }

    #[test]
    fn csv_layout() {
        let h = GateHistogram {
            counts_by_phase: vec![5, 0, 2],
            total_gates: 9,
            dark_run_counts: 1,
        };
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "phase_index,counts\n0,5\n1,0\n2,2\n"
        );
    }
}

//! Sweeps, cross-over and cut-off finders, operating-point selection and
//! the intrinsic-error calibration.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorOperatingPoint, TemperatureModel};
use crate::error::{check, Error, Issue, Result};
use crate::finite_key::{
    decoy_bounds, secure_key_length, FiniteKeySettings, SecureKeyResult, ZeroKeyReason,
};
use crate::link::{expected_session_counts, ChannelConfig, ProtocolConfig, SessionStatistics};
use crate::sim::{simulate_qkd_session, SimConfig};

/// Resolution of the distance finders.
pub const DISTANCE_TOLERANCE_KM: f64 = 0.1;
/// Default search bracket of [`find_crossover`].
pub const CROSSOVER_BRACKET_KM: (f64, f64) = (10.0, 90.0);
/// Default search bracket of [`find_cutoff`].
pub const CUTOFF_BRACKET_KM: (f64, f64) = (0.0, 150.0);
/// Rate the calibration targets, bit/s at 50 km and 20 °C.
pub const CALIBRATION_TARGET_BPS: f64 = 1.26e6;

/// Where session statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    /// Expected counts of the analytic model.
    #[default]
    Analytic,
    /// Monte Carlo over `n_gates` gates, scaled up to the session length.
    MonteCarlo(SimConfig),
}

impl StatsSource {
    pub fn statistics(
        &self,
        protocol: &ProtocolConfig,
        channel: &ChannelConfig,
        op: &DetectorOperatingPoint,
    ) -> Result<SessionStatistics> {
        match self {
            Self::Analytic => Ok(expected_session_counts(protocol, channel, op)),
            Self::MonteCarlo(sim) => {
                let raw = simulate_qkd_session(protocol, channel, op, sim)?;
                let factor = protocol.total_pulses() / sim.n_gates as f64;
                let mut scaled = SessionStatistics::default();
                for (k, b, c) in raw.cells() {
                    *scaled.get_mut(k).get_mut(b) = c.scaled(factor);
                }
                Ok(scaled)
            }
        }
    }
}

/// Everything needed to turn an operating point and a channel into a rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Evaluator {
    pub protocol: ProtocolConfig,
    pub settings: FiniteKeySettings,
    pub source: StatsSource,
}

impl Evaluator {
    pub fn new(protocol: ProtocolConfig, settings: FiniteKeySettings) -> Self {
        Self {
            protocol,
            settings,
            source: StatsSource::Analytic,
        }
    }

    pub fn with_source(self, source: StatsSource) -> Self {
        Self { source, ..self }
    }

    pub fn key(
        &self,
        channel: &ChannelConfig,
        op: &DetectorOperatingPoint,
    ) -> Result<(SessionStatistics, SecureKeyResult)> {
        let stats = self.source.statistics(&self.protocol, channel, op)?;
        let bounds = decoy_bounds(&stats, &self.protocol, &self.settings)?;
        let key = secure_key_length(&stats, &bounds, &self.protocol, &self.settings);
        Ok((stats, key))
    }

    pub fn rate(&self, channel: &ChannelConfig, op: &DetectorOperatingPoint) -> Result<f64> {
        Ok(self.key(channel, op)?.1.secure_rate_bps)
    }

    pub fn row(
        &self,
        variable: f64,
        channel: &ChannelConfig,
        op: &DetectorOperatingPoint,
    ) -> Result<SweepRow> {
        let (stats, key) = self.key(channel, op)?;
        Ok(SweepRow {
            variable,
            pd: op.dark_count_prob,
            pa: op.afterpulse_prob,
            q_signal: stats.signal.z.gain(),
            qber_signal: stats.signal.z.qber(),
            secure_rate_bps: key.secure_rate_bps,
            reason: key.reason,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: f64,
    pub pd: f64,
    pub pa: f64,
    pub q_signal: f64,
    pub qber_signal: f64,
    pub secure_rate_bps: f64,
    pub reason: Option<ZeroKeyReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Name of the independent variable, with unit suffix.
    pub variable: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn variables(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.variable).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.secure_rate_bps).collect()
    }

    /// `(max − min) / max` of the secure rate over all rows.
    pub fn max_relative_variation(&self) -> f64 {
        let rates = self.rates();
        let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            (max - min) / max
        } else {
            0.0
        }
    }

    /// Least-squares slope of `log10(rate)` against the variable over rows
    /// with `lo <= variable <= hi` and positive rate.
    pub fn log10_slope(&self, lo: f64, hi: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.variable >= lo && r.variable <= hi && r.secure_rate_bps > 0.0)
            .map(|r| (r.variable, r.secure_rate_bps.log10()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// Writes `variable,pd,pa,q_signal,qber_signal,secure_rate_bps,reason`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "variable,pd,pa,q_signal,qber_signal,secure_rate_bps,reason"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.variable,
                r.pd,
                r.pa,
                r.q_signal,
                r.qber_signal,
                r.secure_rate_bps,
                r.reason.map_or("", |z| z.code())
            )?;
        }
        Ok(())
    }
}

/// `lo, lo + step, …` up to `hi` inclusive (with a small slack for rounding).
pub fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::Domain(format!("range [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// One row per temperature at a fixed channel.
pub fn sweep_temperature(
    range_c: (f64, f64),
    step_c: f64,
    channel: &ChannelConfig,
    eval: &Evaluator,
    model: &TemperatureModel,
    efficiency: f64,
) -> Result<SweepResult> {
    let temps = grid(range_c.0, range_c.1, step_c)?;
    let rows = temps
        .par_iter()
        .map(|&t| {
            let op = model.operating_point(t, efficiency)?;
            eval.row(t, channel, &op)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        variable: "temperature_c".into(),
        rows,
    })
}

/// One row per fiber length at a fixed operating point.
pub fn sweep_distance(
    range_km: (f64, f64),
    step_km: f64,
    base: &ChannelConfig,
    eval: &Evaluator,
    op: &DetectorOperatingPoint,
) -> Result<SweepResult> {
    if range_km.0 < 0.0 {
        return Err(Error::Domain(format!("negative length {}", range_km.0)));
    }
    let lengths = grid(range_km.0, range_km.1, step_km)?;
    let rows = lengths
        .par_iter()
        .map(|&l| eval.row(l, &base.with_length(l), op))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        variable: "length_km".into(),
        rows,
    })
}

/// `(S_hot − S_cold) / S_hot` per row; `None` where `S_hot = 0`.
pub fn relative_change(hot: &SweepResult, cold: &SweepResult) -> Result<Vec<(f64, Option<f64>)>> {
    if hot.rows.len() != cold.rows.len() {
        return Err(Error::GridMismatch(format!(
            "{} rows against {}",
            hot.rows.len(),
            cold.rows.len()
        )));
    }
    hot.rows
        .iter()
        .zip(&cold.rows)
        .map(|(h, c)| {
            if (h.variable - c.variable).abs() > 1e-9 {
                return Err(Error::GridMismatch(format!(
                    "{} against {}",
                    h.variable, c.variable
                )));
            }
            let s = h.secure_rate_bps;
            Ok((h.variable, (s > 0.0).then(|| (s - c.secure_rate_bps) / s)))
        })
        .collect()
}

/// Shortest fiber length at which the cold detector overtakes the hot one.
///
/// The bracket is scanned in 1 km steps for the first sign change of
/// `S_hot − S_cold`, which is then bisected to [`DISTANCE_TOLERANCE_KM`].
pub fn find_crossover(
    eval: &Evaluator,
    channel: &ChannelConfig,
    hot: &DetectorOperatingPoint,
    cold: &DetectorOperatingPoint,
    bracket_km: (f64, f64),
) -> Result<f64> {
    let diff = |l: f64| -> Result<f64> {
        let c = channel.with_length(l);
        Ok(eval.rate(&c, hot)? - eval.rate(&c, cold)?)
    };
    let (lo, hi) = bracket_km;
    let mut scan = grid(lo, hi, 1.0)?;
    if scan.last() != Some(&hi) {
        scan.push(hi);
    }
    let values = scan
        .par_iter()
        .map(|&l| diff(l))
        .collect::<Result<Vec<_>>>()?;
    let start = values[0];
    let change = (start != 0.0)
        .then(|| {
            values
                .iter()
                .position(|&d| d.signum() != start.signum() || d == 0.0)
        })
        .flatten();
    let Some(i) = change else {
        let diagnostic = if values.iter().all(|&d| d == 0.0) {
            "curves coincide"
        } else if values.iter().all(|&d| d <= 0.0) {
            "cold always higher"
        } else {
            "hot always higher"
        };
        return Err(Error::CrossoverNotFound {
            lo_km: lo,
            hi_km: hi,
            diagnostic: diagnostic.into(),
        });
    };
    let (mut a, mut b) = (scan[i - 1], scan[i]);
    while b - a > DISTANCE_TOLERANCE_KM {
        let m = 0.5 * (a + b);
        let d = diff(m)?;
        if d.signum() == start.signum() && d != 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// [`find_crossover`] between two temperatures of a model.
pub fn find_crossover_between(
    eval: &Evaluator,
    channel: &ChannelConfig,
    model: &TemperatureModel,
    t_hot_c: f64,
    t_cold_c: f64,
    efficiency: f64,
) -> Result<f64> {
    let hot = model.operating_point(t_hot_c, efficiency)?;
    let cold = model.operating_point(t_cold_c, efficiency)?;
    find_crossover(eval, channel, &hot, &cold, CROSSOVER_BRACKET_KM)
}

/// Largest fiber length with a positive secure rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    Within(f64),
    /// Rate still positive at the far end of the bracket.
    BeyondBracket(f64),
}

impl Cutoff {
    pub fn km(self) -> f64 {
        match self {
            Self::Within(l) | Self::BeyondBracket(l) => l,
        }
    }
}

impl std::fmt::Display for Cutoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Within(l) => write!(f, "{l:.1}"),
            Self::BeyondBracket(l) => write!(f, ">{l}"),
        }
    }
}

/// Bisects the edge between positive and zero rate to
/// [`DISTANCE_TOLERANCE_KM`] and returns the positive side.
pub fn find_cutoff(
    eval: &Evaluator,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
    bracket_km: (f64, f64),
) -> Result<Cutoff> {
    let (lo, hi) = bracket_km;
    let rate = |l: f64| eval.rate(&channel.with_length(l), op);
    if !(rate(lo)? > 0.0) {
        return Err(Error::Bracket(lo));
    }
    if rate(hi)? > 0.0 {
        return Ok(Cutoff::BeyondBracket(hi));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > DISTANCE_TOLERANCE_KM {
        let m = 0.5 * (a + b);
        if rate(m)? > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Cutoff::Within(a))
}

/// Candidate detector settings at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatingPointTable {
    pub entries: Vec<DetectorOperatingPoint>,
}

impl OperatingPointTable {
    pub fn issues(&self, prefix: &str) -> Vec<Issue> {
        if self.entries.is_empty() {
            return vec![Issue::new(
                prefix.trim_end_matches('.'),
                "must not be empty",
            )];
        }
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(i, op)| op.issues(&format!("{prefix}{i}.")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues("operating_points."))
    }
}

/// Illustrative efficiency/dark-count trade-off at 20 °C. Lower bias gives
/// lower efficiency and fewer dark counts; afterpulsing is held fixed.
pub fn illustrative_table() -> OperatingPointTable {
    let entries = [
        (0.25, 5.9e-5),
        (0.20, 2.9e-5),
        (0.15, 1.2e-5),
        (0.10, 4.0e-6),
    ]
    .into_iter()
    .map(|(eff, pd)| DetectorOperatingPoint::new(20.0, pd, 0.028, eff).expect("valid entry"))
    .collect();
    OperatingPointTable { entries }
}

/// Long-distance reproduction: one-hour sessions with the illustrative table.
pub fn long_distance_preset(protocol: &ProtocolConfig) -> (ProtocolConfig, OperatingPointTable) {
    (protocol.with_session(3600.0), illustrative_table())
}

/// Exhaustive search for the highest-rate entry; ties go to higher efficiency.
pub fn optimize_operating_point(
    table: &OperatingPointTable,
    channel: &ChannelConfig,
    eval: &Evaluator,
) -> Result<(DetectorOperatingPoint, SecureKeyResult)> {
    table.validate()?;
    let results = table
        .entries
        .par_iter()
        .map(|op| Ok((*op, eval.key(channel, op)?.1)))
        .collect::<Result<Vec<_>>>()?;
    let best = results
        .into_iter()
        .reduce(|best, cand| {
            let (rb, rc) = (best.1.secure_rate_bps, cand.1.secure_rate_bps);
            if rc > rb || (rc == rb && cand.0.efficiency > best.0.efficiency) {
                cand
            } else {
                best
            }
        })
        .expect("table is not empty");
    Ok(best)
}

/// Intrinsic error `e_d` at which the finite-key rate equals `target_bps`.
///
/// The rate falls monotonically with `e_d`; bisection on `[0, 0.5]` runs
/// until the bracket is narrower than `1e-10`.
pub fn calibrate_intrinsic_error(
    target_bps: f64,
    eval: &Evaluator,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
) -> Result<f64> {
    let rate = |e_d: f64| {
        let mut e = *eval;
        e.protocol.intrinsic_error_e_d = e_d;
        e.rate(channel, op)
    };
    let (mut lo, mut hi) = (0.0, 0.5);
    if rate(lo)? < target_bps {
        return Err(Error::Bracket(lo));
    }
    while hi - lo > 1e-10 {
        let m = 0.5 * (lo + hi);
        if rate(m)? >= target_bps {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

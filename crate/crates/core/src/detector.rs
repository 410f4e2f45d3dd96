//! Detector operating points and the temperature dependence of dark counts
//! and afterpulsing.
//!
//! Dark counts follow an exponential law and afterpulsing a linear law in
//! temperature, both anchored at a reference temperature:
//!
//! ```text
//! P_d(T) = dark_ref · exp(dark_gamma · (T − ref_temp_c))
//! P_a(T) = max(0, ap_intercept + ap_slope · (T − ref_temp_c))
//! ```
//!
//! The default coefficients pass exactly through the characterised values at
//! −30 °C and 20 °C.

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Issue, Result};

/// Detector gating frequency used throughout, in Hz.
pub const DEFAULT_GATE_RATE_HZ: f64 = 1.0e9;
/// Detection efficiency of the characterised APDs.
pub const DEFAULT_EFFICIENCY: f64 = 0.25;
/// Timing jitter, kept as metadata only.
pub const DEFAULT_JITTER_S: f64 = 60.0e-12;

/// Characterised anchor points: (temperature °C, P_d per gate, P_a).
pub const COLD_ANCHOR: (f64, f64, f64) = (-30.0, 3.1e-6, 0.0389);
pub const ROOM_ANCHOR: (f64, f64, f64) = (20.0, 5.9e-5, 0.0282);

/// Noise state of one detector pair at one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorOperatingPoint {
    pub temperature_c: f64,
    /// Dark count probability per gate, per APD.
    pub dark_count_prob: f64,
    /// Afterpulse counts per detected photon count.
    pub afterpulse_prob: f64,
    pub efficiency: f64,
    pub gate_rate_hz: f64,
    /// Not used by any rate computation.
    #[serde(default = "default_jitter")]
    pub jitter_s: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER_S
}

impl DetectorOperatingPoint {
    pub fn new(
        temperature_c: f64,
        dark_count_prob: f64,
        afterpulse_prob: f64,
        efficiency: f64,
    ) -> Result<Self> {
        let op = Self {
            temperature_c,
            dark_count_prob,
            afterpulse_prob,
            efficiency,
            gate_rate_hz: DEFAULT_GATE_RATE_HZ,
            jitter_s: DEFAULT_JITTER_S,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn issues(&self, prefix: &str) -> Vec<Issue> {
        let mut out = Vec::new();
        if !(0.0..1.0).contains(&self.dark_count_prob) {
            out.push(Issue::new(
                format!("{prefix}dark_count_prob"),
                "must lie in [0, 1)",
            ));
        }
        if !(0.0..1.0).contains(&self.afterpulse_prob) {
            out.push(Issue::new(
                format!("{prefix}afterpulse_prob"),
                "must lie in [0, 1)",
            ));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            out.push(Issue::new(
                format!("{prefix}efficiency"),
                "must lie in [0, 1]",
            ));
        }
        if !(self.gate_rate_hz > 0.0) || !self.gate_rate_hz.is_finite() {
            out.push(Issue::new(format!("{prefix}gate_rate_hz"), "must be > 0"));
        }
        if !self.temperature_c.is_finite() {
            out.push(Issue::new(
                format!("{prefix}temperature_c"),
                "must be finite",
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues(""))
    }

    /// Two-detector zero-photon yield, `1 − (1 − P_d)²`.
    pub fn background_yield(&self) -> f64 {
        let q = 1.0 - self.dark_count_prob;
        1.0 - q * q
    }
}

/// Exponential dark-count law and linear afterpulse law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureModel {
    /// P_d at `ref_temp_c`.
    pub dark_ref: f64,
    /// Exponential coefficient, K⁻¹.
    pub dark_gamma: f64,
    pub ref_temp_c: f64,
    /// P_a at `ref_temp_c`.
    pub ap_intercept: f64,
    /// P_a change per kelvin.
    pub ap_slope: f64,
    /// Inclusive `[min, max]` range in °C where the laws may be evaluated.
    pub valid_range_c: [f64; 2],
}

impl Default for TemperatureModel {
    fn default() -> Self {
        let (t_cold, pd_cold, pa_cold) = COLD_ANCHOR;
        let (t_room, pd_room, pa_room) = ROOM_ANCHOR;
        let span = t_room - t_cold;
        Self {
            dark_ref: pd_room,
            dark_gamma: (pd_room / pd_cold).ln() / span,
            ref_temp_c: t_room,
            ap_intercept: pa_room,
            ap_slope: (pa_room - pa_cold) / span,
            valid_range_c: [t_cold, t_room],
        }
    }
}

impl TemperatureModel {
    pub fn issues(&self, prefix: &str) -> Vec<Issue> {
        let mut out = Vec::new();
        let [lo, hi] = self.valid_range_c;
        if !(self.dark_ref > 0.0) || !self.dark_ref.is_finite() {
            out.push(Issue::new(format!("{prefix}dark_ref"), "must be > 0"));
        }
        if !self.dark_gamma.is_finite() {
            out.push(Issue::new(format!("{prefix}dark_gamma"), "must be finite"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            out.push(Issue::new(
                format!("{prefix}valid_range_c"),
                "must be a finite [min, max] with min <= max",
            ));
            return out;
        }
        // Linear law: checking the range ends covers the whole interval.
        for t in [lo, hi] {
            let pa = self.ap_intercept + self.ap_slope * (t - self.ref_temp_c);
            if !(0.0..1.0).contains(&pa) {
                out.push(Issue::new(
                    format!("{prefix}ap_intercept"),
                    format!("afterpulse law gives {pa} at {t} °C, outside [0, 1)"),
                ));
                break;
            }
        }
        for t in [lo, hi] {
            let pd = self.dark_ref * (self.dark_gamma * (t - self.ref_temp_c)).exp();
            if !(pd < 1.0) {
                out.push(Issue::new(
                    format!("{prefix}dark_gamma"),
                    format!("dark count law gives {pd} at {t} °C, outside [0, 1)"),
                ));
                break;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues(""))
    }

    fn ensure_in_range(&self, temp_c: f64) -> Result<()> {
        let [min_c, max_c] = self.valid_range_c;
        if temp_c.is_finite() && temp_c >= min_c && temp_c <= max_c {
            Ok(())
        } else {
            Err(Error::TemperatureOutOfRange {
                temp_c,
                min_c,
                max_c,
            })
        }
    }

    /// Builds the operating point at `temp_c` with the given efficiency and the
    /// default gate rate.
    pub fn operating_point(&self, temp_c: f64, efficiency: f64) -> Result<DetectorOperatingPoint> {
        DetectorOperatingPoint::new(
            temp_c,
            dark_count_at(temp_c, self)?,
            afterpulse_at(temp_c, self)?,
            efficiency,
        )
    }
}

/// Dark count probability per gate at `temp_c`.
pub fn dark_count_at(temp_c: f64, model: &TemperatureModel) -> Result<f64> {
    model.ensure_in_range(temp_c)?;
    Ok(model.dark_ref * (model.dark_gamma * (temp_c - model.ref_temp_c)).exp())
}

/// Afterpulse probability at `temp_c`, clamped at zero.
pub fn afterpulse_at(temp_c: f64, model: &TemperatureModel) -> Result<f64> {
    model.ensure_in_range(temp_c)?;
    Ok((model.ap_intercept + model.ap_slope * (temp_c - model.ref_temp_c)).max(0.0))
}

/// Ordinary least-squares line through `(x, y)`; returns `(intercept, slope)`
/// where the intercept is the value at `x = 0`.
fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Fits both temperature laws to characterisation samples `(T °C, P_d, P_a)`.
///
/// The dark-count law is a straight line in `ln P_d`; the afterpulse law is a
/// straight line in `P_a`. The reference temperature is fixed at 20 °C and the
/// valid range is the span of the sample temperatures.
pub fn fit_temperature_model(samples: &[(f64, f64, f64)]) -> Result<TemperatureModel> {
    if let Some(&(t, pd, _)) = samples.iter().find(|s| !(s.1 > 0.0)) {
        return Err(Error::Domain(format!(
            "dark count probability must be > 0, got {pd} at {t} °C"
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.0), hi.max(s.0))
        });
    if samples.len() < 2 || !(hi > lo) {
        return Err(Error::InsufficientData(
            "need at least two distinct temperatures".into(),
        ));
    }

    let ref_temp_c = ROOM_ANCHOR.0;
    let xs: Vec<f64> = samples.iter().map(|s| s.0 - ref_temp_c).collect();
    let ln_pd: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let pa: Vec<f64> = samples.iter().map(|s| s.2).collect();

    let (ln_dark_ref, dark_gamma) = least_squares_line(&xs, &ln_pd);
    let (ap_intercept, ap_slope) = least_squares_line(&xs, &pa);

    let model = TemperatureModel {
        dark_ref: ln_dark_ref.exp(),
        dark_gamma,
        ref_temp_c,
        ap_intercept,
        ap_slope,
        valid_range_c: [lo, hi],
    };
    model.validate()?;
    Ok(model)
}

//! Vacuum + weak decoy bounds on the zero- and single-photon yields and the
//! single-photon error rate, worst-cased over the confidence box of the
//! observed gains.

use serde::{Deserialize, Serialize};

use super::interval::{frequency_interval, Interval};
use super::{ErrorSource, FiniteKeySettings};
use crate::error::{Error, Result};
use crate::link::{Intensity, PerIntensity, ProtocolConfig, SessionStatistics, RANDOM_ERROR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lo,
    Hi,
}

impl Side {
    const BOTH: [Side; 2] = [Side::Lo, Side::Hi];

    fn pick(self, iv: &Interval) -> f64 {
        match self {
            Side::Lo => iv.lo,
            Side::Hi => iv.hi,
        }
    }
}

/// One vertex of the confidence box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corner {
    pub signal: Side,
    pub decoy: Side,
    pub vacuum: Side,
    /// Side of the X-basis error rate; absent for bounds that do not use it.
    pub error: Option<Side>,
    /// Intensity whose X-basis error data produced `e1_upper`.
    pub error_intensity: Option<Intensity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerAudit {
    pub y0: Corner,
    pub y1: Corner,
    pub e1: Corner,
    pub y0_clamped: bool,
    pub y1_clamped: bool,
    pub e1_clamped: bool,
}

/// Decoy bounds for one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub y0_lower: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    /// `Y1L` was not positive in at least one corner: no key can be extracted.
    pub aborted: bool,
    pub corner_audit: CornerAudit,
}

/// Confidence intervals feeding the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyInputs {
    pub intensities: PerIntensity,
    /// Z-basis gains.
    pub signal_gain: Interval,
    pub decoy_gain: Interval,
    pub vacuum_gain: Interval,
    /// X-basis error rates.
    pub decoy_error: Interval,
    pub signal_error: Interval,
    pub error_source: ErrorSource,
}

impl DecoyInputs {
    pub fn from_stats(
        stats: &SessionStatistics,
        protocol: &ProtocolConfig,
        settings: &FiniteKeySettings,
    ) -> Result<Self> {
        let missing: Vec<_> = Intensity::ALL
            .into_iter()
            .filter(|&k| !(stats.get(k).z.sent_pulses > 0.0))
            .collect();
        if !missing.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no Z-basis pulses sent for {missing:?}"
            )));
        }
        let eps = settings.budget.epsilon_est_each;
        let dev = settings.deviation;
        let gain = |k: Intensity| {
            let c = &stats.get(k).z;
            frequency_interval(c.detections, c.sent_pulses, eps, dev)
        };
        let error = |k: Intensity| {
            let c = &stats.get(k).x;
            frequency_interval(c.errors, c.detections, eps, dev)
        };
        Ok(Self {
            intensities: protocol.intensities,
            signal_gain: gain(Intensity::Signal),
            decoy_gain: gain(Intensity::Decoy),
            vacuum_gain: gain(Intensity::Vacuum),
            decoy_error: error(Intensity::Decoy),
            signal_error: error(Intensity::Signal),
            error_source: settings.error_source,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct CornerValues {
    y0: f64,
    y1: f64,
    /// `None` when `y1 <= 0`.
    e1: Option<(f64, Intensity)>,
}

fn y0_formula(mu: &PerIntensity, q_d: f64, q_v: f64) -> f64 {
    let (d, v) = (mu.decoy, mu.vacuum);
    ((d * q_v * v.exp() - v * q_d * d.exp()) / (d - v)).max(0.0)
}

fn y1_formula(mu: &PerIntensity, q_s: f64, q_d: f64, y0: f64) -> f64 {
    let (s, d) = (mu.signal, mu.decoy);
    let s2 = s * s;
    let d2 = d * d;
    (s / (s * d - d2)) * (q_d * d.exp() - (d2 / s2) * q_s * s.exp() - ((s2 - d2) / s2) * y0)
}

fn e1_formula(e: f64, q: f64, mu: f64, y0: f64, y1: f64) -> f64 {
    (e * q * mu.exp() - RANDOM_ERROR * y0) / (y1 * mu)
}

fn evaluate(inputs: &DecoyInputs, corner: &Corner, error_side: Side) -> CornerValues {
    let mu = &inputs.intensities;
    let q_s = corner.signal.pick(&inputs.signal_gain);
    let q_d = corner.decoy.pick(&inputs.decoy_gain);
    let q_v = corner.vacuum.pick(&inputs.vacuum_gain);
    let y0 = y0_formula(mu, q_d, q_v);
    let y1 = y1_formula(mu, q_s, q_d, y0);
    let e1 = (y1 > 0.0).then(|| {
        let from_decoy = (
            e1_formula(error_side.pick(&inputs.decoy_error), q_d, mu.decoy, y0, y1),
            Intensity::Decoy,
        );
        match inputs.error_source {
            ErrorSource::Decoy => from_decoy,
            ErrorSource::DecoyOrSignal => {
                let from_signal = (
                    e1_formula(
                        error_side.pick(&inputs.signal_error),
                        q_s,
                        mu.signal,
                        y0,
                        y1,
                    ),
                    Intensity::Signal,
                );
                if from_signal.0 < from_decoy.0 {
                    from_signal
                } else {
                    from_decoy
                }
            }
        }
    });
    CornerValues { y0, y1, e1 }
}

fn corners() -> impl Iterator<Item = Corner> {
    Side::BOTH.into_iter().flat_map(|signal| {
        Side::BOTH.into_iter().flat_map(move |decoy| {
            Side::BOTH.into_iter().map(move |vacuum| Corner {
                signal,
                decoy,
                vacuum,
                error: None,
                error_intensity: None,
            })
        })
    })
}

fn finish(y0: (f64, Corner), y1: (f64, Corner), e1: (f64, Corner), aborted: bool) -> DecoyBounds {
    let y1c = y1.0.clamp(0.0, 1.0);
    let e1c = e1.0.clamp(0.0, 1.0);
    DecoyBounds {
        y0_lower: y0.0,
        y1_lower: y1c,
        e1_upper: e1c,
        aborted: aborted || !(y1c > 0.0),
        corner_audit: CornerAudit {
            y0: y0.1,
            y1: y1.1,
            e1: e1.1,
            // The vacuum formula clamps internally; flag a zero result.
            y0_clamped: y0.0 == 0.0,
            y1_clamped: y1c != y1.0,
            e1_clamped: e1c != e1.0,
        },
    }
}

/// Worst case over all `2³` gain corners and both error-rate ends.
pub fn bounds_from_inputs(inputs: &DecoyInputs) -> DecoyBounds {
    let mut y0 = (f64::INFINITY, Corner::default_lo());
    let mut y1 = (f64::INFINITY, Corner::default_lo());
    let mut e1 = (f64::NEG_INFINITY, Corner::default_lo());
    let mut aborted = false;
    for corner in corners() {
        for side in Side::BOTH {
            let v = evaluate(inputs, &corner, side);
            if v.y0 < y0.0 {
                y0 = (v.y0, corner);
            }
            if v.y1 < y1.0 {
                y1 = (v.y1, corner);
            }
            match v.e1 {
                Some((e, k)) if e > e1.0 => {
                    e1 = (
                        e,
                        Corner {
                            error: Some(side),
                            error_intensity: Some(k),
                            ..corner
                        },
                    );
                }
                Some(_) => {}
                None => {
                    aborted = true;
                    e1 = (
                        1.0,
                        Corner {
                            error: Some(side),
                            ..corner
                        },
                    );
                }
            }
        }
    }
    finish(y0, y1, e1, aborted)
}

/// Bounds from the single corner chosen by the signs of the partial
/// derivatives: `Q_d` high and `Q_v` low for `Y0L`; `Q_s` high, `Q_d` low and
/// `Q_v` high for `Y1L`; the `Y1L` corner with the error rate high for `e1U`.
pub fn sign_inspection_bounds(inputs: &DecoyInputs) -> DecoyBounds {
    let y0_corner = Corner {
        signal: Side::Lo,
        decoy: Side::Hi,
        vacuum: Side::Lo,
        error: None,
        error_intensity: None,
    };
    let y1_corner = Corner {
        signal: Side::Hi,
        decoy: Side::Lo,
        vacuum: Side::Hi,
        error: None,
        error_intensity: None,
    };
    let v0 = evaluate(inputs, &y0_corner, Side::Hi);
    let v1 = evaluate(inputs, &y1_corner, Side::Hi);
    let (e1, k, aborted) = match v1.e1 {
        Some((e, k)) => (e, Some(k), false),
        None => (1.0, None, true),
    };
    finish(
        (v0.y0, y0_corner),
        (v1.y1, y1_corner),
        (
            e1,
            Corner {
                error: Some(Side::Hi),
                error_intensity: k,
                ..y1_corner
            },
        ),
        aborted,
    )
}

impl Corner {
    fn default_lo() -> Self {
        Corner {
            signal: Side::Lo,
            decoy: Side::Lo,
            vacuum: Side::Lo,
            error: None,
            error_intensity: None,
        }
    }
}

/// Decoy bounds from session statistics: Z-basis gains for the yields, X-basis
/// error rates for `e1U`.
pub fn decoy_bounds(
    stats: &SessionStatistics,
    protocol: &ProtocolConfig,
    settings: &FiniteKeySettings,
) -> Result<DecoyBounds> {
    let inputs = DecoyInputs::from_stats(stats, protocol, settings)?;
    Ok(bounds_from_inputs(&inputs))
}

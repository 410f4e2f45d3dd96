//! Two-sided confidence intervals on an observed frequency.

use serde::{Deserialize, Serialize};

/// Half-width of the additive Hoeffding interval,
/// `δ = sqrt(ln(1/ε) / (2n))`.
///
/// The true mean of `n` i.i.d. trials bounded in `[0, 1]` lies within the
/// observed mean `± δ` except with probability at most `2ε`. Returns
/// `f64::INFINITY` when `n` is not positive.
pub fn hoeffding_delta(n_trials: f64, eps: f64) -> f64 {
    if !(n_trials > 0.0) {
        return f64::INFINITY;
    }
    ((1.0 / eps).ln() / (2.0 * n_trials)).sqrt()
}

/// Relative entropy `D(a ‖ b)` between Bernoulli distributions, in nats.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    // ln(a/b) = ln1p((a−b)/b) keeps precision when a ≈ b.
    let mut d = 0.0;
    if a > 0.0 {
        d += a * ((a - b) / b).ln_1p();
    }
    if a < 1.0 {
        d += (1.0 - a) * ((b - a) / (1.0 - b)).ln_1p();
    }
    d
}

/// How observed frequencies are widened into confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    /// Point estimates; no statistical widening.
    Off,
    /// `p̂ ± δ` with `δ` from [`hoeffding_delta`].
    Additive,
    /// Hoeffding's inequality in its relative-entropy form: all `p` with
    /// `n·D(p̂ ‖ p) ≤ ln(1/ε)`. Never wider than [`Deviation::Additive`].
    #[default]
    RelativeEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(p: f64) -> Self {
        Self { lo: p, hi: p }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Interval for the success probability after `successes` out of `trials`.
/// `eps` is the total two-sided failure probability; each tail gets `eps/2`.
pub fn frequency_interval(successes: f64, trials: f64, eps: f64, deviation: Deviation) -> Interval {
    if !(trials > 0.0) {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let p = (successes / trials).clamp(0.0, 1.0);
    let tail = eps / 2.0;
    match deviation {
        Deviation::Off => Interval::point(p),
        Deviation::Additive => {
            let d = hoeffding_delta(trials, tail);
            Interval {
                lo: (p - d).max(0.0),
                hi: (p + d).min(1.0),
            }
        }
        Deviation::RelativeEntropy => {
            let budget = (1.0 / tail).ln() / trials;
            Interval {
                lo: if p > 0.0 {
                    invert_kl(p, budget, 0.0, p)
                } else {
                    0.0
                },
                hi: if p < 1.0 {
                    invert_kl(p, budget, 1.0, p)
                } else {
                    1.0
                },
            }
        }
    }
}

/// Bisection for the point between `p` and `far` where `D(p ‖ ·)` reaches
/// `budget`; returns `far` if the divergence never gets there.
fn invert_kl(p: f64, budget: f64, far: f64, near: f64) -> f64 {
    // D(p‖far) is infinite for far ∈ {0, 1} unless p equals it.
    let (mut inside, mut outside) = (near, far);
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if bernoulli_kl(p, mid) > budget {
            outside = mid;
        } else {
            inside = mid;
        }
    }
    // `outside` is the conservative end.
    outside
}

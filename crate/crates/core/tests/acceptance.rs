//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::time::Instant;

use apd_qkd::experiments::{
    calibrate_intrinsic_error, find_crossover, find_cutoff, sweep_distance, sweep_temperature,
    Cutoff, Evaluator, CALIBRATION_TARGET_BPS, CROSSOVER_BRACKET_KM, CUTOFF_BRACKET_KM,
};
use apd_qkd::finite_key::{
    asymptotic_rate, binary_entropy, decoy_bounds, hoeffding_delta, FiniteKeySettings,
};
use apd_qkd::link::{
    gain_total, qber, system_efficiency, transmittance, Intensity, DEFAULT_INTRINSIC_ERROR,
};
use apd_qkd::sim::{
    estimate_characterization, generator_truth, simulate_characterization_run,
    simulate_qkd_session, SimConfig,
};
use apd_qkd::{ChannelConfig, DetectorOperatingPoint, ProtocolConfig, TemperatureModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn op_at(t: f64) -> DetectorOperatingPoint {
    TemperatureModel::default()
        .operating_point(t, 0.25)
        .unwrap()
}

fn eval() -> Evaluator {
    Evaluator::default()
}

fn rate(length_km: f64, t: f64) -> f64 {
    eval()
        .rate(&ChannelConfig::default().with_length(length_km), &op_at(t))
        .unwrap()
}

fn within_rel(x: f64, target: f64, tol: f64) -> bool {
    (x / target - 1.0).abs() <= tol
}

fn calibration() -> Outcome {
    let start = Instant::now();
    let e_d = calibrate_intrinsic_error(
        CALIBRATION_TARGET_BPS,
        &eval(),
        &ChannelConfig::default(),
        &op_at(20.0),
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut calibrated = eval();
    calibrated.protocol.intrinsic_error_e_d = e_d;
    let r = calibrated
        .rate(&ChannelConfig::default(), &op_at(20.0))
        .unwrap();
    let r_default = rate(50.0, 20.0);
    outcome(
        within_rel(r, 1.26e6, 0.02) && within_rel(r_default, 1.26e6, 0.02) && elapsed < 10.0,
        format!(
            "e_d = {e_d:.8} (shipped {DEFAULT_INTRINSIC_ERROR}), rate {r:.4e} bit/s, shipped rate {r_default:.4e} bit/s, {elapsed:.3} s"
        ),
    )
}

fn cooled_prediction() -> Outcome {
    let r = rate(50.0, -30.0);
    outcome(
        (1.14e6..=1.54e6).contains(&r),
        format!("50 km at -30 C: {r:.4e} bit/s, band [1.14e6, 1.54e6]"),
    )
}

fn temperature_flatness() -> Outcome {
    let s = sweep_temperature(
        (-30.0, 20.0),
        1.0,
        &ChannelConfig::default(),
        &eval(),
        &TemperatureModel::default(),
        0.25,
    )
    .unwrap();
    let v = s.max_relative_variation();
    outcome(
        v <= 0.15,
        format!("max relative variation {:.2}% (limit 15%)", 100.0 * v),
    )
}

fn crossover() -> Outcome {
    match find_crossover(
        &eval(),
        &ChannelConfig::default(),
        &op_at(20.0),
        &op_at(-30.0),
        CROSSOVER_BRACKET_KM,
    ) {
        Ok(x) => outcome(
            (25.0..=45.0).contains(&x),
            format!("cross-over at {x:.1} km, band [25, 45]"),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn cutoff() -> Outcome {
    let c = |t| {
        find_cutoff(
            &eval(),
            &ChannelConfig::default(),
            &op_at(t),
            CUTOFF_BRACKET_KM,
        )
        .unwrap()
    };
    let (hot, cold) = (c(20.0), c(-30.0));
    let hot_ok = matches!(hot, Cutoff::Within(l) if (85.0..=105.0).contains(&l));
    outcome(
        hot_ok && cold.km() > hot.km(),
        format!("20 C cut-off {hot} km (band [85, 105]), -30 C cut-off {cold} km"),
    )
}

fn distance_scaling() -> Outcome {
    let s = sweep_distance(
        (40.0, 65.0),
        1.0,
        &ChannelConfig::default(),
        &eval(),
        &op_at(20.0),
    )
    .unwrap();
    let slope = s.log10_slope(40.0, 65.0).unwrap_or(f64::NAN);
    let (r40, r65) = (rate(40.0, 20.0), rate(65.0, 20.0));
    let slope_ok = (slope + 0.020).abs() <= 0.004;
    let r40_ok = within_rel(r40, 1.79e6, 0.35);
    let r65_ok = within_rel(r65, 507e3, 0.35);
    outcome(
        slope_ok && r40_ok && r65_ok,
        format!(
            "slope {slope:.4}/km (want -0.020 +/- 0.004: {}), 40 km {r40:.4e} ({}), 65 km {r65:.4e} ({})",
            ok(slope_ok),
            ok(r40_ok),
            ok(r65_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "out"
    }
}

fn oracle_equivalence() -> Outcome {
    let protocol = ProtocolConfig::default();
    let channel = ChannelConfig::default();
    let op = op_at(20.0);
    let sim = SimConfig::default().with_gates(100_000_000).with_seed(42);
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_qkd_session(&protocol, &channel, &op, &sim).unwrap())
    };
    let start = Instant::now();
    let stats = simulate_qkd_session(&protocol, &channel, &op, &sim).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let deterministic = stats == in_pool(1) && stats == in_pool(3);

    let eta = system_efficiency(&channel, &op);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for k in Intensity::ALL {
        let c = stats.get(k);
        let sent = c.z.sent_pulses + c.x.sent_pulses;
        let det = c.z.detections + c.x.detections;
        let err = c.z.errors + c.x.errors;
        let mu = protocol.intensities[k];
        let q = gain_total(mu, eta, &op).q_tot;
        let e = qber(mu, eta, &op, protocol.intrinsic_error_e_d).unwrap();
        let zq = (det / sent - q) / (q * (1.0 - q) / sent).sqrt();
        let ze = if det > 0.0 {
            (err / det - e) / (e * (1.0 - e) / det).sqrt()
        } else {
            0.0
        };
        worst = worst.max(zq.abs()).max(ze.abs());
        parts.push(format!("{k:?} zQ {zq:+.2} zE {ze:+.2}"));
    }
    outcome(
        worst <= 4.0 && elapsed < 60.0 && deterministic,
        format!(
            "{}; {elapsed:.1} s; identical across 1/3/default threads: {deterministic}",
            parts.join(", ")
        ),
    )
}

fn characterization_recovery() -> Outcome {
    let op = DetectorOperatingPoint::new(20.0, 5.9e-5, 0.028, 0.25).unwrap();
    let sim = SimConfig::default().with_gates(100_000_000).with_seed(42);
    let hist = simulate_characterization_run(&sim, &op).unwrap();
    let e = estimate_characterization(&hist, sim.mu_per_pulse).unwrap();
    let rel = |x: f64, t: f64| x / t - 1.0;
    let (pd, eta, pa) = (
        rel(e.p_d_hat, 5.9e-5),
        rel(e.eta_hat, 0.25),
        rel(e.p_a_hat, 0.028),
    );
    outcome(
        pd.abs() <= 0.05 && eta.abs() <= 0.03 && pa.abs() <= 0.15,
        format!(
            "P_d {:+.2}% (5%), eta {:+.2}% (3%), P_a {:+.2}% (15%, 1-sigma {:.1}%)",
            100.0 * pd,
            100.0 * eta,
            100.0 * pa,
            100.0 * e.p_a_sigma / 0.028
        ),
    )
}

fn bound_soundness() -> Outcome {
    let protocol = ProtocolConfig::default();
    let channel = ChannelConfig::default();
    let op = op_at(20.0);
    let settings = FiniteKeySettings::default();
    let truth = generator_truth(&protocol, &channel, &op);
    let mut sound = 0;
    let mut aborted = 0;
    let mut e1_sum = 0.0;
    for seed in 0..100u64 {
        let sim = SimConfig::default().with_gates(100_000_000).with_seed(seed);
        let stats = simulate_qkd_session(&protocol, &channel, &op, &sim).unwrap();
        let b = decoy_bounds(&stats, &protocol, &settings).unwrap();
        aborted += usize::from(b.aborted);
        e1_sum += b.e1_upper;
        if b.y0_lower <= truth.y0 && b.y1_lower <= truth.y1 && b.e1_upper >= truth.e1 {
            sound += 1;
        }
    }
    outcome(
        sound >= 99,
        format!(
            "{sound}/100 sound at 1e8 gates per session ({aborted} without a positive Y1 bound, mean e1U {:.3} vs e1 {:.4})",
            e1_sum / 100.0,
            truth.e1
        ),
    )
}

fn finite_key_sanity() -> Outcome {
    let settings = FiniteKeySettings::default();
    let model = TemperatureModel::default();
    let mut monotone = true;
    let mut below_asym = true;
    for length in [0.0, 25.0, 50.0, 75.0, 90.0, 110.0, 130.0] {
        for t in [-30.0, -5.0, 20.0] {
            let op = model.operating_point(t, 0.25).unwrap();
            let channel = ChannelConfig::default().with_length(length);
            let mut last = 0.0;
            for minutes in [1.0, 5.0, 10.0, 20.0, 40.0, 60.0, 120.0, 480.0] {
                let protocol = ProtocolConfig::default().with_session(minutes * 60.0);
                let ev = Evaluator::new(protocol, settings);
                let key = ev.key(&channel, &op).unwrap().1;
                monotone &= key.secure_length_bits >= last;
                last = key.secure_length_bits;
                below_asym &= key.secure_rate_bps <= asymptotic_rate(&protocol, &channel, &op);
            }
        }
    }
    let protocol = ProtocolConfig::default();
    let channel = ChannelConfig::default();
    let ratio = rate(50.0, 20.0) / asymptotic_rate(&protocol, &channel, &op_at(20.0));
    let near_cut = ChannelConfig::default().with_length(80.0);
    let r20 = eval().rate(&near_cut, &op_at(20.0)).unwrap();
    let r60 = Evaluator::new(protocol.with_session(3600.0), settings)
        .rate(&near_cut, &op_at(20.0))
        .unwrap();
    let ratio_ok = ratio >= 0.9;
    outcome(
        monotone && below_asym && ratio_ok && r60 > r20,
        format!(
            "monotone in session: {monotone}; finite <= asymptotic: {below_asym}; finite/asymptotic at 50 km {ratio:.3} (want >= 0.9: {}); 80 km 60 min {r60:.4e} vs 20 min {r20:.4e}",
            ok(ratio_ok)
        ),
    )
}

fn identities() -> Outcome {
    let h = |x| binary_entropy(x).unwrap();
    let mut worst: f64 = 0.0;
    worst = worst.max(h(0.0).abs()).max((h(0.5) - 1.0).abs());
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        worst = worst.max((h(x) - h(1.0 - x)).abs());
    }
    for n in [1.0, 10.0, 1e6, 1.2e12] {
        for eps in [1e-10, 6.25e-12, 0.05] {
            worst =
                worst.max((hoeffding_delta(4.0 * n, eps) - hoeffding_delta(n, eps) / 2.0).abs());
        }
    }
    let lossless = ChannelConfig {
        length_km: 0.0,
        attenuation_db_per_km: 0.2,
        extra_loss_db: 0.0,
    };
    worst = worst.max((transmittance(&lossless) - 1.0).abs());
    outcome(worst <= 1e-12, format!("largest deviation {worst:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("calibration", calibration),
        ("cooled prediction", cooled_prediction),
        ("temperature flatness", temperature_flatness),
        ("cross-over", crossover),
        ("cut-off", cutoff),
        ("distance scaling", distance_scaling),
        ("oracle equivalence", oracle_equivalence),
        ("characterization recovery", characterization_recovery),
        ("bound soundness", bound_soundness),
        ("finite-key sanity", finite_key_sanity),
        ("identities", identities),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

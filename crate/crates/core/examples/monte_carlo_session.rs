//! Gate-level session Monte Carlo against the analytic expectation, and the
//! decoy bounds it yields against the generator's true yields.
//!
//! cargo run --release --example monte_carlo_session -- 100000000

use apd_qkd::finite_key::decoy_bounds;
use apd_qkd::link::expected_session_counts;
use apd_qkd::sim::{generator_truth, simulate_qkd_session, SimConfig};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let gates: u64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("gate count"))
        .unwrap_or(100_000_000);
    let protocol = ProtocolConfig::default();
    let channel = ChannelConfig::default();
    let op = TemperatureModel::default().operating_point(20.0, 0.25)?;
    let sim = SimConfig::default().with_gates(gates);

    let mc = simulate_qkd_session(&protocol, &channel, &op, &sim)?;
    let expected = expected_session_counts(
        &protocol.with_session(gates as f64 / protocol.clock_hz),
        &channel,
        &op,
    );
    println!(
        "{:<14} {:>12} {:>12} {:>10} {:>10}",
        "cell", "gain MC", "gain exp", "QBER MC", "QBER exp"
    );
    for ((k, b, c), (_, _, e)) in mc.cells().zip(expected.cells()) {
        println!(
            "{:<14} {:>12.4e} {:>12.4e} {:>10.4} {:>10.4}",
            format!("{k:?}/{b:?}"),
            c.gain(),
            e.gain(),
            c.qber(),
            e.qber()
        );
    }

    let settings = FiniteKeySettings::default();
    let bounds = decoy_bounds(&mc, &protocol, &settings)?;
    let truth = generator_truth(&protocol, &channel, &op);
    println!("Y1L {:.4e} <= Y1 {:.4e}", bounds.y1_lower, truth.y1);
    println!("e1U {:.4} >= e1 {:.4}", bounds.e1_upper, truth.e1);
    Ok(())
}

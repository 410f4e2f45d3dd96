//! Simulated characterization run: histogram of clicks per gate phase and
//! recovery of P_d, P_a and efficiency.
//!
//! cargo run --release --example characterization -- 100000000 20

use apd_qkd::sim::{estimate_characterization, simulate_characterization_run, SimConfig};
use apd_qkd::TemperatureModel;

fn main() -> apd_qkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let gates = args
        .next()
        .map(|a| a.parse().expect("gate count"))
        .unwrap_or(100_000_000);
    let temp_c: f64 = args
        .next()
        .map(|a| a.parse().expect("temperature"))
        .unwrap_or(20.0);

    let op = TemperatureModel::default().operating_point(temp_c, 0.25)?;
    let sim = SimConfig::default().with_gates(gates);
    let hist = simulate_characterization_run(&sim, &op)?;
    let est = estimate_characterization(&hist, sim.mu_per_pulse)?;

    println!("phase  counts");
    for (i, c) in hist.counts_by_phase.iter().enumerate().take(6) {
        println!("{i:>5}  {c}");
    }
    println!(
        "  ...  ({} phases, laser-off run {} clicks)",
        hist.period(),
        hist.dark_run_counts
    );
    for (name, hat, sigma, truth) in [
        ("P_d", est.p_d_hat, est.p_d_sigma, op.dark_count_prob),
        ("P_a", est.p_a_hat, est.p_a_sigma, op.afterpulse_prob),
        ("eta", est.eta_hat, est.eta_sigma, op.efficiency),
    ] {
        println!(
            "{name}: {hat:.4e} ± {sigma:.1e}  (generator {truth:.4e}, {:+.2}%)",
            100.0 * (hat / truth - 1.0)
        );
    }
    Ok(())
}

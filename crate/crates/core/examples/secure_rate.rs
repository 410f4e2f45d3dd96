//! Finite-key secure rate at one distance and temperature.
//!
//! cargo run --release --example secure_rate -- 50 20

use apd_qkd::experiments::Evaluator;
use apd_qkd::finite_key::asymptotic_rate;
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<f64>().expect("number"));
    let distance_km = args.next().unwrap_or(50.0);
    let temp_c = args.next().unwrap_or(20.0);

    let protocol = ProtocolConfig::default();
    let eval = Evaluator::new(protocol, FiniteKeySettings::default());
    let channel = ChannelConfig::default().with_length(distance_km);
    let op = TemperatureModel::default().operating_point(temp_c, 0.25)?;

    let (stats, key) = eval.key(&channel, &op)?;
    println!(
        "{distance_km} km at {temp_c} °C: P_d {:.3e}, P_a {:.4}",
        op.dark_count_prob, op.afterpulse_prob
    );
    println!(
        "signal Z gain {:.4e}, QBER {:.4}",
        stats.signal.z.gain(),
        stats.signal.z.qber()
    );
    println!(
        "Y1L {:.4e}, e1U {:.4}, key {:.0} bits",
        key.s1_lower, key.phase_error_upper, key.secure_length_bits
    );
    println!("finite rate     {:.4e} bit/s", key.secure_rate_bps);
    println!(
        "asymptotic rate {:.4e} bit/s",
        asymptotic_rate(&protocol, &channel, &op)
    );
    if let Some(reason) = key.reason {
        println!("zero key: {}", reason.code());
    }
    Ok(())
}

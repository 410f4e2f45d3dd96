//! Rate against detector temperature at a fixed distance.
//!
//! cargo run --release --example temperature_sweep -- 50

use apd_qkd::experiments::{sweep_temperature, Evaluator};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let distance_km = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("distance in km"))
        .unwrap_or(50.0);
    let eval = Evaluator::new(ProtocolConfig::default(), FiniteKeySettings::default());
    let channel = ChannelConfig::default().with_length(distance_km);
    let sweep = sweep_temperature(
        (-30.0, 20.0),
        5.0,
        &channel,
        &eval,
        &TemperatureModel::default(),
        0.25,
    )?;
    println!(
        "{:>6} {:>10} {:>8} {:>12}",
        "T °C", "P_d", "P_a", "rate bit/s"
    );
    for r in &sweep.rows {
        println!(
            "{:>6} {:>10.3e} {:>8.4} {:>12.4e}",
            r.variable, r.pd, r.pa, r.secure_rate_bps
        );
    }
    println!(
        "max relative variation {:.2}%",
        100.0 * sweep.max_relative_variation()
    );
    Ok(())
}

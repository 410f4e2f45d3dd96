//! Rate against fiber length for a warm and a cold detector, with the
//! relative change between them.
//!
//! cargo run --release --example distance_sweep

use apd_qkd::experiments::{relative_change, sweep_distance, Evaluator};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let eval = Evaluator::new(ProtocolConfig::default(), FiniteKeySettings::default());
    let model = TemperatureModel::default();
    let base = ChannelConfig::default();
    let hot = sweep_distance(
        (0.0, 150.0),
        10.0,
        &base,
        &eval,
        &model.operating_point(20.0, 0.25)?,
    )?;
    let cold = sweep_distance(
        (0.0, 150.0),
        10.0,
        &base,
        &eval,
        &model.operating_point(-30.0, 0.25)?,
    )?;
    let change = relative_change(&hot, &cold)?;

    println!(
        "{:>5} {:>12} {:>12} {:>10}",
        "km", "20 °C", "-30 °C", "change"
    );
    for ((h, c), (_, d)) in hot.rows.iter().zip(&cold.rows).zip(&change) {
        let d = d.map_or("-".to_string(), |d| format!("{:+.3}", d));
        println!(
            "{:>5} {:>12.4e} {:>12.4e} {:>10}",
            h.variable, h.secure_rate_bps, c.secure_rate_bps, d
        );
    }
    if let Some(slope) = hot.log10_slope(40.0, 70.0) {
        println!("20 °C log10 slope over 40-70 km: {slope:.4} per km");
    }
    Ok(())
}

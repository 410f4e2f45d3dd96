//! Finds the intrinsic error that reproduces a target rate at a reference
//! operating point.
//!
//! cargo run --release --example calibration -- 1.26e6

use apd_qkd::experiments::{calibrate_intrinsic_error, Evaluator, CALIBRATION_TARGET_BPS};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let target = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("target bit/s"))
        .unwrap_or(CALIBRATION_TARGET_BPS);
    let eval = Evaluator::new(ProtocolConfig::default(), FiniteKeySettings::default());
    let channel = ChannelConfig::default().with_length(50.0);
    let op = TemperatureModel::default().operating_point(20.0, 0.25)?;
    let e_d = calibrate_intrinsic_error(target, &eval, &channel, &op)?;

    let calibrated = Evaluator::new(eval.protocol.with_intrinsic_error(e_d), eval.settings);
    println!("e_d = {e_d:.8}");
    println!(
        "rate at 50 km, 20 °C: {:.6e} bit/s",
        calibrated.rate(&channel, &op)?
    );
    Ok(())
}

//! Distance where cooling starts to pay off, and the maximum distance at
//! each temperature.
//!
//! cargo run --release --example crossover_cutoff

use apd_qkd::experiments::{
    find_crossover_between, find_cutoff, Evaluator, CROSSOVER_BRACKET_KM, CUTOFF_BRACKET_KM,
};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let eval = Evaluator::new(ProtocolConfig::default(), FiniteKeySettings::default());
    let model = TemperatureModel::default();
    let channel = ChannelConfig::default();

    match find_crossover_between(&eval, &channel, &model, 20.0, -30.0, 0.25) {
        Ok(km) => println!("-30 °C overtakes 20 °C at {km:.1} km"),
        Err(e) => println!("no cross-over in {CROSSOVER_BRACKET_KM:?} km: {e}"),
    }
    for t in [20.0, 0.0, -30.0] {
        let op = model.operating_point(t, 0.25)?;
        let cut = find_cutoff(&eval, &channel, &op, CUTOFF_BRACKET_KM)?;
        println!("cut-off at {t} °C: {cut} km");
    }
    Ok(())
}

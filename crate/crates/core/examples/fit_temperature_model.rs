//! Fits the dark-count and afterpulse temperature laws to characterization
//! samples and evaluates them across the valid range.
//!
//! cargo run --release --example fit_temperature_model

use apd_qkd::detector::fit_temperature_model;

fn main() -> apd_qkd::Result<()> {
    let samples = [(20.0, 5.9e-5, 0.0282), (-30.0, 3.1e-6, 0.0389)];
    let model = fit_temperature_model(&samples)?;
    println!("{model:#?}");
    for t in [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0] {
        let op = model.operating_point(t, 0.25)?;
        println!(
            "{t:>6} °C  P_d {:.3e}  P_a {:.4}",
            op.dark_count_prob, op.afterpulse_prob
        );
    }
    Ok(())
}

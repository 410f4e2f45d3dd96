//! Vacuum + weak decoy bounds from expected counts, with and without the
//! statistical fluctuation terms.
//!
//! cargo run --release --example decoy_bounds

use apd_qkd::finite_key::decoy_bounds;
use apd_qkd::finite_key::interval::Deviation;
use apd_qkd::link::{
    effective_yield, expected_session_counts, single_photon_error, system_efficiency,
};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig, TemperatureModel};

fn main() -> apd_qkd::Result<()> {
    let protocol = ProtocolConfig::default();
    let channel = ChannelConfig::default();
    let op = TemperatureModel::default().operating_point(20.0, 0.25)?;
    let stats = expected_session_counts(&protocol, &channel, &op);
    let eta = system_efficiency(&channel, &op);

    println!(
        "true  Y0 {:.4e}  Y1 {:.4e}  e1 {:.4}",
        effective_yield(0, eta, &op),
        effective_yield(1, eta, &op),
        single_photon_error(eta, &op, protocol.intrinsic_error_e_d)
    );
    for deviation in [
        Deviation::Off,
        Deviation::Additive,
        Deviation::RelativeEntropy,
    ] {
        let settings = FiniteKeySettings {
            deviation,
            ..FiniteKeySettings::default()
        };
        let b = decoy_bounds(&stats, &protocol, &settings)?;
        println!(
            "{:<16} Y0L {:.4e}  Y1L {:.4e}  e1U {:.4}{}",
            format!("{deviation:?}"),
            b.y0_lower,
            b.y1_lower,
            b.e1_upper,
            if b.aborted { "  (aborted)" } else { "" }
        );
    }
    Ok(())
}

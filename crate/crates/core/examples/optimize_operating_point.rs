//! Picks the best efficiency/dark-count trade-off for long links with
//! one-hour sessions.
//!
//! cargo run --release --example optimize_operating_point

use apd_qkd::experiments::{long_distance_preset, optimize_operating_point, Evaluator};
use apd_qkd::{ChannelConfig, FiniteKeySettings, ProtocolConfig};

fn main() -> apd_qkd::Result<()> {
    let (protocol, table) = long_distance_preset(&ProtocolConfig::default());
    let eval = Evaluator::new(
        protocol,
        FiniteKeySettings::new(&protocol, Default::default()),
    );
    for km in [80.0, 100.0, 120.0, 140.0] {
        let channel = ChannelConfig::default().with_length(km);
        print!("{km:>5} km:");
        for op in &table.entries {
            print!(
                "  eta {:.2} -> {:>10.4e}",
                op.efficiency,
                eval.rate(&channel, op)?
            );
        }
        let (best, key) = optimize_operating_point(&table, &channel, &eval)?;
        println!(
            "  | best eta {:.2} ({:.4e} bit/s)",
            best.efficiency, key.secure_rate_bps
        );
    }
    Ok(())
}

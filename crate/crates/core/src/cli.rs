//! Command-line front end: config loading, subcommand dispatch and artifact
//! output.
//!
//! Every artifact carries the tool version and the effective config. JSON
//! artifacts hold them as fields; CSV artifacts start with `#` comment lines.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detector::{DetectorOperatingPoint, TemperatureModel, DEFAULT_EFFICIENCY};
use crate::error::{check, Error, Issue, Result};
use crate::experiments::{
    calibrate_intrinsic_error, find_crossover, find_cutoff, illustrative_table,
    optimize_operating_point, relative_change, sweep_distance, sweep_temperature, Evaluator,
    OperatingPointTable, StatsSource, CALIBRATION_TARGET_BPS, CROSSOVER_BRACKET_KM,
    CUTOFF_BRACKET_KM,
};
use crate::finite_key::{asymptotic_rate, FiniteKeyOptions, FiniteKeySettings};
use crate::link::{expected_session_counts, ChannelConfig, ProtocolConfig, SessionStatistics};
use crate::sim::{
    estimate_characterization, simulate_characterization_run, simulate_qkd_session,
    write_histogram_csv, SimConfig,
};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSettings {
    pub efficiency: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            efficiency: DEFAULT_EFFICIENCY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Format of tabular results.
    pub format: TableFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            format: TableFormat::Csv,
        }
    }
}

/// Merged configuration of a run. Absent fields take defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    pub channel: ChannelConfig,
    pub temperature_model: TemperatureModel,
    pub detector: DetectorSettings,
    pub sim: SimConfig,
    pub finite_key: FiniteKeyOptions,
    /// Candidates for `optimize`; the illustrative table when absent.
    pub operating_points: Option<OperatingPointTable>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = self.protocol.issues("protocol.");
        out.extend(self.channel.issues("channel."));
        out.extend(self.temperature_model.issues("temperature_model."));
        out.extend(self.sim.issues("sim."));
        if !(0.0..=1.0).contains(&self.detector.efficiency) {
            out.push(Issue::new("detector.efficiency", "must lie in [0, 1]"));
        }
        if let Some(table) = &self.operating_points {
            out.extend(table.issues("operating_points."));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        check(self.issues())
    }

    pub fn settings(&self) -> FiniteKeySettings {
        FiniteKeySettings::new(&self.protocol, self.finite_key)
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator::new(self.protocol, self.settings())
    }

    pub fn operating_point(&self, temp_c: f64) -> Result<DetectorOperatingPoint> {
        self.temperature_model
            .operating_point(temp_c, self.detector.efficiency)
    }

    pub fn table(&self) -> OperatingPointTable {
        self.operating_points
            .clone()
            .unwrap_or_else(illustrative_table)
    }
}

/// Parses and validates a config from JSON text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let known = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut unknown = Vec::new();
    unknown_keys(&value, &known, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(Error::Validation(
            unknown
                .into_iter()
                .map(|k| Issue::new(k, "unknown key"))
                .collect(),
        ));
    }
    let config: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Reads and validates a JSON config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn unknown_keys(value: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(given), Value::Object(schema)) = (value, known) else {
        return;
    };
    for (key, v) in given {
        let path = format!("{prefix}{key}");
        match schema.get(key) {
            None => out.push(path),
            Some(k) => unknown_keys(v, k, &format!("{path}."), out),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "apd-qkd",
    version,
    about = "Decoy BB84 key rates with gated APD noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for artifacts (overrides `output.dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Session length in seconds (overrides `protocol.session_s`).
    #[arg(long)]
    session_s: Option<f64>,
    /// Evaluate rates on Monte Carlo statistics (`sim` section) instead of
    /// expected counts.
    #[arg(long)]
    monte_carlo: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Secure key rate at one distance and temperature.
    Rate {
        #[arg(long, default_value_t = 50.0)]
        distance_km: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        temp_c: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Rate against detector temperature at fixed distance.
    SweepTemp {
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        from_c: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        to_c: f64,
        #[arg(long, default_value_t = 5.0)]
        step_c: f64,
        #[arg(long, default_value_t = 50.0)]
        distance_km: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Rate against fiber length at fixed temperature.
    SweepDistance {
        #[arg(long, default_value_t = 0.0)]
        from_km: f64,
        #[arg(long, default_value_t = 150.0)]
        to_km: f64,
        #[arg(long, default_value_t = 5.0)]
        step_km: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        temp_c: f64,
        /// Also write (S_T − S_compare)/S_T against this temperature.
        #[arg(long, allow_hyphen_values = true)]
        compare_temp_c: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Distance where the cold detector overtakes the hot one.
    Crossover {
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        t_hot_c: f64,
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        t_cold_c: f64,
        #[arg(long, default_value_t = CROSSOVER_BRACKET_KM.0)]
        from_km: f64,
        #[arg(long, default_value_t = CROSSOVER_BRACKET_KM.1)]
        to_km: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Largest distance with a positive rate.
    Cutoff {
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        temp_c: f64,
        #[arg(long, default_value_t = CUTOFF_BRACKET_KM.0)]
        from_km: f64,
        #[arg(long, default_value_t = CUTOFF_BRACKET_KM.1)]
        to_km: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Best entry of the operating-point table at one distance.
    Optimize {
        #[arg(long, default_value_t = 100.0)]
        distance_km: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Simulated characterization run and parameter recovery.
    Characterize {
        #[arg(long)]
        gates: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        temp_c: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Gate-level Monte Carlo session statistics.
    McSession {
        #[arg(long)]
        gates: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 50.0)]
        distance_km: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        temp_c: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Intrinsic error that reproduces a target rate.
    Calibrate {
        #[arg(long, default_value_t = CALIBRATION_TARGET_BPS)]
        target_bps: f64,
        #[arg(long, default_value_t = 50.0)]
        distance_km: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        temp_c: f64,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Rate { common, .. }
            | Self::SweepTemp { common, .. }
            | Self::SweepDistance { common, .. }
            | Self::Crossover { common, .. }
            | Self::Cutoff { common, .. }
            | Self::Optimize { common, .. }
            | Self::Characterize { common, .. }
            | Self::McSession { common, .. }
            | Self::Calibrate { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Rate { .. } => "rate",
            Self::SweepTemp { .. } => "sweep-temp",
            Self::SweepDistance { .. } => "sweep-distance",
            Self::Crossover { .. } => "crossover",
            Self::Cutoff { .. } => "cutoff",
            Self::Optimize { .. } => "optimize",
            Self::Characterize { .. } => "characterize",
            Self::McSession { .. } => "mc-session",
            Self::Calibrate { .. } => "calibrate",
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Parse(_) | Error::TemperatureOutOfRange { .. } => {
            EXIT_VALIDATION
        }
        _ => EXIT_FAILURE,
    }
}

fn effective_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &common.out_dir {
        config.output.dir = dir.clone();
    }
    if let Some(s) = common.session_s {
        config.protocol.session_s = s;
    }
    config.validate()?;
    Ok(config)
}

struct Artifacts<'a> {
    dir: &'a Path,
    command: &'a str,
    config: &'a RunConfig,
}

impl Artifacts<'_> {
    fn envelope(&self, result: Value) -> Value {
        json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "command": self.command,
            "config": self.config,
            "result": result,
        })
    }

    fn json(&self, name: &str, result: Value) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&self.envelope(result))
            .map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    /// CSV body preceded by `# tool`, `# command` and `# config` lines.
    fn csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut buf = Vec::new();
        writeln!(buf, "# {TOOL_NAME} {TOOL_VERSION}")?;
        writeln!(buf, "# command: {}", self.command)?;
        writeln!(
            buf,
            "# config: {}",
            serde_json::to_string(self.config).map_err(|e| Error::Parse(e.to_string()))?
        )?;
        body(&mut buf)?;
        fs::write(&path, buf)?;
        Ok(path)
    }
}

fn execute(command: &Command) -> Result<String> {
    let common = command.common();
    let config = effective_config(common)?;
    let mut eval = config.evaluator();
    if common.monte_carlo {
        eval = eval.with_source(StatsSource::MonteCarlo(config.sim));
    }
    fs::create_dir_all(&config.output.dir)?;
    let out = Artifacts {
        dir: &config.output.dir,
        command: command.name(),
        config: &config,
    };
    let tabular = |name: &str, sweep: &crate::experiments::SweepResult| -> Result<PathBuf> {
        match config.output.format {
            TableFormat::Csv => out.csv(&format!("{name}.csv"), |w| sweep.write_csv(w)),
            TableFormat::Json => out.json(&format!("{name}.json"), json!(sweep)),
        }
    };

    match *command {
        Command::Rate {
            distance_km,
            temp_c,
            ..
        } => {
            let op = config.operating_point(temp_c)?;
            let channel = config.channel.with_length(distance_km);
            let (stats, key) = eval.key(&channel, &op)?;
            let asym = asymptotic_rate(&config.protocol, &channel, &op);
            let path = out.json(
                "rate.json",
                json!({
                    "distance_km": distance_km,
                    "temperature_c": temp_c,
                    "operating_point": op,
                    "statistics": stats,
                    "key": key,
                    "secure_rate_bps": key.secure_rate_bps,
                    "asymptotic_rate_bps": asym,
                }),
            )?;
            Ok(format!(
                "rate: {distance_km} km at {temp_c} °C -> {:.4e} bit/s{} ({})",
                key.secure_rate_bps,
                reason_suffix(key.reason),
                path.display()
            ))
        }
        Command::SweepTemp {
            from_c,
            to_c,
            step_c,
            distance_km,
            ..
        } => {
            let sweep = sweep_temperature(
                (from_c, to_c),
                step_c,
                &config.channel.with_length(distance_km),
                &eval,
                &config.temperature_model,
                config.detector.efficiency,
            )?;
            let path = tabular("sweep_temp", &sweep)?;
            Ok(format!(
                "sweep-temp: {} rows at {distance_km} km, max relative variation {:.2}% ({})",
                sweep.rows.len(),
                100.0 * sweep.max_relative_variation(),
                path.display()
            ))
        }
        Command::SweepDistance {
            from_km,
            to_km,
            step_km,
            temp_c,
            compare_temp_c,
            ..
        } => {
            let op = config.operating_point(temp_c)?;
            let sweep = sweep_distance((from_km, to_km), step_km, &config.channel, &eval, &op)?;
            let path = tabular("sweep_distance", &sweep)?;
            let mut summary = format!(
                "sweep-distance: {} rows at {temp_c} °C ({})",
                sweep.rows.len(),
                path.display()
            );
            if let Some(t) = compare_temp_c {
                let other = config.operating_point(t)?;
                let cmp =
                    sweep_distance((from_km, to_km), step_km, &config.channel, &eval, &other)?;
                let rows = relative_change(&sweep, &cmp)?;
                let path = out.csv("relative_change.csv", |w| {
                    writeln!(w, "length_km,relative_change")?;
                    for (l, v) in &rows {
                        match v {
                            Some(v) => writeln!(w, "{l},{v}")?,
                            None => writeln!(w, "{l},")?,
                        }
                    }
                    Ok(())
                })?;
                summary.push_str(&format!(", relative change ({})", path.display()));
            }
            Ok(summary)
        }
        Command::Crossover {
            t_hot_c,
            t_cold_c,
            from_km,
            to_km,
            ..
        } => {
            let hot = config.operating_point(t_hot_c)?;
            let cold = config.operating_point(t_cold_c)?;
            let km = find_crossover(&eval, &config.channel, &hot, &cold, (from_km, to_km))?;
            let path = out.json(
                "crossover.json",
                json!({
                    "t_hot_c": t_hot_c,
                    "t_cold_c": t_cold_c,
                    "bracket_km": [from_km, to_km],
                    "crossover_km": km,
                }),
            )?;
            Ok(format!(
                "crossover: {t_hot_c} °C vs {t_cold_c} °C at {km:.1} km ({})",
                path.display()
            ))
        }
        Command::Cutoff {
            temp_c,
            from_km,
            to_km,
            ..
        } => {
            let op = config.operating_point(temp_c)?;
            let cut = find_cutoff(&eval, &config.channel, &op, (from_km, to_km))?;
            let path = out.json(
                "cutoff.json",
                json!({
                    "temperature_c": temp_c,
                    "bracket_km": [from_km, to_km],
                    "cutoff": cut,
                    "cutoff_km": cut.to_string(),
                }),
            )?;
            Ok(format!(
                "cutoff: {temp_c} °C at {cut} km ({})",
                path.display()
            ))
        }
        Command::Optimize { distance_km, .. } => {
            let table = config.table();
            let channel = config.channel.with_length(distance_km);
            let (best, key) = optimize_operating_point(&table, &channel, &eval)?;
            let candidates = table
                .entries
                .iter()
                .map(|op| {
                    Ok(json!({"operating_point": op, "secure_rate_bps": eval.rate(&channel, op)?}))
                })
                .collect::<Result<Vec<_>>>()?;
            let path = out.json(
                "optimize.json",
                json!({
                    "distance_km": distance_km,
                    "best": best,
                    "key": key,
                    "candidates": candidates,
                }),
            )?;
            Ok(format!(
                "optimize: {distance_km} km -> efficiency {} with {:.4e} bit/s ({})",
                best.efficiency,
                key.secure_rate_bps,
                path.display()
            ))
        }
        Command::Characterize {
            gates,
            seed,
            temp_c,
            ..
        } => {
            let sim = SimConfig {
                n_gates: gates.unwrap_or(config.sim.n_gates),
                seed: seed.unwrap_or(config.sim.seed),
                ..config.sim
            };
            sim.validate()?;
            let op = config.operating_point(temp_c)?;
            let hist = simulate_characterization_run(&sim, &op)?;
            let est = estimate_characterization(&hist, sim.mu_per_pulse)?;
            let hist_path = out.csv("histogram.csv", |w| write_histogram_csv(&hist, w))?;
            let path = out.json(
                "characterization.json",
                json!({
                    "sim": sim,
                    "generator": op,
                    "total_gates": hist.total_gates,
                    "dark_run_counts": hist.dark_run_counts,
                    "estimate": est,
                    "relative_error": {
                        "p_d": est.p_d_hat / op.dark_count_prob - 1.0,
                        "p_a": est.p_a_hat / op.afterpulse_prob - 1.0,
                        "eta": est.eta_hat / op.efficiency - 1.0,
                    },
                }),
            )?;
            Ok(format!(
                "characterize: p_d {:.4e}, p_a {:.4}, eta {:.4} ({}, {})",
                est.p_d_hat,
                est.p_a_hat,
                est.eta_hat,
                hist_path.display(),
                path.display()
            ))
        }
        Command::McSession {
            gates,
            seed,
            distance_km,
            temp_c,
            ..
        } => {
            let sim = SimConfig {
                n_gates: gates.unwrap_or(config.sim.n_gates),
                seed: seed.unwrap_or(config.sim.seed),
                ..config.sim
            };
            sim.validate()?;
            let op = config.operating_point(temp_c)?;
            let channel = config.channel.with_length(distance_km);
            let stats = simulate_qkd_session(&config.protocol, &channel, &op, &sim)?;
            let expected = expected_counts_for(&config.protocol, &channel, &op, sim.n_gates);
            let path = out.json(
                "session_stats.json",
                json!({
                    "sim": sim,
                    "operating_point": op,
                    "distance_km": distance_km,
                    "statistics": stats,
                    "expected": expected,
                }),
            )?;
            Ok(format!(
                "mc-session: {} gates, signal Z gain {:.4e}, qber {:.4} ({})",
                sim.n_gates,
                stats.signal.z.gain(),
                stats.signal.z.qber(),
                path.display()
            ))
        }
        Command::Calibrate {
            target_bps,
            distance_km,
            temp_c,
            ..
        } => {
            let op = config.operating_point(temp_c)?;
            let channel = config.channel.with_length(distance_km);
            let e_d = calibrate_intrinsic_error(target_bps, &eval, &channel, &op)?;
            let path = out.json(
                "calibration.json",
                json!({
                    "target_bps": target_bps,
                    "distance_km": distance_km,
                    "temperature_c": temp_c,
                    "intrinsic_error_e_d": e_d,
                }),
            )?;
            Ok(format!("calibrate: e_d = {e_d:.8} ({})", path.display()))
        }
    }
}

/// Expected counts for `n_gates` pulses rather than a full session.
fn expected_counts_for(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    op: &DetectorOperatingPoint,
    n_gates: u64,
) -> SessionStatistics {
    let p = ProtocolConfig {
        clock_hz: 1.0,
        session_s: n_gates as f64,
        ..*protocol
    };
    expected_session_counts(&p, channel, op)
}

fn reason_suffix(reason: Option<crate::finite_key::ZeroKeyReason>) -> String {
    reason.map_or_else(String::new, |r| format!(" [{}]", r.code()))
}

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{db_to_linear, dbm_to_watts, Point, Scenario};

/// On-disk scenario: every key is optional and falls back to the reference
/// scenario. Radio constants may be given linearly or in dB (`_db`, `_dbm`
/// suffixes) but not both.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n_packets: Option<usize>,
    packet_size_bits: Option<f64>,
    bandwidth_hz: Option<f64>,
    source_pos: Option<Point>,
    dest_pos: Option<Point>,
    uav_start: Option<Point>,
    uav_end: Option<Point>,
    altitude_m: Option<f64>,
    v_max: Option<f64>,
    e_source_j: Option<f64>,
    e_uav_j: Option<f64>,
    gain_ref: Option<f64>,
    gain_ref_db: Option<f64>,
    snr_gap: Option<f64>,
    snr_gap_db: Option<f64>,
    noise_w: Option<f64>,
    noise_dbm: Option<f64>,
}

fn either(
    name: &str,
    linear: Option<f64>,
    log: Option<f64>,
    conv: fn(f64) -> f64,
    default: f64,
) -> Result<f64> {
    match (linear, log) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "both `{name}` and its dB form are set"
        ))),
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(conv(v)),
        (None, None) => Ok(default),
    }
}

/// Parses a TOML scenario and validates it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let r = Scenario::reference();
    let scn = Scenario {
        n_packets: f.n_packets.unwrap_or(r.n_packets),
        packet_size_bits: f.packet_size_bits.unwrap_or(r.packet_size_bits),
        bandwidth_hz: f.bandwidth_hz.unwrap_or(r.bandwidth_hz),
        source_pos: f.source_pos.unwrap_or(r.source_pos),
        dest_pos: f.dest_pos.unwrap_or(r.dest_pos),
        uav_start: f.uav_start.unwrap_or(r.uav_start),
        uav_end: f.uav_end.unwrap_or(r.uav_end),
        altitude_m: f.altitude_m.unwrap_or(r.altitude_m),
        v_max: f.v_max.unwrap_or(r.v_max),
        e_source_j: f.e_source_j.unwrap_or(r.e_source_j),
        e_uav_j: f.e_uav_j.unwrap_or(r.e_uav_j),
        gain_ref: either(
            "gain_ref",
            f.gain_ref,
            f.gain_ref_db,
            db_to_linear,
            r.gain_ref,
        )?,
        snr_gap: either("snr_gap", f.snr_gap, f.snr_gap_db, db_to_linear, r.snr_gap)?,
        noise_w: either("noise_w", f.noise_w, f.noise_dbm, dbm_to_watts, r.noise_w)?,
    };
    scn.validate()?;
    Ok(scn)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

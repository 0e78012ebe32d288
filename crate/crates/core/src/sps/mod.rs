//! Sensing-based semi-persistent scheduling (SB-SPS).
//!
//! A UE keeps a 1000 ms sensing window of per-subchannel S-RSSI and the
//! reservations it decoded, selects a resource from the selection window
//! `[n+T1, n+T2]` by exemption and S-RSSI ranking, and then reuses it for a
//! random number of transmissions (SLRRC).

mod grant;
mod occupancy;
mod select;
mod window;

pub use grant::{on_transmission, Grant, GrantDecision};
pub use occupancy::{compute_cr, cr_limit, CalibrationTable, CrWindow, CR_WINDOW_MS};
pub use select::{select_in_window, select_resource, Selection};
pub use window::{Observation, SensedReservation, SensingWindow, SlotState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RssiAveraging {
    /// Average in mW.
    Linear,
    /// Average of dBm values.
    Db,
}

/// How subframes the UE spent transmitting are treated during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnsensedPolicy {
    /// Exempt candidates that project onto an unsensed subframe.
    Exclude,
    /// Treat unsensed subframes as silent.
    Ignore,
}

/// Scheduler parameters. Also the `[sps]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpsConfig {
    pub t1_ms: u32,
    pub t2_ms: u32,
    pub th_sps_dbm: f64,
    pub slrrc_min: u32,
    pub slrrc_max: u32,
    /// Probability of CHANGING the reservation when the SLRRC expires.
    /// This is the complement of 3GPP's `probResourceKeep`.
    pub p_resel: f64,
    pub sensing_window_ms: u32,
    pub keep_fraction: f64,
    pub escalation_step_db: f64,
    /// Stride used to project a candidate back onto sensed subframes for
    /// S-RSSI ranking.
    pub rssi_projection_step_ms: u32,
    pub rssi_averaging: RssiAveraging,
    pub unsensed_policy: UnsensedPolicy,
}

impl Default for SpsConfig {
    fn default() -> Self {
        SpsConfig {
            t1_ms: 1,
            t2_ms: 100,
            th_sps_dbm: -85.0,
            slrrc_min: 5,
            slrrc_max: 15,
            p_resel: 0.2,
            sensing_window_ms: 1000,
            keep_fraction: 0.2,
            escalation_step_db: 3.0,
            rssi_projection_step_ms: 100,
            rssi_averaging: RssiAveraging::Linear,
            unsensed_policy: UnsensedPolicy::Exclude,
        }
    }
}

impl SpsConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.t1_ms == 0 || self.t1_ms > self.t2_ms {
            v.push(("t1_ms", format!("need 0 < t1_ms ({}) <= t2_ms ({})", self.t1_ms, self.t2_ms)));
        }
        if self.slrrc_min == 0 || self.slrrc_min > self.slrrc_max {
            v.push((
                "slrrc_min",
                format!("need 1 <= slrrc_min ({}) <= slrrc_max ({})", self.slrrc_min, self.slrrc_max),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_resel) {
            v.push(("p_resel", "must lie in [0, 1]".to_string()));
        }
        if self.sensing_window_ms == 0 {
            v.push(("sensing_window_ms", "must be > 0".to_string()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            v.push(("keep_fraction", "must lie in (0, 1]".to_string()));
        }
        if !(self.escalation_step_db > 0.0) {
            v.push(("escalation_step_db", "must be > 0".to_string()));
        }
        if self.rssi_projection_step_ms == 0 {
            v.push(("rssi_projection_step_ms", "must be > 0".to_string()));
        }
        v
    }

    /// `ceil(keep_fraction * |S_A|)`, robust to binary rounding of the fraction.
    pub fn keep_count(&self, candidates: usize) -> usize {
        ((self.keep_fraction * candidates as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpsError {
    #[error("observation for subframe {got} is older than newest stored subframe {newest}")]
    OutOfOrder { got: u64, newest: u64 },
    #[error("measurement count {got} does not match {expected} subchannels")]
    SubchannelMismatch { got: usize, expected: usize },
    #[error("on_transmission called on a grant whose SLRRC is already 0")]
    ExhaustedGrant,
    #[error("CR window must span exactly {CR_WINDOW_MS} ms, got [{start}, {end})")]
    CrWindowLength { start: u64, end: u64 },
    #[error("CR window [{start}, {end}) must contain n={n} with more than half of it in the past")]
    CrWindowPlacement { start: u64, end: u64, n: u64 },
    #[error("resource pool is empty over the CR window")]
    EmptyPool,
    #[error("{name} = {value} outside [0, 1]")]
    RatioOutOfRange { name: &'static str, value: f64 },
    #[error("calibration maps CBP {cbp} to zero vehicles")]
    ZeroCalibration { cbp: f64 },
    #[error("calibration table needs at least one point with non-decreasing CBP")]
    BadCalibration,
}

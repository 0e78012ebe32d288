//! Distributed congestion control at the application layer.
//!
//! Rate control stretches the inter-transmit time (ITT) with the smoothed
//! number of neighbours inside 100 m; range control steers transmit
//! power from the channel busy percentage (CBP). A position-tracking-error
//! (PTE) trigger forces a broadcast whenever the extrapolated position seen
//! by neighbours drifts more than 0.5 m from the truth.

use crate::sps::{CalibrationTable, SensingWindow};
use crate::units::{Position, SubframeIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateControlConfig {
    /// Density coefficient B.
    pub density_coefficient_veh: f64,
    pub itt_base_ms: f64,
    pub itt_max_ms: f64,
    /// Weight of the newest sample in the single-step density smoother.
    pub smoothing: f64,
    pub neighbor_radius_m: f64,
    pub density_interval_ms: u32,
}

impl Default for RateControlConfig {
    fn default() -> Self {
        RateControlConfig {
            density_coefficient_veh: 25.0,
            itt_base_ms: 100.0,
            itt_max_ms: 600.0,
            smoothing: 0.5,
            neighbor_radius_m: 100.0,
            density_interval_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeControlConfig {
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub u_min_pct: f64,
    pub u_max_pct: f64,
    pub eta: f64,
    pub power_interval_ms: u32,
}

impl Default for RangeControlConfig {
    fn default() -> Self {
        RangeControlConfig {
            p_min_dbm: 10.0,
            p_max_dbm: 23.0,
            u_min_pct: 50.0,
            u_max_pct: 80.0,
            eta: 0.5,
            power_interval_ms: 200,
        }
    }
}

/// When a PTE-triggered packet may not wait for the SPS grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PtePolicy {
    /// Use the next grant occurrence if it is within `pte_max_wait_ms`,
    /// otherwise transmit once on a freshly selected resource.
    NextOpportunityOrOneShot,
    /// Always wait for the next grant occurrence.
    NextOpportunity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PteConfig {
    pub enabled: bool,
    pub threshold_m: f64,
    pub policy: PtePolicy,
    pub max_wait_ms: u32,
}

impl Default for PteConfig {
    fn default() -> Self {
        PteConfig { enabled: true, threshold_m: 0.5, policy: PtePolicy::NextOpportunityOrOneShot, max_wait_ms: 20 }
    }
}

/// CR-limit enforcement. Off by default: neighbours are counted directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrLimitConfig {
    pub enabled: bool,
    /// CBP threshold as a ratio in [0, 1].
    pub cbp_limit: f64,
    /// `[cbp_ratio, vehicles]` points of the inverse mapping, CBP ascending.
    pub calibration: Vec<[f64; 2]>,
}

impl Default for CrLimitConfig {
    fn default() -> Self {
        CrLimitConfig { enabled: false, cbp_limit: 0.6, calibration: vec![[0.0, 0.0], [1.0, 200.0]] }
    }
}

impl CrLimitConfig {
    pub fn table(&self) -> Result<CalibrationTable, crate::sps::SpsError> {
        CalibrationTable::new(self.calibration.iter().map(|p| (p[0], p[1])).collect())
    }
}

/// The `[dcc]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DccConfig {
    /// `false` is the baseline: fixed ITT and power, no PTE trigger.
    pub enabled: bool,
    pub baseline_itt_ms: u32,
    pub baseline_power_dbm: f64,
    pub cbp_window_ms: u32,
    pub cbp_rssi_threshold_dbm: f64,
    pub rate: RateControlConfig,
    pub range: RangeControlConfig,
    pub pte: PteConfig,
    pub cr_limit: CrLimitConfig,
}

impl Default for DccConfig {
    fn default() -> Self {
        DccConfig {
            enabled: true,
            baseline_itt_ms: 100,
            baseline_power_dbm: 23.0,
            cbp_window_ms: 100,
            cbp_rssi_threshold_dbm: -94.0,
            rate: RateControlConfig::default(),
            range: RangeControlConfig::default(),
            pte: PteConfig::default(),
            cr_limit: CrLimitConfig::default(),
        }
    }
}

impl DccConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let r = &self.rate;
        if !(r.density_coefficient_veh > 0.0) {
            v.push(("rate.density_coefficient_veh", "must be > 0".to_string()));
        }
        if !(r.itt_base_ms > 0.0) {
            v.push(("rate.itt_base_ms", "must be > 0".to_string()));
        }
        if r.itt_max_ms < r.itt_base_ms || r.itt_max_ms < 100.0 {
            v.push(("rate.itt_max_ms", "must be >= 100 and >= rate.itt_base_ms".to_string()));
        }
        if !(r.smoothing > 0.0 && r.smoothing <= 1.0) {
            v.push(("rate.smoothing", "must lie in (0, 1]".to_string()));
        }
        if !(r.neighbor_radius_m > 0.0) {
            v.push(("rate.neighbor_radius_m", "must be > 0".to_string()));
        }
        if r.density_interval_ms == 0 {
            v.push(("rate.density_interval_ms", "must be > 0".to_string()));
        }
        let p = &self.range;
        if p.p_min_dbm > p.p_max_dbm {
            v.push((
                "range.p_min_dbm",
                format!("range.p_min_dbm ({}) must be <= range.p_max_dbm ({})", p.p_min_dbm, p.p_max_dbm),
            ));
        }
        if p.u_min_pct >= p.u_max_pct {
            v.push((
                "range.u_min_pct",
                format!("range.u_min_pct ({}) must be < range.u_max_pct ({})", p.u_min_pct, p.u_max_pct),
            ));
        }
        if !(p.eta > 0.0 && p.eta <= 1.0) {
            v.push(("range.eta", "must lie in (0, 1]".to_string()));
        }
        if p.power_interval_ms == 0 {
            v.push(("range.power_interval_ms", "must be > 0".to_string()));
        }
        if self.baseline_itt_ms == 0 {
            v.push(("baseline_itt_ms", "must be > 0".to_string()));
        }
        if self.cbp_window_ms == 0 {
            v.push(("cbp_window_ms", "must be > 0".to_string()));
        }
        if !(self.pte.threshold_m >= 0.0) {
            v.push(("pte.threshold_m", "must be >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.cr_limit.cbp_limit) {
            v.push(("cr_limit.cbp_limit", "must lie in [0, 1]".to_string()));
        }
        if self.cr_limit.table().is_err() {
            v.push(("cr_limit.calibration", "needs >= 1 point with ascending CBP".to_string()));
        }
        v
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DccError {
    #[error("no sensed subchannel slots in the CBP window ending at subframe {0}")]
    NoSensedSlots(u64),
    #[error("CBP window of {window} ms exceeds the {span} ms sensing window")]
    WindowTooLong { window: u32, span: u64 },
}

/// Channel busy percentage over the `cbp_window` subframes before `n`.
/// Unsensed subframes count in neither numerator nor denominator.
pub fn measure_cbp(
    w: &SensingWindow,
    n: SubframeIndex,
    rssi_threshold_dbm: f64,
    cbp_window: u32,
) -> Result<f64, DccError> {
    if cbp_window as u64 > w.span() {
        return Err(DccError::WindowTooLong { window: cbp_window, span: w.span() });
    }
    let threshold_mw = 10f64.powf(rssi_threshold_dbm / 10.0);
    let mut sensed = 0u32;
    let mut busy = 0u32;
    for j in n.0.saturating_sub(cbp_window as u64)..n.0 {
        for s in 0..w.subchannels() {
            if let Some(mw) = w.rssi_mw(j, s) {
                sensed += 1;
                if mw > threshold_mw {
                    busy += 1;
                }
            }
        }
    }
    if sensed == 0 {
        return Err(DccError::NoSensedSlots(n.0));
    }
    Ok(100.0 * busy as f64 / sensed as f64)
}

/// Other vehicles within `radius` of `all[host]`, boundary inclusive.
pub fn count_neighbors<D>(host: usize, all: &[Position], radius: f64, distance: D) -> usize
where
    D: Fn(Position, Position) -> f64,
{
    let me = all[host];
    all.iter().enumerate().filter(|&(i, p)| i != host && distance(me, *p) <= radius).count()
}

/// Single-step memory smoother; `smoothing = 0.5` gives `(new + prev) / 2`.
pub fn smooth_density(n_new: f64, n_prev_smoothed: f64, smoothing: f64) -> f64 {
    smoothing * n_new + (1.0 - smoothing) * n_prev_smoothed
}

/// Inter-transmit time in ms from the smoothed density.
pub fn compute_itt(n_sta_smoothed: f64, cfg: &RateControlConfig) -> f64 {
    let b = cfg.density_coefficient_veh;
    let upper = cfg.itt_max_ms / cfg.itt_base_ms * b;
    if n_sta_smoothed <= b {
        cfg.itt_base_ms
    } else if n_sta_smoothed < upper {
        n_sta_smoothed * cfg.itt_base_ms / b
    } else {
        cfg.itt_max_ms
    }
}

/// Target power `g(CBP)` with CBP in percent.
pub fn power_target(cbp_pct: f64, cfg: &RangeControlConfig) -> f64 {
    if cbp_pct < cfg.u_min_pct {
        cfg.p_max_dbm
    } else if cbp_pct < cfg.u_max_pct {
        cfg.p_min_dbm + (cfg.u_max_pct - cbp_pct) / (cfg.u_max_pct - cfg.u_min_pct) * (cfg.p_max_dbm - cfg.p_min_dbm)
    } else {
        cfg.p_min_dbm
    }
}

/// `p_{k+1} = p_k + η·(g(CBP) − p_k)`.
pub fn update_power(p_k: f64, cbp_pct: f64, cfg: &RangeControlConfig) -> f64 {
    p_k + cfg.eta * (power_target(cbp_pct, cfg) - p_k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub position: Position,
    /// Signed speed along the road, m/s.
    pub velocity_mps: f64,
}

/// State carried in the last broadcast, as neighbours see it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastState {
    pub position: Position,
    pub velocity_mps: f64,
    pub timestamp: SubframeIndex,
}

impl BroadcastState {
    /// Constant-velocity extrapolation to `now`.
    pub fn extrapolate(&self, now: SubframeIndex) -> Position {
        let dt = now.since(self.timestamp) as f64 / 1000.0;
        Position { x: self.position.x + self.velocity_mps * dt, ..self.position }
    }
}

/// Distance between where neighbours believe the host is and where it is.
pub fn update_pte<D>(actual: &KinematicState, last: &BroadcastState, now: SubframeIndex, distance: D) -> f64
where
    D: Fn(Position, Position) -> f64,
{
    distance(last.extrapolate(now), actual.position)
}

/// Per-UE controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct DccState {
    pub n_sta_smoothed: Option<f64>,
    pub itt_ms: u32,
    pub power_dbm: f64,
    /// Last time the application handed a message to the MAC.
    pub last_tx_time: Option<SubframeIndex>,
    pub last_broadcast: Option<BroadcastState>,
    pub cbp_pct: Option<f64>,
}

impl DccState {
    pub fn new(cfg: &DccConfig) -> Self {
        DccState {
            n_sta_smoothed: None,
            itt_ms: cfg.baseline_itt_ms,
            power_dbm: if cfg.enabled { cfg.range.p_max_dbm } else { cfg.baseline_power_dbm },
            last_tx_time: None,
            last_broadcast: None,
            cbp_pct: None,
        }
    }

    /// Folds a new neighbour count into the smoothed density and refreshes
    /// the ITT, rounded to whole milliseconds.
    pub fn observe_density(&mut self, count: usize, cfg: &RateControlConfig) {
        let n = count as f64;
        let smoothed = match self.n_sta_smoothed {
            Some(prev) => smooth_density(n, prev, cfg.smoothing),
            None => n,
        };
        self.n_sta_smoothed = Some(smoothed);
        self.itt_ms = compute_itt(smoothed, cfg).round() as u32;
    }
}

/// ITT timer expired or the tracking error crossed the threshold.
pub fn should_transmit(state: &DccState, pte: f64, now: SubframeIndex, pte_threshold_m: f64) -> bool {
    let timer = match state.last_tx_time {
        Some(t) => now.since(t) >= state.itt_ms as u64,
        None => true,
    };
    timer || pte > pte_threshold_m
}

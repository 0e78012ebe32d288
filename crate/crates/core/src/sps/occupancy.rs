//! Channel-occupancy ratio (CR) and the CBP-driven CR limit.

use super::SpsError;
use crate::units::SubframeIndex;
use serde::{Deserialize, Serialize};

pub const CR_WINDOW_MS: u64 = 1000;

/// Half-open subframe window `[start, end)` used for CR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrWindow {
    pub start: u64,
    pub end: u64,
}

impl CrWindow {
    /// Window ending `future` subframes after `n` (n itself counts as past).
    pub fn around(n: SubframeIndex, future: u64) -> Self {
        let end = n.0 + 1 + future;
        CrWindow { start: end.saturating_sub(CR_WINDOW_MS), end }
    }
}

/// Fraction of the UE's pool it used or reserved over `window`.
///
/// `in_pool(j, i)` and `used(j, i)` are the membership and usage
/// indicators of subchannel `i` in subframe `j`.
pub fn compute_cr<X, T>(
    n: SubframeIndex,
    window: CrWindow,
    subchannels: u16,
    in_pool: X,
    used: T,
) -> Result<f64, SpsError>
where
    X: Fn(u64, u16) -> bool,
    T: Fn(u64, u16) -> bool,
{
    let CrWindow { start, end } = window;
    if end.checked_sub(start) != Some(CR_WINDOW_MS) {
        return Err(SpsError::CrWindowLength { start, end });
    }
    if n.0 < start || n.0 >= end || n.0 - start <= CR_WINDOW_MS / 2 {
        return Err(SpsError::CrWindowPlacement { start, end, n: n.0 });
    }
    let mut pool = 0u64;
    let mut busy = 0u64;
    for j in start..end {
        for i in 0..subchannels {
            if in_pool(j, i) {
                pool += 1;
                if used(j, i) {
                    busy += 1;
                }
            }
        }
    }
    if pool == 0 {
        return Err(SpsError::EmptyPool);
    }
    Ok(busy as f64 / pool as f64)
}

/// Piecewise-linear inverse calibration `f⁻¹: CBP (ratio) → vehicles`.
/// Values outside the table clamp to the end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    points: Vec<(f64, f64)>,
}

impl CalibrationTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SpsError> {
        if points.is_empty() || points.windows(2).any(|p| p[1].0 < p[0].0) {
            return Err(SpsError::BadCalibration);
        }
        Ok(CalibrationTable { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn vehicles(&self, cbp: f64) -> f64 {
        let p = &self.points;
        if cbp <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if cbp <= x1 {
                if x1 == x0 {
                    return y1;
                }
                return y0 + (cbp - x0) / (x1 - x0) * (y1 - y0);
            }
        }
        p[p.len() - 1].1
    }
}

/// Limit on the UE's CR given the measured CBP. Returns 1 (no limit) unless
/// `cbp > cbp_limit`.
pub fn cr_limit(cbp: f64, cbp_limit: f64, f_inv: &CalibrationTable) -> Result<f64, SpsError> {
    for (name, value) in [("cbp", cbp), ("cbp_limit", cbp_limit)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(SpsError::RatioOutOfRange { name, value });
        }
    }
    if cbp <= cbp_limit {
        return Ok(1.0);
    }
    let vehicles = f_inv.vehicles(cbp);
    if vehicles == 0.0 {
        return Err(SpsError::ZeroCalibration { cbp });
    }
    Ok(cbp_limit / vehicles)
}

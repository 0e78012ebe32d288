//! Shared domain types: power units, subframe clock, radio resources and
//! road positions.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

/// Transmit or received power in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PowerDbm(pub f64);

/// Linear power in milliwatts. Always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PowerMw(f64);

impl PowerMw {
    /// Returns `None` for non-positive or non-finite values.
    pub fn new(mw: f64) -> Option<Self> {
        (mw > 0.0 && mw.is_finite()).then_some(PowerMw(mw))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn dbm_to_mw(p: PowerDbm) -> PowerMw {
    PowerMw(10f64.powf(p.0 / 10.0))
}

pub fn mw_to_dbm(p: PowerMw) -> PowerDbm {
    PowerDbm(10.0 * p.0.log10())
}

impl PowerDbm {
    pub fn to_mw(self) -> PowerMw {
        dbm_to_mw(self)
    }
}

impl PowerMw {
    pub fn to_dbm(self) -> PowerDbm {
        mw_to_dbm(self)
    }
}

impl Add for PowerMw {
    type Output = PowerMw;
    fn add(self, rhs: PowerMw) -> PowerMw {
        PowerMw(self.0 + rhs.0)
    }
}

impl fmt::Display for PowerDbm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} dBm", self.0)
    }
}

/// 1 ms subframe counter since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SubframeIndex(pub u64);

impl SubframeIndex {
    pub fn as_ms(self) -> u64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Whole subframes elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: SubframeIndex) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SubframeIndex {
    type Output = SubframeIndex;
    fn add(self, rhs: u64) -> SubframeIndex {
        SubframeIndex(self.0 + rhs)
    }
}

impl Sub<u64> for SubframeIndex {
    type Output = SubframeIndex;
    fn sub(self, rhs: u64) -> SubframeIndex {
        SubframeIndex(self.0 - rhs)
    }
}

impl fmt::Display for SubframeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sf{}", self.0)
    }
}

/// Candidate single-subframe resource: one subframe on one subchannel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Csr {
    pub subframe: SubframeIndex,
    pub subchannel: u16,
}

impl Csr {
    pub fn new(subframe: u64, subchannel: u16) -> Self {
        Csr { subframe: SubframeIndex(subframe), subchannel }
    }
}

/// Vehicle identifier; doubles as the index into the engine's UE table.
pub type UeId = u32;

/// Position on a straight multi-lane road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// Meters along the road.
    pub x: f64,
    pub lane: u16,
    /// Lateral offset in meters, `lane * lane_width`.
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, lane: u16, lane_width_m: f64) -> Self {
        Position { x, lane, y: lane as f64 * lane_width_m }
    }
}

/// Planar Euclidean distance including the lateral lane offset.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dbm_examples() {
        assert_eq!(dbm_to_mw(PowerDbm(0.0)).value(), 1.0);
        assert!((dbm_to_mw(PowerDbm(10.0)).value() - 10.0).abs() < 1e-12);
        // 10^2.3
        assert!((dbm_to_mw(PowerDbm(23.0)).value() - 199.526_231_496_888).abs() < 1e-3);
    }

    #[test]
    fn mw_rejects_non_positive() {
        assert!(PowerMw::new(0.0).is_none());
        assert!(PowerMw::new(-1.0).is_none());
        assert!(PowerMw::new(f64::NAN).is_none());
        assert!(PowerMw::new(1e-12).is_some());
    }

    #[test]
    fn distance_examples() {
        let a = Position::new(10.0, 2, 4.0);
        assert_eq!(distance(a, a), 0.0);
        assert_eq!(distance(Position::new(0.0, 1, 4.0), Position::new(100.0, 1, 4.0)), 100.0);
        let d = distance(Position::new(0.0, 0, 4.0), Position::new(30.0, 1, 4.0));
        assert!((d - 30.265_491_900_843_11).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(p in -120.0f64..40.0) {
            let back = mw_to_dbm(dbm_to_mw(PowerDbm(p))).0;
            let rel = if p == 0.0 { back.abs() } else { ((back - p) / p).abs() };
            prop_assert!(rel < 1e-9 || (back - p).abs() < 1e-12);
        }

        #[test]
        fn mw_round_trip(mw in 1e-12f64..1e4) {
            let back = dbm_to_mw(mw_to_dbm(PowerMw::new(mw).unwrap())).value();
            prop_assert!(((back - mw) / mw).abs() < 1e-9);
        }
    }
}
